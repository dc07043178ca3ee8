import pytest
from pathlib import Path

from relulimit.core import InvalidArgument, SequenceSpec
from relulimit.checks import NormCheck, RepresentationCheck, RegionCheck, \
        NestednessCheck, TailLemmaCheck, StabilizationCheck, ProductBoundCheck, \
        PointwiseCheck, ContrapositiveCheck, CheckResult, default_checks, run_checks, \
        load_checks, positive_family, resolves_within


def test_norm_check(context):
    check = NormCheck(npairs=20)
    result = check().result()
    assert type(result) == CheckResult
    assert result.passed
    assert result.detail['violations'] == 0
    assert check.nchecks == 1
    assert check.npasses.result() == 1
    check.reset()
    assert check.nchecks == 0
    assert check.npasses.result() == 0


def test_representation_check(context):
    check = RepresentationCheck(nnetworks=5, nsamples=100, max_depth=4)
    assert check().result().passed
    assert check.npasses.result() == 1

    check = RepresentationCheck(nnetworks=5, nsamples=100, max_depth=4, fault='flip-mask')
    result = check().result()
    assert not result.passed
    assert result.detail['discrepancy'] > 1e-10
    assert check.nchecks == 1
    assert check.npasses.result() == 0
    with pytest.raises(InvalidArgument):
        RepresentationCheck(fault='zero-bias')


def test_region_checks(context):
    region = RegionCheck(nnetworks=2, max_width=3, resolution=100, nsamples=200)
    nested = NestednessCheck(nnetworks=2, max_width=2, max_depth=2)
    results = [region(), nested()]
    assert all(future.result().passed for future in results)


def test_product_checks(context):
    futures = [
            TailLemmaCheck(nsequences=50)(),
            StabilizationCheck(nsequences=20, length=50)(),
            ProductBoundCheck(nsequences=2)(),
            ]
    for future in futures:
        result = future.result()
        assert result.passed, result.detail


def test_convergence_checks(context):
    result = PointwiseCheck(nspecs=2, depth=500)().result()
    assert result.passed, result.detail
    result = ContrapositiveCheck(depth=50)().result()
    assert result.passed
    assert result.detail['constant_bias']['verdict'] == 'diverged'
    assert not result.detail['growing_weight']['weights_converge']


def test_positive_family():
    specs = positive_family(5, 3)
    assert len(specs) == 5
    assert len(set(spec.seed for spec in specs)) == 5
    for spec in specs:
        assert 1 < spec.params['alpha'] <= 4
        assert 1 < spec.params['beta'] <= 4
        assert spec.params['input_dim'] <= 3
    assert [s.as_dict() for s in specs] == [s.as_dict() for s in positive_family(5, 3)]


def test_run_checks(context):
    checks = [TailLemmaCheck(nsequences=10), StabilizationCheck(nsequences=5, length=20)]
    results = run_checks(checks).result()
    assert [r.name for r in results] == ['tail_lemma', 'stabilization']
    results = run_checks(checks, ['stabilization']).result()
    assert len(results) == 1
    assert results[0].name == 'stabilization'
    assert checks[0].nchecks == 1
    assert checks[1].nchecks == 2
    with pytest.raises(InvalidArgument):
        run_checks(checks, ['bias'])


def test_default_checks(context):
    checks = default_checks(fault='flip-mask')
    assert [check.name for check in checks] == [
            'norms',
            'representation',
            'regions',
            'nested',
            'tail_lemma',
            'stabilization',
            'product_bound',
            'pointwise',
            'contrapositive',
            ]
    assert checks[1].fault == 'flip-mask'
    assert checks[7].depth >= 10
    assert checks[5].parameters['nsequences'] == 1000
    assert checks[5].parameters['length'] == 100


def test_save_load(context, tmp_path):
    checks = [
            RepresentationCheck(nnetworks=3, fault='flip-mask'),
            ProductBoundCheck(nsequences=4, n_max=100, seed=5),
            ContrapositiveCheck(depth=20),
            ]
    for check in checks:
        check.save(tmp_path)
    assert (tmp_path / 'RepresentationCheck.yaml').is_file()
    loaded = load_checks(tmp_path)
    assert [type(check) for check in loaded] == [
            ContrapositiveCheck,
            ProductBoundCheck,
            RepresentationCheck,
            ] # sorted by file name
    for check in loaded:
        original = [c for c in checks if type(c) == type(check)][0]
        assert check.parameters == original.parameters
    empty = Path(tmp_path) / 'empty'
    empty.mkdir()
    assert load_checks(empty) is None


def test_resolves_within():
    fast = SequenceSpec('identity_perturbation', {
        'alpha': 3.5, 'scale': 0.25, 'beta': 4.0, 'bias_scale': 0.1})
    slow = SequenceSpec('identity_perturbation', {
        'alpha': 1.5, 'scale': 0.25, 'beta': 4.0, 'bias_scale': 0.1})
    assert resolves_within(fast, 200, 1e-6)
    assert not resolves_within(fast, 10, 1e-6)
    assert not resolves_within(slow, 200, 1e-6)


def test_pointwise_slow_family(context):
    result = PointwiseCheck(nspecs=6, depth=200, seed=3)().result()
    assert result.passed, result.detail
