import pytest
import numpy as np

from relulimit.core import ActivationMatrix, NormKind, Status, SequenceSpec, \
        InvalidArgument, ResourceLimitExceeded, make_activation_matrix, \
        induced_matrix_norm
from relulimit.products import DecayModel, MaskRule, partial_product, product_limit, \
        series_limit, tail_bound, verify_tail_lemma, stabilization_index, \
        check_product_conditions, realized_mask_rule
from relulimit.sequences import generator_from_spec


def test_decay_model():
    model = DecayModel('power', 1.0, 2.0)
    assert model.summable
    assert not model.tail_is_o_one_over_n
    assert model.tail(0) == pytest.approx(np.pi ** 2 / 6)
    assert model.tail(1) == pytest.approx(np.pi ** 2 / 6 - 1)
    assert DecayModel('power', 1.0, 3.0).tail_is_o_one_over_n
    assert DecayModel('power', 1.0, 1.0).tail(5) == np.inf
    assert DecayModel('power', 0.0, 0.0).tail(5) == 0.0
    geometric = DecayModel('geometric', 1.0, 0.5)
    assert geometric.tail(1) == pytest.approx(0.5)
    with pytest.raises(InvalidArgument):
        DecayModel('harmonic', 1.0, 1.0)


def test_mask_rule():
    assert MaskRule.identity(3)(7) == ActivationMatrix.identity(3)
    rule = MaskRule.zero_after(2, 3)
    assert rule(3) == ActivationMatrix.identity(2)
    assert rule(4) == ActivationMatrix.zero(2)
    rule = MaskRule.random(4, 0.5, seed=1)
    assert rule(10) == MaskRule.random(4, 0.5, seed=1)(10)
    assert MaskRule.parse('random:0.25', 4, 1).probability == 0.25
    assert MaskRule.parse('zero-after:5', 4).after == 5
    with pytest.raises(InvalidArgument):
        MaskRule.parse('zero-after:k', 4)
    with pytest.raises(InvalidArgument):
        MaskRule.explicit([ActivationMatrix.zero(2)])(2)


def test_partial_product():
    identity = ActivationMatrix.identity(2)
    W1 = np.array([[0.0, 1.0], [1.0, 0.0]])
    W2 = np.diag([2.0, 3.0])
    factors = [(identity, W1), (identity, W2)]
    assert np.allclose(partial_product(factors, 1, 2), [[0.0, 2.0], [3.0, 0.0]])
    assert np.allclose(partial_product(factors, 3, 2), np.eye(2))
    assert np.allclose(partial_product([(identity, np.eye(2))] * 4, 1, 4), np.eye(2))
    masked = [(identity, W1), (make_activation_matrix([1], 2), W2)]
    assert np.allclose(partial_product(masked, 1, 2), [[0.0, 0.0], [3.0, 0.0]])
    with pytest.raises(InvalidArgument):
        partial_product(factors, 0, 2)
    with pytest.raises(InvalidArgument):
        partial_product(factors, 1, 3)


def test_product_identity_weights():
    spec = SequenceSpec('constant', {'weight': np.eye(3).tolist(), 'bias': [0.0] * 3})
    masks = [make_activation_matrix(s, 3) for s in ([0, 1, 2], [0, 1], [1, 2], [0, 1, 2])]
    rule = MaskRule.explicit(masks + [ActivationMatrix.identity(3)] * 40)
    value, status, state = product_limit(spec, rule, NormKind.L1, 1e-9, 40, start=1)
    assert status == Status.CONVERGED
    assert np.allclose(value, make_activation_matrix([1], 3).dense())


def test_finite_sequence():
    spec = SequenceSpec('explicit', {'layers': [{'W': [[1.5]], 'b': [0.1]}] * 12})
    value, status, state = product_limit(spec, MaskRule.identity(1), NormKind.L1, 1e-6, 500)
    assert status == Status.UNDECIDED
    assert state.depth == 12
    assert value[0, 0] == pytest.approx(1.5 ** 11) # W_2 .. W_12
    assert len(state.as_frame()) == 11

    value, status, state = series_limit(spec, MaskRule.identity(1), NormKind.L1, 1e-6, 500)
    assert status == Status.UNDECIDED
    assert state.depth == 12

    report = check_product_conditions(spec, NormKind.L1, 500)
    assert report.horizon == 12
    assert len(report.perturbation_norms) == 11
    assert report.bounded_product_max == pytest.approx(1.5 ** 11)

    single = SequenceSpec('explicit', {'layers': [{'W': [[1.5]], 'b': [0.1]}]})
    report = check_product_conditions(single, NormKind.L1, 10)
    assert report.perturbation_norms == []
    assert report.bounded_product_max == 1.0


def test_product_growth(growing_spec):
    value, status, state = product_limit(
            growing_spec, MaskRule.identity(1), NormKind.L1, 1e-6, 100)
    assert status == Status.DIVERGED
    assert value[0, 0] > 1e12
    assert state.value_norms[-1] == value[0, 0]


def test_product_perturbation():
    spec = SequenceSpec('identity_perturbation', {
        'width': 2, 'alpha': 2.0, 'scale': 0.5, 'norm': 'l1'}, seed=3)
    generator = generator_from_spec(spec)
    for n in range(1, 20):
        assert induced_matrix_norm(generator.perturbation(n), NormKind.L1) <= \
                0.5 / n ** 2 + 1e-12
    p = NormKind.L1
    value, status, state = product_limit(spec, MaskRule.identity(2), p, 1e-6, 2000)
    assert status == Status.CONVERGED
    assert len(state.norm_history) == state.depth - 1

    # recompute from scratch at twice the depth
    depth = state.depth
    product = np.eye(2)
    for n in range(2, 2 * depth + 1):
        product = generator.layer(n).weight @ product
        if n == depth:
            assert np.allclose(product, value, rtol=0, atol=1e-12 * max(1, np.abs(value).max()))
    assert induced_matrix_norm(product - value, p) <= state.tail_bounds[-1]


def test_tail_bound_holds():
    spec = SequenceSpec('identity_perturbation', {
        'width': 3, 'alpha': 2.0, 'scale': 0.5}, seed=11)
    generator = generator_from_spec(spec)
    p = NormKind.L1
    layers = generator.realize(200).layers
    pnorms = [induced_matrix_norm(layer.weight - np.eye(3), p) for layer in layers[1:]]
    rule = MaskRule.random(3, 0.5, seed=11)
    products = {}
    product = np.eye(3)
    for n, layer in enumerate(layers[1:], start=2):
        product = rule(n).apply(layer.weight @ product)
        products[n] = product
    bound = tail_bound(pnorms, 20, generator.perturbation_decay(p))
    for n, n_ in [(50, 100), (50, 200), (100, 200)]:
        assert induced_matrix_norm(products[n_] - products[n], p) <= bound


def test_tail_bound():
    pnorms = [0.5 ** (i - 1) for i in range(2, 61)]
    assert tail_bound(pnorms, 2) == pytest.approx(2 * 0.5 * np.e)
    model = DecayModel('geometric', 2.0, 0.5) # 1 / 2^(i - 1)
    assert tail_bound(pnorms[:10], 2, model) == pytest.approx(2 * 0.5 * np.e)
    assert tail_bound([0.0] * 10, 2) == 0
    assert tail_bound([0.3], 2) == 0 # only |P_2|, the tail starts at 3
    with pytest.raises(InvalidArgument):
        tail_bound([0.3], 1)
    with pytest.raises(InvalidArgument):
        tail_bound([-0.3], 2)


def test_tail_bound_inputs():
    pnorms = [0.25, 0.125]
    expected = 2 * 0.125 * np.exp(0.375)
    assert tail_bound(pnorms, 3) == pytest.approx(expected)
    assert tail_bound(np.array(pnorms), 3) == pytest.approx(expected)
    assert pnorms == [0.25, 0.125] # argument left untouched


def test_series(basel_spec, constant_bias_spec):
    value, status, state = series_limit(
            basel_spec, MaskRule.identity(1), NormKind.L1, 1e-9, 10000)
    assert abs(value[0] - np.pi ** 2 / 6) < 1e-3
    assert status == Status.UNDECIDED # increments 1/n^2 stay above 1e-9
    assert state.depth == 10000

    zero = SequenceSpec('constant', {'weight': [[1.0]], 'bias': [0.0]})
    value, status, _ = series_limit(zero, MaskRule.identity(1), NormKind.L1, 1e-6, 100)
    assert status == Status.CONVERGED
    assert value[0] == 0

    value, status, state = series_limit(
            constant_bias_spec, MaskRule.identity(1), NormKind.L1, 1e-6, 1000)
    assert status == Status.DIVERGED
    assert value[0] == pytest.approx(100.0)
    assert np.allclose(state.diffs, 0.1)


def test_series_recurrence(decaying_spec):
    generator = generator_from_spec(decaying_spec)
    rule = MaskRule.random(2, 0.7, seed=2)
    value, _, state = series_limit(decaying_spec, rule, NormKind.L2, 1e-300, 200)
    c = np.zeros(2)
    for n in range(1, 201):
        layer = generator.layer(n)
        c = rule(n).apply(layer.weight @ c + layer.bias)
    assert np.allclose(value, c, rtol=0, atol=1e-12 * max(1, np.abs(c).max()))


def test_realized_masks(decaying_spec):
    generator = generator_from_spec(decaying_spec)
    network = generator.realize(200)
    x = np.array([0.3, 0.6])
    rule = realized_mask_rule(network, x)
    _, status, _ = product_limit(decaying_spec, rule, NormKind.L1, 1e-6, 200, start=1)
    _, series_status, state = series_limit(decaying_spec, rule, NormKind.L1, 1e-6, 200)
    assert status == Status.CONVERGED
    assert series_status == Status.CONVERGED


def test_verify_tail_lemma():
    result = verify_tail_lemma([0.5, 0.25, 0.125], 1)
    assert result.holds
    assert result.rhs == pytest.approx(0.375 * np.exp(0.875))
    # sets with largest index 2 or 3 (1-based): {2} {3} {1,2} {1,3} {2,3} {1,2,3}
    lhs = 0.25 + 0.125 + 0.5 * 0.25 + 0.5 * 0.125 + 0.25 * 0.125 + 0.5 * 0.25 * 0.125
    assert result.lhs == pytest.approx(lhs)
    result = verify_tail_lemma([0.0] * 5, 2)
    assert result.lhs == 0 and result.rhs == 0 and result.holds
    result = verify_tail_lemma([1.0], 0)
    assert result.lhs == pytest.approx(1.0)
    assert result.rhs == pytest.approx(np.e)

    # sum over sets with largest index above p factorizes
    rng = np.random.default_rng(0)
    for _ in range(100):
        a = rng.random(int(rng.integers(1, 13)))
        for p in range(len(a) + 1):
            result = verify_tail_lemma(a, p)
            assert result.holds
            exact = np.prod(1 + a) - np.prod(1 + a[:p])
            assert result.lhs == pytest.approx(exact)
    with pytest.raises(ResourceLimitExceeded):
        verify_tail_lemma(np.ones(21), 1)
    with pytest.raises(InvalidArgument):
        verify_tail_lemma([-1.0], 0)


def test_stabilization_index():
    identity = ActivationMatrix.identity(3)
    assert stabilization_index([identity] * 5) == (1, identity)
    masks = [make_activation_matrix([0, 1], 3)] + [make_activation_matrix([1, 2], 3)] * 5
    index, final = stabilization_index(masks)
    assert index == 2
    assert final.support == (1,)

    rng = np.random.default_rng(0)
    for _ in range(1000):
        masks = [ActivationMatrix.from_diagonal(rng.random(4) < 0.9) for _ in range(100)]
        index, final = stabilization_index(masks)
        running = masks[0]
        for n, mask in enumerate(masks, start=1):
            running = running & mask
            if n >= index:
                assert running == final
            else:
                assert running != final


def test_product_conditions():
    square = SequenceSpec('identity_perturbation', {'width': 2, 'alpha': 2.0, 'scale': 0.5})
    report = check_product_conditions(square, NormKind.L1, 200)
    assert report.summable
    assert report.tail_o_one_over_n is False
    assert report.hypotheses_hold is False
    assert report.source == 'analytic'
    assert report.tail_products[-1] == pytest.approx(0.5, rel=0.05) # n * tail -> c
    assert len(report.perturbation_norms) == 199
    assert report.bounded_product_max <= report.bounded_product_constant

    cube = SequenceSpec('identity_perturbation', {'width': 2, 'alpha': 3.0, 'scale': 0.5})
    report = check_product_conditions(cube, NormKind.L1, 200)
    assert report.summable and report.tail_o_one_over_n
    assert report.tail_products[-1] < 0.01

    layers = [{'W': [[1.0]], 'b': [0.0]}] * 12
    explicit = SequenceSpec('explicit', {'layers': layers})
    report = check_product_conditions(explicit, NormKind.L1, 12)
    assert report.source == 'empirical only'
    assert report.summable is None
    assert report.hypotheses_hold is None
    assert report.partial_sums[-1] == 0

    zero = SequenceSpec('identity_perturbation', {'width': 2, 'scale': 0.0})
    report = check_product_conditions(zero, NormKind.L2, 10)
    assert report.summable and report.tail_o_one_over_n
    with pytest.raises(InvalidArgument):
        check_product_conditions(zero, NormKind.L2, 9)
