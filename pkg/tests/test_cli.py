import pytest
import json
import numpy as np

from relulimit.core import Layer, Network, SequenceSpec
from relulimit.cli import main, build_parser, config_from_args, RunConfig, EXIT_OK, \
        EXIT_FAILED, EXIT_INVALID, EXIT_RESOURCE
from relulimit.core import InvalidArgument


def _read(path):
    with open(path, 'r') as f:
        return json.load(f)


def test_parser():
    args = build_parser().parse_args([
        'gen', '--kind', 'identity_perturbation', '--param', 'alpha=3',
        '--param', 'distribution=sparse-one-entry', '--depth', '4',
        ])
    config = config_from_args(args)
    assert config.params == {'alpha': 3, 'distribution': 'sparse-one-entry'}
    assert config.depth == 4
    assert config.norm == 'l1'
    assert config.depths == [1, 2, 5, 10, 20, 50, 100, 200, 500]
    args = build_parser().parse_args(['products', '--depths', '1', '3', '--n-max', '50'])
    assert config_from_args(args).depths == [1, 3]
    with pytest.raises(SystemExit):
        build_parser().parse_args(['gen', '--norm', 'fro'])
    with pytest.raises(InvalidArgument):
        RunConfig(command='train')


def test_gen(context, tmp_path):
    argv = [
            'gen', '--kind', 'constant', '--param', 'weight=[[1.0, 0.0], [0.0, 1.0]]',
            '--param', 'bias=[0.1, 0.0]', '--depth', '3',
            ]
    assert main(argv + ['--out', str(tmp_path / 'a')]) == EXIT_OK
    network = Network.load(tmp_path / 'a' / 'network.json')
    assert network.depth == 3
    assert network.layers[2] == Layer(np.eye(2), [0.1, 0.0])
    spec = SequenceSpec.load(tmp_path / 'a' / 'spec.json')
    assert spec.kind == 'constant'
    assert (tmp_path / 'a' / 'run_config.yaml').is_file()

    assert main(argv + ['--out', str(tmp_path / 'b')]) == EXIT_OK
    for name in ['network.json', 'spec.json', 'run_config.yaml']:
        assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'b' / name).read_bytes()

    # replay from the persisted config
    argv = ['gen', '--config', str(tmp_path / 'a' / 'run_config.yaml')]
    assert main(argv + ['--out', str(tmp_path / 'c')]) == EXIT_OK
    for name in ['network.json', 'spec.json']:
        assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'c' / name).read_bytes()


def test_gen_invalid(context, tmp_path):
    argv = [
            'gen', '--kind', 'identity_perturbation', '--param', 'alpha=-1',
            '--depth', '3', '--out', str(tmp_path),
            ]
    assert main(argv) == EXIT_INVALID
    assert not (tmp_path / 'network.json').exists()
    assert main(['gen', '--kind', 'constant', '--out', str(tmp_path)]) == EXIT_INVALID
    assert main(['gen', '--spec', str(tmp_path / 'none.json'), '--depth', '2',
        '--out', str(tmp_path)]) == EXIT_INVALID


def test_eval(context, tmp_path):
    network = Network(1, 1, [Layer([[2.0]], [-1.0])])
    network.save(tmp_path / 'network.json')
    with open(tmp_path / 'points.json', 'w') as f:
        json.dump([[0.25], [1.0]], f)
    assert main([
        'eval', '--network', str(tmp_path / 'network.json'),
        '--points', str(tmp_path / 'points.json'), '--out', str(tmp_path / 'out'),
        ]) == EXIT_OK
    data = _read(tmp_path / 'out' / 'eval.json')
    assert data['outputs'] == [[0.0], [1.0]]
    assert data['patterns'] == [[[]], [[0]]]
    assert data['representation_discrepancy'] == 0.0
    assert 'mapped' not in data


def test_regions(context, tmp_path):
    network = Network(2, 2, [Layer(np.eye(2), [-0.5, -0.5])])
    network.save(tmp_path / 'quadrants.json')
    out = tmp_path / 'out'
    assert main(['regions', '--network', str(tmp_path / 'quadrants.json'),
        '--out', str(out)]) == EXIT_OK
    data = _read(out / 'regions.json')
    assert data['count'] == 4
    assert data['bound'] == 4
    assert data['nested'] is None
    assert [cell['pattern'] for cell in data['cells']] == [[[]], [[0]], [[0, 1]], [[1]]]

    shifted = Network(2, 2, [Layer(np.eye(2), [0.5, 0.5])])
    shifted.save(tmp_path / 'shifted.json')
    assert main(['regions', '--network', str(tmp_path / 'shifted.json'),
        '--out', str(out)]) == EXIT_OK
    assert _read(out / 'regions.json')['count'] == 1

    wide = Network(2, 9, [Layer(np.ones((9, 2)), np.zeros(9))])
    wide.save(tmp_path / 'wide.json')
    assert main(['regions', '--network', str(tmp_path / 'wide.json'),
        '--out', str(out)]) == EXIT_RESOURCE


def test_products(context, tmp_path):
    spec = SequenceSpec('identity_perturbation', {'width': 2, 'alpha': 2.0, 'scale': 0.5})
    spec.save(tmp_path / 'spec.json')
    out = tmp_path / 'out'
    assert main(['products', '--spec', str(tmp_path / 'spec.json'), '--mask-rule',
        'random:0.5', '--n-max', '200', '--out', str(out)]) == EXIT_OK
    data = _read(out / 'products.json')
    assert data['product']['status'] == 'converged'
    assert data['conditions']['summable']
    assert data['conditions']['tail_o_one_over_n'] is False
    assert (out / 'products.csv').read_text().startswith('n,')
    assert (out / 'series.csv').is_file()


def test_converge(context, tmp_path, basel_spec, constant_bias_spec, identity_spec):
    basel_spec.save(tmp_path / 'basel.json')
    out = tmp_path / 'basel'
    assert main([
        'converge', '--spec', str(tmp_path / 'basel.json'), '--tol', '1e-3',
        '--depths', '1', '10', '100', '1000', '10000', '--probe', '0.5',
        '--out', str(out),
        ]) == EXIT_OK
    report = _read(out / 'report.json')
    assert report['verdict'] == 'converged'
    assert abs(report['probe_values'][-1][0] - (0.5 + np.pi ** 2 / 6)) < 1e-3
    assert _read(out / 'audit.json')['passed']
    coefficients = _read(out / 'coefficients.json')
    assert abs(coefficients['c'][-1][0] - np.pi ** 2 / 6) < 1e-3
    lines = (out / 'trace.csv').read_text().split('\n')
    assert lines[0].split(',')[:2] == ['n', 'delta_sup']

    constant_bias_spec.save(tmp_path / 'constant.json')
    out = tmp_path / 'constant'
    assert main(['converge', '--spec', str(tmp_path / 'constant.json'),
        '--depths', '1', '2', '5', '10', '20', '50', '--out', str(out)]) == EXIT_OK
    assert _read(out / 'report.json')['verdict'] == 'diverged'
    audit = _read(out / 'audit.json')
    assert not audit['biases_converge']
    assert not audit['contradiction']

    identity_spec.save(tmp_path / 'identity.json')
    out = tmp_path / 'identity'
    assert main(['converge', '--spec', str(tmp_path / 'identity.json'),
        '--out', str(out)]) == EXIT_OK
    report = _read(out / 'report.json')
    assert report['verdict'] == 'converged'
    assert report['schedule'][-1] == 500
    assert not (out / 'coefficients.json').exists()


def test_verify(context, tmp_path):
    out = tmp_path / 'verify'
    assert main(['verify', '--filter', 'norms', 'stabilization', '--out', str(out)]) == EXIT_OK
    data = _read(out / 'verify.json')
    assert data['passed']
    assert [r['name'] for r in data['results']] == ['norms', 'stabilization']
    assert (out / 'checks' / 'NormCheck.yaml').is_file()

    out = tmp_path / 'fault'
    assert main(['verify', '--filter', 'representation', '--fault', 'flip-mask',
        '--out', str(out)]) == EXIT_FAILED
    data = _read(out / 'verify.json')
    assert not data['passed']


def test_converge_repeatable(context, tmp_path, decaying_spec):
    decaying_spec.save(tmp_path / 'spec.json')
    argv = ['converge', '--spec', str(tmp_path / 'spec.json'), '--depths', '1', '10', '50',
            '--probe', '0.3', '0.6']
    assert main(argv + ['--out', str(tmp_path / 'a')]) == EXIT_OK
    assert main(argv + ['--out', str(tmp_path / 'b')]) == EXIT_OK
    for name in ['report.json', 'trace.csv', 'audit.json']:
        assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'b' / name).read_bytes()


def test_finite_sequence(context, tmp_path):
    spec = SequenceSpec('explicit', {'layers': [{'W': [[1.5]], 'b': [0.1]}] * 12})
    spec.save(tmp_path / 'spec.json')
    out = tmp_path / 'products'
    assert main(['products', '--spec', str(tmp_path / 'spec.json'), '--out', str(out)]) == EXIT_OK
    data = _read(out / 'products.json')
    assert data['product']['status'] == 'undecided'
    assert data['product']['depth'] == 12
    assert data['conditions']['horizon'] == 12

    out = tmp_path / 'converge'
    assert main(['converge', '--spec', str(tmp_path / 'spec.json'), '--out', str(out)]) == EXIT_OK
    report = _read(out / 'report.json')
    assert report['verdict'] == 'undecided'
    assert report['truncated']
    assert report['schedule'][-1] == 12
