import pytest
import parsl
import numpy as np
from pathlib import Path

from relulimit.core import Layer, Network, SequenceSpec
from relulimit.execution import ExecutionContext, EvaluationExecutionDefinition
from relulimit.utils import get_parsl_config_from_file


def pytest_addoption(parser):
    parser.addoption(
            '--parsl-config',
            action='store',
            #default='local_threadpool',
            help='test',
            )


@pytest.fixture(scope='session')
def parsl_config(request, tmp_path_factory):
    parsl_config_path = Path(request.config.getoption('--parsl-config'))
    return get_parsl_config_from_file(
            parsl_config_path,
            tmp_path_factory.mktemp('parsl_internal'),
            )


@pytest.fixture(scope='session')
def context(parsl_config, tmpdir_factory):
    parsl_config.retries = 0
    parsl.load(parsl_config)
    path = str(tmpdir_factory.mktemp('context_dir'))
    context = ExecutionContext(parsl_config, path=path)
    context.register(EvaluationExecutionDefinition(chunk_size=64))
    yield context
    parsl.clear()


@pytest.fixture
def quadrant_network():
    """Identity layer on R^2 with zero bias: one region in the unit cube"""
    return Network(2, 2, [Layer(np.eye(2), np.zeros(2))])


@pytest.fixture
def diagonal_network():
    """Single hyperplane x_1 = x_2 through the unit square"""
    weight = np.array([[1.0, -1.0], [-1.0, 1.0]])
    return Network(2, 2, [Layer(weight, np.zeros(2))])


@pytest.fixture
def basel_spec():
    """W_n = 1 and b_n = 1 / n^2 on R^1"""
    return SequenceSpec('identity_perturbation', {
        'width': 1,
        'scale': 0.0,
        'alpha': 2.0,
        'bias_scale': 1.0,
        'beta': 2.0,
        'bias_distribution': 'constant',
        })


@pytest.fixture
def identity_spec():
    return SequenceSpec('identity_perturbation', {'width': 2, 'scale': 0.0})


@pytest.fixture
def constant_bias_spec():
    return SequenceSpec('constant', {'weight': [[1.0]], 'bias': [0.1]})


@pytest.fixture
def growing_spec():
    return SequenceSpec('constant', {'weight': [[2.0]], 'bias': [0.0]})


@pytest.fixture
def decaying_spec():
    return SequenceSpec('identity_perturbation', {
        'width': 2,
        'alpha': 3.5,
        'scale': 0.2,
        'beta': 3.5,
        'bias_scale': 0.2,
        }, seed=7)
