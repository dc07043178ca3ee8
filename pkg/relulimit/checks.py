from __future__ import annotations # necessary for type-guarding class methods
from typing import Optional, Union, List, Any, Dict
import typeguard
import glob
import logging
from dataclasses import dataclass, field
from pathlib import Path

import yaml
import numpy as np

from parsl.app.app import python_app
from parsl.app.futures import DataFuture
from parsl.data_provider.files import File
from parsl.dataflow.futures import AppFuture

from relulimit.core import InvalidArgument
from relulimit.utils import save_yaml, copy_app_future, combine_futures


logger = logging.getLogger(__name__) # logging per module
logger.setLevel(logging.INFO)


FAULTS = ('flip-mask',)
RESOLUTION_MARGIN = 100.0 # bounds the growth of hidden states for fast-decaying families


@dataclass
class CheckResult:
    name  : str
    passed: bool
    detail: Dict[str, Any] = field(default_factory=dict)

    def as_dict(self) -> Dict[str, Any]:
        return {'name': self.name, 'passed': self.passed, 'detail': self.detail}


@typeguard.typechecked
def _update_npasses(npasses: int, result: CheckResult) -> int:
    if result.passed:
        return npasses + 1
    else:
        return npasses
update_npasses = python_app(_update_npasses, executors=['default'])


@typeguard.typechecked
class Check:
    name = None

    def __init__(self) -> None:
        self.nchecks = 0
        self.npasses = copy_app_future(0)

    def __call__(self) -> AppFuture:
        self.nchecks += 1
        result = self.apply_check()
        self.npasses = update_npasses(self.npasses, result)
        return result

    def apply_check(self) -> AppFuture:
        raise NotImplementedError

    def reset(self) -> None:
        self.nchecks = 0
        self.npasses = copy_app_future(0)

    def save(self, path: Union[Path, str], require_done: bool = True) -> DataFuture:
        path = Path(path)
        assert path.is_dir()
        future = save_yaml(
                self.parameters, # property which returns dict of parameters
                outputs=[File(str(path / (self.__class__.__name__ + '.yaml')))],
                ).outputs[0]
        if require_done:
            future.result()
        return future

    @classmethod
    def load(cls, path: Union[Path, str]) -> Check:
        path = Path(path)
        assert path.is_dir()
        path_pars = path / (cls.__name__ + '.yaml')
        assert path_pars.is_file()
        with open(path_pars, 'r') as f:
            pars_dict = yaml.load(f, Loader=yaml.FullLoader)
        return cls(**pars_dict)

    @property
    def parameters(self) -> Dict:
        return {}


@typeguard.typechecked
def _check_norms(npairs: int, max_width: int, seed: int) -> CheckResult:
    import numpy as np
    from relulimit.core import NormKind, ActivationMatrix, induced_matrix_norm
    rng = np.random.default_rng(seed)
    violations = 0
    for _ in range(npairs):
        m = int(rng.integers(1, max_width + 1))
        A = rng.normal(size=(m, m))
        B = rng.normal(size=(m, m))
        mask = ActivationMatrix.from_diagonal(rng.random(m) < 0.5)
        for p in NormKind:
            norm_A = induced_matrix_norm(A, p)
            slack = 1e-12 * (1 + norm_A * induced_matrix_norm(B, p))
            if induced_matrix_norm(A @ B, p) > norm_A * induced_matrix_norm(B, p) + slack:
                violations += 1
            if induced_matrix_norm(mask.dense(), p) > 1:
                violations += 1
            if induced_matrix_norm(mask.apply(A), p) > norm_A * (1 + 1e-12):
                violations += 1
    return CheckResult('norms', violations == 0, {'pairs': npairs, 'violations': violations})
check_norms = python_app(_check_norms, executors=['evaluation'])


@typeguard.typechecked
class NormCheck(Check):
    """Submultiplicativity and contraction by activation matrices"""
    name = 'norms'

    def __init__(self, npairs: int = 200, max_width: int = 6, seed: int = 0) -> None:
        super().__init__()
        self.npairs = npairs
        self.max_width = max_width
        self.seed = seed

    def apply_check(self) -> AppFuture:
        return check_norms(self.npairs, self.max_width, self.seed)

    @property
    def parameters(self) -> Dict:
        return {'npairs': self.npairs, 'max_width': self.max_width, 'seed': self.seed}


@typeguard.typechecked
def _check_representation(
        nnetworks: int,
        nsamples: int,
        max_width: int,
        max_depth: int,
        seed: int,
        fault: Optional[str],
        ) -> CheckResult:
    import numpy as np
    from relulimit.network import random_network, representation_check
    rng = np.random.default_rng(seed)
    hook = None
    if fault == 'flip-mask':
        hook = lambda pattern: pattern.flip(pattern.depth - 1, 0)
    discrepancy = 0.0
    for _ in range(nnetworks):
        d = int(rng.integers(1, 4))
        network = random_network(
                rng,
                d,
                int(rng.integers(1, max_width + 1)),
                int(rng.integers(1, max_depth + 1)),
                )
        samples = rng.random((nsamples, d))
        discrepancy = max(discrepancy, representation_check(network, samples, hook))
    return CheckResult(
            'representation',
            discrepancy <= 1e-10,
            {'networks': nnetworks, 'samples': nsamples, 'discrepancy': discrepancy},
            )
check_representation = python_app(_check_representation, executors=['evaluation'])


@typeguard.typechecked
class RepresentationCheck(Check):
    """Every network agrees with the affine piece of its own activation pattern"""
    name = 'representation'

    def __init__(
            self,
            nnetworks: int = 50,
            nsamples: int = 1000,
            max_width: int = 6,
            max_depth: int = 8,
            seed: int = 0,
            fault: Optional[str] = None,
            ) -> None:
        super().__init__()
        if fault is not None and fault not in FAULTS:
            raise InvalidArgument('fault {} unknown!'.format(fault))
        self.nnetworks = nnetworks
        self.nsamples = nsamples
        self.max_width = max_width
        self.max_depth = max_depth
        self.seed = seed
        self.fault = fault

    def apply_check(self) -> AppFuture:
        return check_representation(
                self.nnetworks,
                self.nsamples,
                self.max_width,
                self.max_depth,
                self.seed,
                self.fault,
                )

    @property
    def parameters(self) -> Dict:
        return {
                'nnetworks': self.nnetworks,
                'nsamples': self.nsamples,
                'max_width': self.max_width,
                'max_depth': self.max_depth,
                'seed': self.seed,
                'fault': self.fault,
                }


@typeguard.typechecked
def _check_regions(
        nnetworks: int,
        max_width: int,
        resolution: int,
        nsamples: int,
        seed: int,
        ) -> CheckResult:
    import numpy as np
    from relulimit.network import random_network
    from relulimit.regions import enumerate_regions, zaslavsky_bound, grid_census, \
            verify_partition
    rng = np.random.default_rng(seed)
    failures = []
    tolerance = np.sqrt(2) / (2 * resolution) + 1e-6
    for index in range(nnetworks):
        m = int(rng.integers(2, max_width + 1))
        network = random_network(rng, 2, m, 1)
        cells = enumerate_regions(network)
        keys = set(cell.pattern.key() for cell in cells)
        if len(cells) > zaslavsky_bound(m, 2):
            failures.append('network {}: {} regions exceed the bound'.format(index, len(cells)))
        census = grid_census(network, resolution)
        if not census <= keys:
            failures.append('network {}: grid found unknown regions'.format(index))
        for cell in cells:
            if cell.pattern.key() not in census:
                if cell.polyhedron.chebyshev_radius() > tolerance:
                    failures.append('network {}: grid missed a wide region'.format(index))
        report = verify_partition(cells, network, rng.random((nsamples, 2)))
        if not report.ok:
            failures.append('network {}: {} orphaned samples'.format(index, report.orphaned))
    return CheckResult('regions', len(failures) == 0, {
        'networks': nnetworks,
        'failures': failures,
        })
check_regions = python_app(_check_regions, executors=['evaluation'])


@typeguard.typechecked
class RegionCheck(Check):
    """Enumerated regions against the hyperplane bound and a grid census"""
    name = 'regions'

    def __init__(
            self,
            nnetworks: int = 20,
            max_width: int = 6,
            resolution: int = 500,
            nsamples: int = 1000,
            seed: int = 0,
            ) -> None:
        super().__init__()
        self.nnetworks = nnetworks
        self.max_width = max_width
        self.resolution = resolution
        self.nsamples = nsamples
        self.seed = seed

    def apply_check(self) -> AppFuture:
        return check_regions(
                self.nnetworks,
                self.max_width,
                self.resolution,
                self.nsamples,
                self.seed,
                )

    @property
    def parameters(self) -> Dict:
        return {
                'nnetworks': self.nnetworks,
                'max_width': self.max_width,
                'resolution': self.resolution,
                'nsamples': self.nsamples,
                'seed': self.seed,
                }


@typeguard.typechecked
def _check_nested(nnetworks: int, max_width: int, max_depth: int, seed: int) -> CheckResult:
    import numpy as np
    from relulimit.network import random_network
    from relulimit.regions import check_nested
    rng = np.random.default_rng(seed)
    failed = []
    for index in range(nnetworks):
        network = random_network(
                rng,
                2,
                int(rng.integers(2, max_width + 1)),
                int(rng.integers(2, max_depth + 1)),
                )
        if not check_nested(network):
            failed.append(index)
    return CheckResult('nested', len(failed) == 0, {'networks': nnetworks, 'failed': failed})
check_nestedness = python_app(_check_nested, executors=['evaluation'])


@typeguard.typechecked
class NestednessCheck(Check):
    """Regions of N_(k+1) refine those of N_k"""
    name = 'nested'

    def __init__(
            self,
            nnetworks: int = 10,
            max_width: int = 3,
            max_depth: int = 3,
            seed: int = 0,
            ) -> None:
        super().__init__()
        self.nnetworks = nnetworks
        self.max_width = max_width
        self.max_depth = max_depth
        self.seed = seed

    def apply_check(self) -> AppFuture:
        return check_nestedness(self.nnetworks, self.max_width, self.max_depth, self.seed)

    @property
    def parameters(self) -> Dict:
        return {
                'nnetworks': self.nnetworks,
                'max_width': self.max_width,
                'max_depth': self.max_depth,
                'seed': self.seed,
                }


@typeguard.typechecked
def _check_tail_lemma(nsequences: int, max_length: int, seed: int) -> CheckResult:
    import numpy as np
    from relulimit.products import verify_tail_lemma
    rng = np.random.default_rng(seed)
    violations = 0
    mismatches = 0
    for _ in range(nsequences):
        a = rng.random(int(rng.integers(1, max_length + 1)))
        p = int(rng.integers(0, len(a) + 1))
        result = verify_tail_lemma(a, p)
        if not result.holds:
            violations += 1
        closed = np.prod(1 + a) - np.prod(1 + a[:p])
        if abs(result.lhs - closed) > 1e-9 * max(1.0, closed):
            mismatches += 1
    return CheckResult('tail_lemma', violations + mismatches == 0, {
        'sequences': nsequences,
        'violations': violations,
        'mismatches': mismatches,
        })
check_tail_lemma = python_app(_check_tail_lemma, executors=['evaluation'])


@typeguard.typechecked
class TailLemmaCheck(Check):
    """Subset-product tail bound, against its closed form"""
    name = 'tail_lemma'

    def __init__(self, nsequences: int = 1000, max_length: int = 12, seed: int = 0) -> None:
        super().__init__()
        self.nsequences = nsequences
        self.max_length = max_length
        self.seed = seed

    def apply_check(self) -> AppFuture:
        return check_tail_lemma(self.nsequences, self.max_length, self.seed)

    @property
    def parameters(self) -> Dict:
        return {
                'nsequences': self.nsequences,
                'max_length': self.max_length,
                'seed': self.seed,
                }


@typeguard.typechecked
def _check_stabilization(nsequences: int, length: int, width: int, seed: int) -> CheckResult:
    import numpy as np
    from relulimit.core import ActivationMatrix, activation_product
    from relulimit.products import stabilization_index
    rng = np.random.default_rng(seed)
    failures = 0
    for _ in range(nsequences):
        masks = [
                ActivationMatrix.from_diagonal(rng.random(width) < 0.95)
                for _ in range(length)
                ]
        N, final = stabilization_index(masks)
        if activation_product(masks[:N]) != final:
            failures += 1
        elif N > 1 and activation_product(masks[:N - 1]) == final:
            failures += 1
    return CheckResult('stabilization', failures == 0, {
        'sequences': nsequences,
        'failures': failures,
        })
check_stabilization = python_app(_check_stabilization, executors=['evaluation'])


@typeguard.typechecked
class StabilizationCheck(Check):
    """Products of activation matrices settle after finitely many factors"""
    name = 'stabilization'

    def __init__(
            self,
            nsequences: int = 1000,
            length: int = 100,
            width: int = 4,
            seed: int = 0,
            ) -> None:
        super().__init__()
        self.nsequences = nsequences
        self.length = length
        self.width = width
        self.seed = seed

    def apply_check(self) -> AppFuture:
        return check_stabilization(self.nsequences, self.length, self.width, self.seed)

    @property
    def parameters(self) -> Dict:
        return {
                'nsequences': self.nsequences,
                'length': self.length,
                'width': self.width,
                'seed': self.seed,
                }


@typeguard.typechecked
def _check_product_bound(nsequences: int, n_max: int, seed: int) -> CheckResult:
    import numpy as np
    from relulimit.core import SequenceSpec, NormKind, Status, induced_matrix_norm
    from relulimit.products import MaskRule, product_limit, tail_bound
    from relulimit.sequences import generator_from_spec
    p = NormKind.L1
    failures = []
    for index in range(nsequences):
        spec = SequenceSpec('identity_perturbation', {
            'width': 3, 'alpha': 2.0, 'scale': 0.5, 'norm': 'l1'}, seed + index)
        generator = generator_from_spec(spec)
        layers = generator.realize(200).layers
        pnorms = [induced_matrix_norm(layer.weight - np.eye(3), p) for layer in layers[1:]]
        masks = MaskRule.random(3, 0.5, seed + index)
        products = {}
        product = np.eye(3)
        for n, layer in enumerate(layers[1:], start=2):
            product = masks(n).apply(layer.weight @ product)
            products[n] = product
        difference = induced_matrix_norm(products[200] - products[100], p)
        bound = tail_bound(pnorms, 20, generator.perturbation_decay(p))
        if difference > bound:
            failures.append('sequence {}: {} exceeds bound {}'.format(index, difference, bound))
        _, status, _ = product_limit(spec, masks, p, 1e-6, n_max)
        if status != Status.CONVERGED:
            failures.append('sequence {}: masked product {}'.format(index, status.value))
    return CheckResult('product_bound', len(failures) == 0, {
        'sequences': nsequences,
        'failures': failures,
        })
check_product_bound = python_app(_check_product_bound, executors=['evaluation'])


@typeguard.typechecked
class ProductBoundCheck(Check):
    """Tail bound on masked products and their convergence"""
    name = 'product_bound'

    def __init__(self, nsequences: int = 20, n_max: int = 500, seed: int = 0) -> None:
        super().__init__()
        self.nsequences = nsequences
        self.n_max = n_max
        self.seed = seed

    def apply_check(self) -> AppFuture:
        return check_product_bound(self.nsequences, self.n_max, self.seed)

    @property
    def parameters(self) -> Dict:
        return {'nsequences': self.nsequences, 'n_max': self.n_max, 'seed': self.seed}


def positive_family(nspecs: int, seed: int) -> List:
    """Identity perturbations with summable perturbations and biases"""
    from relulimit.core import SequenceSpec
    rng = np.random.default_rng(seed)
    specs = []
    for index in range(nspecs):
        width = int(rng.integers(1, 5))
        specs.append(SequenceSpec('identity_perturbation', {
            'width': width,
            'input_dim': int(min(width, 3)),
            'alpha': float(4.0 - rng.uniform(0.0, 3.0)), # (1, 4]
            'scale': float(rng.uniform(0.0, 0.25)),
            'beta': float(4.0 - rng.uniform(0.0, 3.0)),
            'bias_scale': float(rng.uniform(0.0, 0.25)),
            'norm': 'l1',
            }, seed + index))
    return specs


def resolves_within(spec, n: int, tol: float) -> bool:
    """Whether the declared decay bounds every increment from layer n on by tol"""
    pars = spec.params
    largest = max(
            pars['scale'] / n ** pars['alpha'],
            pars['bias_scale'] / n ** pars['beta'],
            )
    return RESOLUTION_MARGIN * largest <= tol


@typeguard.typechecked
def _check_pointwise(nspecs: int, depth: int, seed: int) -> CheckResult:
    from relulimit.core import Status
    from relulimit.experiments import pointwise_experiment, necessary_condition_audit
    failures = []
    schedule = [n for n in (1, 2, 5, 10, 20, 50, 100, 200, 500) if n < depth] + [depth]
    nresolved = 0
    for index, spec in enumerate(positive_family(nspecs, seed)):
        report = pointwise_experiment(spec, depth_schedule=schedule)
        audit = necessary_condition_audit(spec, depth, verdict=report.verdict)
        if not report.conditions.summable or not report.conditions.bias_summable:
            failures.append('spec {}: decay not summable'.format(index))
        if audit.contradiction:
            failures.append('spec {}: audit contradicts verdict'.format(index))
        if resolves_within(spec, schedule[-3], 1e-6):
            nresolved += 1
            if report.verdict != Status.CONVERGED:
                failures.append('spec {}: {}'.format(index, report.verdict.value))
            if not audit.passed or not audit.hypotheses_hold:
                failures.append('spec {}: audit failed'.format(index))
        elif report.verdict == Status.DIVERGED: # slow members
            failures.append('spec {}: diverged'.format(index))
    return CheckResult('pointwise', len(failures) == 0, {
        'specs': nspecs,
        'resolved': nresolved,
        'failures': failures,
        })
check_pointwise = python_app(_check_pointwise, executors=['evaluation'])


@typeguard.typechecked
class PointwiseCheck(Check):
    """Summable perturbations of the identity converge pointwise, or stay undecided"""
    name = 'pointwise'

    def __init__(self, nspecs: int = 20, depth: int = 500, seed: int = 0) -> None:
        super().__init__()
        self.nspecs = nspecs
        self.depth = depth
        self.seed = seed

    def apply_check(self) -> AppFuture:
        return check_pointwise(self.nspecs, self.depth, self.seed)

    @property
    def parameters(self) -> Dict:
        return {'nspecs': self.nspecs, 'depth': self.depth, 'seed': self.seed}


@typeguard.typechecked
def _check_contrapositive(depth: int) -> CheckResult:
    from relulimit.core import SequenceSpec, Status
    from relulimit.experiments import pointwise_experiment, necessary_condition_audit
    constant_bias = SequenceSpec('constant', {'weight': [[1.0]], 'bias': [0.1]})
    growing = SequenceSpec('constant', {'weight': [[2.0]], 'bias': [0.0]})
    detail = {}
    passed = True
    for name, spec, weights, biases in [
            ('constant_bias', constant_bias, True, False),
            ('growing_weight', growing, False, True),
            ]:
        schedule = [n for n in (1, 2, 5, 10, 20, 50, 100, 200, 500) if n < depth] + [depth]
        report = pointwise_experiment(spec, depth_schedule=schedule)
        audit = necessary_condition_audit(spec, depth, verdict=report.verdict)
        detail[name] = {
                'verdict': report.verdict.value,
                'weights_converge': audit.weights_converge,
                'biases_converge': audit.biases_converge,
                }
        passed &= report.verdict == Status.DIVERGED
        passed &= audit.weights_converge == weights and audit.biases_converge == biases
    return CheckResult('contrapositive', bool(passed), detail)
check_contrapositive = python_app(_check_contrapositive, executors=['evaluation'])


@typeguard.typechecked
class ContrapositiveCheck(Check):
    """Sequences violating W_n -> I or b_n -> 0 are flagged divergent"""
    name = 'contrapositive'

    def __init__(self, depth: int = 500) -> None:
        super().__init__()
        self.depth = depth

    def apply_check(self) -> AppFuture:
        return check_contrapositive(self.depth)

    @property
    def parameters(self) -> Dict:
        return {'depth': self.depth}


CHECKS = [
        NormCheck,
        RepresentationCheck,
        RegionCheck,
        NestednessCheck,
        TailLemmaCheck,
        StabilizationCheck,
        ProductBoundCheck,
        PointwiseCheck,
        ContrapositiveCheck,
        ]


@typeguard.typechecked
def default_checks(fault: Optional[str] = None) -> List[Check]:
    checks = []
    for check_cls in CHECKS:
        if check_cls == RepresentationCheck:
            checks.append(check_cls(fault=fault))
        else:
            checks.append(check_cls())
    return checks


@typeguard.typechecked
def run_checks(checks: List[Check], names: Optional[List[str]] = None) -> AppFuture:
    """Submits the selected checks; the future holds their results in order"""
    if names is not None:
        unknown = set(names) - set(check.name for check in checks)
        if len(unknown) > 0:
            raise InvalidArgument('checks {} unknown!'.format(sorted(unknown)))
        checks = [check for check in checks if check.name in names]
    return combine_futures(inputs=[check() for check in checks])


@typeguard.typechecked
def load_checks(path: Union[Path, str]) -> Optional[List[Check]]:
    path = Path(path)
    assert path.is_dir()
    checks = []
    for filename in sorted(glob.glob(str(path) + '/*.yaml')):
        for check_cls in CHECKS + [None]:
            assert check_cls is not None
            if Path(filename).stem == check_cls.__name__:
                break
        checks.append(check_cls.load(path))
    if len(checks) == 0:
        return None
    return checks
