from __future__ import annotations # necessary for type-guarding class methods
from typing import Optional, Union, List, Tuple, Dict, Any, Sequence
import typeguard
import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.stats import qmc

from parsl.app.app import python_app
from parsl.dataflow.futures import AppFuture

from relulimit.core import Network, NormKind, Status, SequenceSpec, Layer, \
        InvalidArgument, BoundaryProbeError, induced_matrix_norm, vector_norm, Vector
from relulimit.network import apply_layer, boundary_margin, preactivations
from relulimit.products import DecayModel, ProductConditionReport, \
        DIVERGENCE_THRESHOLD, check_product_conditions, tail_bound
from relulimit.sequences import generator_from_spec
from relulimit.execution import ExecutionContext, Container, \
        EvaluationExecutionDefinition


logger = logging.getLogger(__name__) # logging per module
logger.setLevel(logging.INFO)


DEFAULT_SCHEDULE = (1, 2, 5, 10, 20, 50, 100, 200, 500)
DEFAULT_CHUNK    = EvaluationExecutionDefinition.chunk_size
VERDICT_WINDOW   = 3
INCREASE_FACTOR  = 10.0
NOISE_FLOOR      = 1e-3 # relative to tol; increments below it are not trend
STALL_RATIO      = 0.9 # persistent increments shrink by less than this per step
LATTICE_SIZE     = 33
HALTON_SIZE      = 1000
PROBE_MARGIN     = 1e-9
FIT_SAMPLES      = 50
FIT_RADIUS       = 1e-4
FIT_ATTEMPTS     = 20
FIT_TOLERANCE    = 1e-8


@typeguard.typechecked
def default_grid(d: int) -> Tuple[np.ndarray, Dict[str, Any]]:
    """Regular 33^d lattice for d <= 2, 1000 Halton points otherwise"""
    if d < 1:
        raise InvalidArgument('input dimension must be positive')
    if d <= 2:
        axis = np.linspace(0, 1, LATTICE_SIZE)
        points = np.stack(np.meshgrid(*([axis] * d), indexing='ij'), axis=-1).reshape(-1, d)
        return points, {'kind': 'lattice', 'size': LATTICE_SIZE, 'points': len(points)}
    points = qmc.Halton(d=d, scramble=False).random(HALTON_SIZE)
    return points, {'kind': 'halton', 'points': HALTON_SIZE}


def _resolve_grid(
        d: int,
        grid: Optional[np.ndarray],
        ) -> Tuple[np.ndarray, Dict[str, Any]]:
    if grid is None:
        return default_grid(d)
    points = np.atleast_2d(np.asarray(grid, dtype=np.float64))
    if points.shape[1] != d or len(points) == 0:
        raise InvalidArgument('grid of shape {} for input dimension {}'.format(points.shape, d))
    if np.any(points < 0) or np.any(points > 1):
        raise InvalidArgument('grid points must lie in the unit cube')
    return points, {'kind': 'custom', 'points': len(points)}


def _validate_schedule(schedule: Sequence[int]) -> List[int]:
    schedule = sorted(set(int(n) for n in schedule))
    if len(schedule) == 0 or schedule[0] < 1:
        raise InvalidArgument('depth schedule must hold positive depths')
    return schedule


def _truncate_schedule(generator, schedule: List[int]) -> List[int]:
    """Ends the schedule at the last layer a finite sequence holds"""
    last = generator.available(schedule[-1])
    if last == schedule[-1]:
        return schedule
    logger.warning('{} sequence holds {} layers, schedule cut at that depth'.format(
        generator.kind, last))
    return [n for n in schedule if n < last] + [last]


def _validate_probe(d: int, probe: Optional[Vector]) -> Optional[np.ndarray]:
    if probe is None:
        return None
    probe = np.asarray(probe, dtype=np.float64).reshape(-1)
    if probe.shape != (d,):
        raise InvalidArgument('probe of length {} for input dimension {}'.format(len(probe), d))
    if np.any(probe < 0) or np.any(probe > 1):
        raise InvalidArgument('probe must lie in the unit cube')
    return probe


@typeguard.typechecked
def evaluate_chunk(
        network: Network,
        points: np.ndarray,
        schedule: List[int],
        p: NormKind,
        keep_values: bool = False,
        ) -> Dict[str, Any]:
    """Propagates a chunk once, comparing N_n with N_(n-1) at scheduled n

    Evaluation stops at the first layer where an output exceeds the
    divergence threshold; that depth is reported as the blow-up depth.

    """
    scheduled = set(schedule)
    result = {
            'count': len(points),
            'sup': {},
            'power_sums': {},
            'values': {},
            'blowup': None,
            }
    H = points
    for n, layer in enumerate(network.layers[:max(schedule)], start=1):
        _, following = apply_layer(layer, H)
        if n in scheduled:
            if keep_values:
                result['values'][n] = following.copy()
            if n >= 2:
                diff = following - H
                result['sup'][n] = float(np.max(np.abs(diff)))
                if p != NormKind.LINF:
                    norms = np.linalg.norm(diff, ord=p.ord, axis=1)
                    result['power_sums'][n] = float(np.sum(norms ** p.ord))
        H = following
        if not np.all(np.isfinite(H)) or np.max(np.abs(H)) > DIVERGENCE_THRESHOLD:
            result['blowup'] = n
            break
    result['final'] = H
    return result


@typeguard.typechecked
def layer_statistics(
        network: Network,
        schedule: List[int],
        p: NormKind,
        decay: Optional[DecayModel] = None,
        ) -> Dict[str, List]:
    """Distances |W_n - I|, bias norms and product tail bounds at scheduled n"""
    pnorms = [
            induced_matrix_norm(layer.weight - np.eye(*layer.shape), p)
            for layer in network.layers
            ]
    stats = {'w_dist_identity': [], 'b_norm': [], 'tail_bound': []}
    for n in schedule:
        layer = network.layers[n - 1]
        stats['w_dist_identity'].append(pnorms[n - 1])
        stats['b_norm'].append(vector_norm(layer.bias, p))
        if decay is not None and n >= 2:
            stats['tail_bound'].append(tail_bound(pnorms[1:n], n, decay))
        else:
            stats['tail_bound'].append(None)
    return stats


@typeguard.typechecked
def verdict_from_deltas(
        deltas: Sequence[Optional[float]],
        tol: float,
        blowup: Optional[int] = None,
        ) -> Status:
    if blowup is not None:
        return Status.DIVERGED
    window = [d for d in deltas if d is not None][-VERDICT_WINDOW:]
    if len(window) == 0:
        return Status.UNDECIDED
    if all(d <= tol for d in window):
        for previous, current in zip(window[:-1], window[1:]):
            if current > INCREASE_FACTOR * previous and current > NOISE_FLOOR * tol:
                return Status.UNDECIDED
        return Status.CONVERGED
    if all(d >= tol for d in window):
        # increments above tol that still decay are slow convergence, not divergence
        if all(current >= STALL_RATIO * previous
                for previous, current in zip(window[:-1], window[1:])):
            return Status.DIVERGED
    return Status.UNDECIDED


def _finite_or_none(value: Optional[float]) -> Optional[float]:
    if value is None or not np.isfinite(value):
        return None
    return float(value)


@dataclass
class ConvergenceReport:
    spec           : SequenceSpec
    grid           : Dict[str, Any]
    norm           : str
    tol            : float
    schedule       : List[int]
    deltas         : List[Optional[float]]
    lp_estimates   : List[Optional[float]]
    w_dist_identity: List[float]
    b_norms        : List[float]
    tail_bounds    : List[Optional[float]]
    verdict        : Status
    conditions     : ProductConditionReport
    blowup_depth   : Optional[int] = None
    probe          : Optional[List[float]] = None
    probe_values   : Optional[List[Optional[List[float]]]] = None
    limit          : Optional[List[List[float]]] = None
    truncated      : bool = False

    def as_dict(self) -> Dict[str, Any]:
        return {
                'spec': self.spec.as_dict(),
                'grid': self.grid,
                'norm': self.norm,
                'tol': self.tol,
                'schedule': self.schedule,
                'deltas': self.deltas,
                'lp_estimates': self.lp_estimates,
                'w_dist_identity': self.w_dist_identity,
                'b_norms': self.b_norms,
                'tail_bounds': [_finite_or_none(t) for t in self.tail_bounds],
                'verdict': self.verdict.value,
                'blowup_depth': self.blowup_depth,
                'probe': self.probe,
                'probe_values': self.probe_values,
                'conditions': self.conditions.as_dict(),
                'limit': self.limit,
                'truncated': self.truncated,
                }

    def as_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({
            'n': self.schedule,
            'delta_sup': _column(self.deltas),
            'lp_estimate': _column(self.lp_estimates),
            'w_dist_identity': self.w_dist_identity,
            'b_norm': self.b_norms,
            'tail_bound': _column(self.tail_bounds),
            })
        if self.probe_values is not None:
            width = max((len(v) for v in self.probe_values if v is not None), default=0)
            for j in range(width):
                name = 'limit' if width == 1 else 'limit_{}'.format(j)
                frame[name] = [np.nan if v is None else v[j] for v in self.probe_values]
        return frame


def _column(values: Sequence[Optional[float]]) -> List[float]:
    return [np.nan if v is None else v for v in values]


@typeguard.typechecked
def assemble_report(
        spec: SequenceSpec,
        grid: Dict[str, Any],
        schedule: List[int],
        tol: float,
        p: NormKind,
        stats: Dict[str, List],
        conditions: ProductConditionReport,
        probe: Optional[List[float]] = None,
        probe_chunk: Optional[Dict[str, Any]] = None,
        truncated: bool = False,
        inputs: List[Dict[str, Any]] = [],
        ) -> ConvergenceReport:
    """Reduces chunk results in chunk order"""
    chunks = list(inputs)
    blowups = [chunk['blowup'] for chunk in chunks if chunk['blowup'] is not None]
    blowup = min(blowups) if len(blowups) > 0 else None
    count = sum(chunk['count'] for chunk in chunks)
    deltas, estimates = [], []
    for n in schedule:
        if n == 1 or not all(n in chunk['sup'] for chunk in chunks):
            deltas.append(None)
            estimates.append(None)
            continue
        delta = max(chunk['sup'][n] for chunk in chunks)
        deltas.append(delta)
        if p == NormKind.LINF:
            estimates.append(delta)
        else:
            total = sum(chunk['power_sums'][n] for chunk in chunks)
            estimates.append(float((total / count) ** (1 / p.ord)))
    verdict = verdict_from_deltas(deltas, tol, blowup)
    if truncated and verdict == Status.DIVERGED and blowup is None:
        verdict = Status.UNDECIDED # persistent increments over a finite sequence
    probe_values = None
    if probe_chunk is not None:
        probe_values = [
                probe_chunk['values'][n][0].tolist() if n in probe_chunk['values'] else None
                for n in schedule
                ]
    limit = None
    if verdict == Status.CONVERGED:
        limit = np.concatenate([chunk['final'] for chunk in chunks]).tolist()
    logger.info('{} sequence: {} (final delta {})'.format(
        spec.kind, verdict.value, deltas[-1]))
    return ConvergenceReport(
            spec=spec,
            grid=grid,
            norm=p.value,
            tol=tol,
            schedule=schedule,
            deltas=deltas,
            lp_estimates=estimates,
            w_dist_identity=stats['w_dist_identity'],
            b_norms=stats['b_norm'],
            tail_bounds=stats['tail_bound'],
            verdict=verdict,
            conditions=conditions,
            blowup_depth=blowup,
            probe=probe,
            probe_values=probe_values,
            limit=limit,
            truncated=truncated,
            )


def _prepare_pointwise(
        spec: SequenceSpec,
        grid: Optional[np.ndarray],
        depth_schedule: Sequence[int],
        tol: float,
        probe: Optional[Vector],
        ):
    if tol <= 0:
        raise InvalidArgument('tolerance must be positive')
    generator = generator_from_spec(spec)
    schedule = _truncate_schedule(generator, _validate_schedule(depth_schedule))
    points, description = _resolve_grid(generator.input_dim, grid)
    probe = _validate_probe(generator.input_dim, probe)
    network = generator.realize(max(schedule))
    return generator, schedule, points, description, probe, network


@typeguard.typechecked
def pointwise_experiment(
        spec: SequenceSpec,
        grid: Optional[np.ndarray] = None,
        depth_schedule: Sequence[int] = DEFAULT_SCHEDULE,
        tol: float = 1e-6,
        p: NormKind = NormKind.L1,
        probe: Optional[Vector] = None,
        chunk_size: int = DEFAULT_CHUNK,
        ) -> ConvergenceReport:
    """Tracks sup_x |N_n(x) - N_(n-1)(x)| on a grid along the schedule"""
    generator, schedule, points, description, probe, network = _prepare_pointwise(
            spec, grid, depth_schedule, tol, probe)
    chunks = [
            evaluate_chunk(network, points[i:i + chunk_size], schedule, p)
            for i in range(0, len(points), chunk_size)
            ]
    probe_chunk = None
    if probe is not None:
        probe_chunk = evaluate_chunk(network, probe[None, :], schedule, p, keep_values=True)
    stats = layer_statistics(network, schedule, p, generator.perturbation_decay(p))
    conditions = check_product_conditions(generator, p, max(schedule[-1], 10))
    return assemble_report(
            spec,
            description,
            schedule,
            tol,
            p,
            stats,
            conditions,
            None if probe is None else probe.tolist(),
            probe_chunk,
            truncated=schedule[-1] < max(depth_schedule),
            inputs=chunks,
            )


@typeguard.typechecked
def identity_gap(layer: Layer, p: NormKind) -> float:
    """sup over the unit cube of |W x + b - x|, attained at a vertex"""
    weight = layer.weight - np.eye(*layer.shape)
    m = layer.shape[1]
    if m > 12:
        return induced_matrix_norm(weight, p) * vector_norm(np.ones(m), p) + \
                vector_norm(layer.bias, p)
    vertices = np.array(list(itertools.product([0.0, 1.0], repeat=m)))
    gaps = vertices @ weight.T + layer.bias
    return float(np.max(np.linalg.norm(gaps, ord=p.ord, axis=1)))


def _settles(values: np.ndarray, tol: float) -> bool:
    """Final value below tol and no growth beyond a factor 2 over the final half"""
    if len(values) == 0 or values[-1] > tol:
        return False
    half = values[len(values) // 2:]
    return bool(np.all(half[1:] <= 2 * half[:-1]))


@dataclass
class AuditReport:
    horizon           : int
    tol               : float
    norm              : str
    weight_distances  : List[float]
    bias_norms        : List[float]
    identity_gaps     : List[float]
    weights_converge  : bool
    biases_converge   : bool
    hypotheses_hold   : Optional[bool] = None
    verdict           : Optional[Status] = None

    @property
    def passed(self) -> bool:
        return self.weights_converge and self.biases_converge

    @property
    def contradiction(self) -> bool:
        """A converged verdict while a necessary condition fails"""
        return self.verdict == Status.CONVERGED and not self.passed

    def as_dict(self) -> Dict[str, Any]:
        return {
                'horizon': self.horizon,
                'tol': self.tol,
                'norm': self.norm,
                'weights_converge': self.weights_converge,
                'biases_converge': self.biases_converge,
                'passed': self.passed,
                'hypotheses_hold': self.hypotheses_hold,
                'verdict': None if self.verdict is None else self.verdict.value,
                'contradiction': self.contradiction,
                'weight_distances': self.weight_distances,
                'bias_norms': self.bias_norms,
                'identity_gaps': self.identity_gaps,
                }


@typeguard.typechecked
def necessary_condition_audit(
        spec: SequenceSpec,
        horizon: int,
        tol: float = 1e-6,
        p: NormKind = NormKind.L1,
        verdict: Optional[Status] = None,
        ) -> AuditReport:
    """Checks W_n -> I and b_n -> 0 up to the horizon"""
    if horizon < 10:
        raise InvalidArgument('audit horizon must be at least 10')
    if tol <= 0:
        raise InvalidArgument('tolerance must be positive')
    generator = generator_from_spec(spec)
    layers = generator.realize(generator.available(horizon)).layers
    weights = np.array([
        induced_matrix_norm(layer.weight - np.eye(*layer.shape), p) for layer in layers[1:]
        ])
    biases = np.array([vector_norm(layer.bias, p) for layer in layers])
    decay = generator.perturbation_decay(p)
    report = AuditReport(
            horizon=horizon,
            tol=tol,
            norm=p.value,
            weight_distances=weights.tolist(),
            bias_norms=biases.tolist(),
            identity_gaps=[identity_gap(layer, p) for layer in layers[1:]],
            weights_converge=_settles(weights, tol),
            biases_converge=_settles(biases, tol),
            hypotheses_hold=None if decay is None else bool(
                decay.summable and decay.tail_is_o_one_over_n),
            verdict=verdict,
            )
    if report.contradiction:
        logger.warning('{} sequence converged although a necessary condition fails'.format(
            spec.kind))
    return report


@dataclass
class CoefficientTrace:
    probe       : List[float]
    schedule    : List[int]
    A           : List[List[List[float]]]
    c           : List[List[float]]
    diffs       : List[Optional[float]]
    fit_errors  : List[Optional[float]]
    tol         : float
    fit_radius  : Optional[float] = None

    @property
    def cauchy(self) -> bool:
        window = [d for d in self.diffs if d is not None][-VERDICT_WINDOW:]
        return len(window) > 0 and all(d <= self.tol for d in window)

    @property
    def bounded(self) -> bool:
        return bool(max(np.max(np.abs(c)) for c in self.c) <= DIVERGENCE_THRESHOLD)

    @property
    def fit_agrees(self) -> bool:
        errors = [e for e in self.fit_errors if e is not None]
        return len(errors) > 0 and all(e <= FIT_TOLERANCE for e in errors)

    def as_dict(self) -> Dict[str, Any]:
        return {
                'probe': self.probe,
                'schedule': self.schedule,
                'tol': self.tol,
                'cauchy': self.cauchy,
                'bounded': self.bounded,
                'fit_agrees': self.fit_agrees,
                'fit_radius': self.fit_radius,
                'diffs': self.diffs,
                'fit_errors': self.fit_errors,
                'A': self.A,
                'c': self.c,
                }


def _perturbed_agreement(
        network: Network,
        probe: np.ndarray,
        active: List[np.ndarray],
        schedule: List[int],
        radius: float,
        rng: np.random.Generator,
        ) -> Dict[int, Tuple[np.ndarray, np.ndarray]]:
    """Samples near the probe sharing its pattern, with outputs, per scheduled depth"""
    d = network.input_dim
    X = np.clip(probe + radius * rng.uniform(-1, 1, size=(FIT_SAMPLES, d)), 0.0, 1.0)
    X = np.vstack([probe[None, :], X])
    H = X
    same = np.ones(len(X), dtype=bool)
    scheduled = set(schedule)
    samples = {}
    for n, layer in enumerate(network.layers[:max(schedule)], start=1):
        Z, H = apply_layer(layer, H)
        same &= np.all((Z > 0) == active[n - 1], axis=1)
        if n in scheduled:
            samples[n] = (X[same], H[same])
    return samples


def _fit_error(
        X: np.ndarray,
        Y: np.ndarray,
        probe: np.ndarray,
        A: np.ndarray,
        c: np.ndarray,
        ) -> float:
    design = np.hstack([X - probe, np.ones((len(X), 1))])
    coefficients, *_ = np.linalg.lstsq(design, Y, rcond=None)
    A_fit = coefficients[:-1].T
    c_fit = coefficients[-1] - A_fit @ probe
    return float(max(np.max(np.abs(A_fit - A)), np.max(np.abs(c_fit - c))))


@typeguard.typechecked
def region_coefficient_convergence(
        spec: SequenceSpec,
        probe: Vector,
        depth_schedule: Sequence[int] = DEFAULT_SCHEDULE,
        tol: float = 1e-6,
        p: NormKind = NormKind.L1,
        seed: int = 0,
        ) -> CoefficientTrace:
    """Follows the affine piece (A_n, c_n) of the region holding the probe"""
    generator = generator_from_spec(spec)
    schedule = _truncate_schedule(generator, _validate_schedule(depth_schedule))
    probe = _validate_probe(generator.input_dim, probe)
    network = generator.realize(max(schedule))
    margin = boundary_margin(network, probe)
    if margin < PROBE_MARGIN:
        raise BoundaryProbeError('probe lies within {} of a region boundary'.format(margin))

    active = [z > 0 for z in preactivations(network, probe)]
    scheduled = set(schedule)
    A = np.eye(network.input_dim)
    c = np.zeros(network.input_dim)
    pieces, diffs = {}, {}
    for n, layer in enumerate(network.layers[:max(schedule)], start=1):
        A_next = layer.weight @ A
        c_next = layer.weight @ c + layer.bias
        A_next[~active[n - 1]] = 0.0
        c_next[~active[n - 1]] = 0.0
        if n in scheduled:
            pieces[n] = (A_next, c_next)
            if n >= 2:
                diffs[n] = induced_matrix_norm(A_next - A, p) + vector_norm(c_next - c, p)
        A, c = A_next, c_next

    rng = np.random.default_rng(seed)
    radius = FIT_RADIUS
    for _ in range(FIT_ATTEMPTS):
        samples = _perturbed_agreement(network, probe, active, schedule, radius, rng)
        if all(len(samples[n][0]) > network.input_dim for n in schedule):
            break
        radius /= 2
    fit_errors = []
    for n in schedule:
        X, Y = samples[n]
        if len(X) > network.input_dim:
            fit_errors.append(_fit_error(X, Y, probe, *pieces[n]))
        else:
            fit_errors.append(None)
    return CoefficientTrace(
            probe=probe.tolist(),
            schedule=schedule,
            A=[pieces[n][0].tolist() for n in schedule],
            c=[pieces[n][1].tolist() for n in schedule],
            diffs=[diffs.get(n, None) for n in schedule],
            fit_errors=fit_errors,
            tol=tol,
            fit_radius=radius,
            )


@typeguard.typechecked
def lp_distance_estimate(
        spec: SequenceSpec,
        n: int,
        n_prime: int,
        p: NormKind,
        sample_count: int = 1000,
        seed: int = 0,
        ) -> float:
    """Monte Carlo estimate of |N_n - N_n'| in L^p over the unit cube"""
    if n < 1 or n_prime < n:
        raise InvalidArgument('need 1 <= n <= n_prime')
    if sample_count < 100:
        raise InvalidArgument('lp estimate needs at least 100 samples')
    if n == n_prime:
        return 0.0
    generator = generator_from_spec(spec)
    network = generator.realize(n_prime)
    X = np.random.default_rng(seed).random((sample_count, generator.input_dim))
    H = X
    for depth, layer in enumerate(network.layers, start=1):
        _, H = apply_layer(layer, H)
        if depth == n:
            reference = H
    norms = np.linalg.norm(H - reference, ord=p.ord, axis=1)
    if p == NormKind.LINF:
        return float(np.max(norms))
    return float(np.mean(norms ** p.ord) ** (1 / p.ord))


@typeguard.typechecked
def _app_audit(
        spec: SequenceSpec,
        horizon: int,
        tol: float,
        p: NormKind,
        report: Optional[ConvergenceReport] = None,
        ) -> AuditReport:
    verdict = None if report is None else report.verdict
    return necessary_condition_audit(spec, horizon, tol, p, verdict)


@typeguard.typechecked
class ConvergenceLab(Container):
    """Runs convergence experiments as parsl apps on the evaluation executor"""

    def __init__(
            self,
            context: ExecutionContext,
            tol: float = 1e-6,
            norm: NormKind = NormKind.L1,
            ) -> None:
        super().__init__(context)
        if tol <= 0:
            raise InvalidArgument('tolerance must be positive')
        self.tol  = tol
        self.norm = norm

    def pointwise(
            self,
            spec: SequenceSpec,
            grid: Optional[np.ndarray] = None,
            depth_schedule: Sequence[int] = DEFAULT_SCHEDULE,
            probe: Optional[Vector] = None,
            ) -> AppFuture:
        generator, schedule, points, description, probe, network = _prepare_pointwise(
                spec, grid, depth_schedule, self.tol, probe)
        chunk_size = self.context[EvaluationExecutionDefinition].chunk_size
        evaluate = self.context.apps(ConvergenceLab, 'evaluate_chunk')
        futures = [
                evaluate(network, points[i:i + chunk_size], schedule, self.norm)
                for i in range(0, len(points), chunk_size)
                ]
        probe_future = None
        if probe is not None:
            probe_future = evaluate(
                    network,
                    probe[None, :],
                    schedule,
                    self.norm,
                    keep_values=True,
                    )
        stats = self.context.apps(ConvergenceLab, 'layer_statistics')(
                network,
                schedule,
                self.norm,
                generator.perturbation_decay(self.norm),
                )
        conditions = self.context.apps(ConvergenceLab, 'check_conditions')(
                generator,
                self.norm,
                max(schedule[-1], 10),
                )
        logger.info('submitted {} chunks for a {} sequence'.format(len(futures), spec.kind))
        return self.context.apps(ConvergenceLab, 'assemble_report')(
                spec,
                description,
                schedule,
                self.tol,
                self.norm,
                stats,
                conditions,
                None if probe is None else probe.tolist(),
                probe_future,
                truncated=schedule[-1] < max(depth_schedule),
                inputs=futures,
                )

    def audit(
            self,
            spec: SequenceSpec,
            horizon: int,
            report: Optional[AppFuture] = None,
            ) -> AppFuture:
        return self.context.apps(ConvergenceLab, 'audit')(
                spec,
                horizon,
                self.tol,
                self.norm,
                report,
                )

    def coefficients(
            self,
            spec: SequenceSpec,
            probe: Vector,
            depth_schedule: Sequence[int] = DEFAULT_SCHEDULE,
            seed: int = 0,
            ) -> AppFuture:
        return self.context.apps(ConvergenceLab, 'coefficients')(
                spec,
                probe,
                list(depth_schedule),
                self.tol,
                self.norm,
                seed,
                )

    def lp_distance(
            self,
            spec: SequenceSpec,
            n: int,
            n_prime: int,
            sample_count: int = 1000,
            seed: int = 0,
            ) -> AppFuture:
        return self.context.apps(ConvergenceLab, 'lp_distance')(
                spec,
                n,
                n_prime,
                self.norm,
                sample_count,
                seed,
                )

    def run_family(
            self,
            specs: Sequence[SequenceSpec],
            grid: Optional[np.ndarray] = None,
            depth_schedule: Sequence[int] = DEFAULT_SCHEDULE,
            ) -> List[Tuple[AppFuture, AppFuture]]:
        """Pointwise experiment and necessary-condition audit for every spec"""
        futures = []
        for spec in specs:
            report = self.pointwise(spec, grid, depth_schedule)
            horizon = max(max(depth_schedule), 10)
            futures.append((report, self.audit(spec, horizon, report)))
        return futures

    @staticmethod
    def create_apps(context: ExecutionContext) -> None:
        label = context[EvaluationExecutionDefinition].label
        apps = {
                'evaluate_chunk': evaluate_chunk,
                'layer_statistics': layer_statistics,
                'check_conditions': check_product_conditions,
                'assemble_report': assemble_report,
                'audit': _app_audit,
                'coefficients': region_coefficient_convergence,
                'lp_distance': lp_distance_estimate,
                }
        for name, func in apps.items():
            context.register_app(ConvergenceLab, name, python_app(func, executors=[label]))
