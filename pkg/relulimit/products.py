from __future__ import annotations # necessary for type-guarding class methods
from typing import Optional, Union, List, Tuple, Dict, Any, Sequence
import typeguard
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.special import zeta

from relulimit.core import ActivationMatrix, NormKind, Status, SequenceSpec, \
        InvalidArgument, ResourceLimitExceeded, Network, activation_product, \
        induced_matrix_norm, vector_norm, Vector, Matrix
from relulimit.network import forward


logger = logging.getLogger(__name__) # logging per module
logger.setLevel(logging.INFO)


DIVERGENCE_THRESHOLD = 1e12
CAUCHY_WINDOW        = 10
STAGNATION_RATIO     = 0.9
MAX_LEMMA_LENGTH     = 20
LEMMA_TOLERANCE      = 1e-12


@dataclass(frozen=True)
class DecayModel:
    """Symbolic norm sequence scale / n^rate (power) or scale * rate^n (geometric)"""
    kind : str
    scale: float
    rate : float

    def __post_init__(self) -> None:
        if self.kind not in ('power', 'geometric'):
            raise InvalidArgument('decay model {} unknown!'.format(self.kind))
        if self.scale < 0 or self.rate < 0:
            raise InvalidArgument('decay model needs nonnegative scale and rate')

    def value(self, n: int) -> float:
        if self.kind == 'power':
            return self.scale / n ** self.rate
        return self.scale * self.rate ** n

    @property
    def summable(self) -> bool:
        if self.scale == 0:
            return True
        if self.kind == 'power':
            return self.rate > 1
        return self.rate < 1

    @property
    def tail_is_o_one_over_n(self) -> bool:
        """Whether n * sum_{i > n} value(i) tends to zero"""
        if self.scale == 0:
            return True
        if self.kind == 'power':
            return self.rate > 2
        return self.rate < 1

    def tail(self, n: int) -> float:
        """Sum of value(i) over i > n"""
        if self.scale == 0:
            return 0.0
        if not self.summable:
            return np.inf
        if self.kind == 'power':
            return float(self.scale * zeta(self.rate, n + 1))
        return float(self.scale * self.rate ** (n + 1) / (1 - self.rate))


@dataclass(frozen=True)
class MaskRule:
    """Rule n -> I_n supplying the activation matrix of layer n (1-based)"""
    kind       : str = 'identity'
    width      : int = 1
    after      : int = 0
    probability: float = 0.5
    seed       : int = 0
    masks      : Tuple[ActivationMatrix, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in ('identity', 'zero_after', 'random', 'explicit'):
            raise InvalidArgument('mask rule {} unknown!'.format(self.kind))
        if self.kind == 'explicit' and len(self.masks) == 0:
            raise InvalidArgument('explicit mask rule needs at least one mask')
        if not 0 <= self.probability <= 1:
            raise InvalidArgument('mask probability must lie in [0, 1]')

    def __call__(self, n: int) -> ActivationMatrix:
        if n < 1:
            raise InvalidArgument('layer index {} must be positive'.format(n))
        if self.kind == 'identity':
            return ActivationMatrix.identity(self.width)
        if self.kind == 'zero_after':
            if n <= self.after:
                return ActivationMatrix.identity(self.width)
            return ActivationMatrix.zero(self.width)
        if self.kind == 'random':
            rng = np.random.default_rng([self.seed, n])
            return ActivationMatrix.from_diagonal(rng.random(self.width) < self.probability)
        if n > len(self.masks):
            raise InvalidArgument('explicit mask rule holds {} masks, layer {} requested'.format(
                len(self.masks), n))
        return self.masks[n - 1]

    @classmethod
    def identity(cls, width: int) -> MaskRule:
        return cls('identity', width)

    @classmethod
    def zero_after(cls, width: int, after: int) -> MaskRule:
        return cls('zero_after', width, after=after)

    @classmethod
    def random(cls, width: int, probability: float = 0.5, seed: int = 0) -> MaskRule:
        return cls('random', width, probability=probability, seed=seed)

    @classmethod
    def explicit(cls, masks: Sequence[ActivationMatrix]) -> MaskRule:
        return cls('explicit', masks[0].width, masks=tuple(masks))

    @classmethod
    def parse(cls, value: str, width: int, seed: int = 0) -> MaskRule:
        """Reads 'identity', 'random', 'random:P' or 'zero-after:K'"""
        name, _, argument = value.partition(':')
        name = name.replace('-', '_')
        try:
            if name == 'identity':
                return cls.identity(width)
            if name == 'zero_after':
                return cls.zero_after(width, int(argument))
            if name == 'random':
                return cls.random(width, float(argument) if argument else 0.5, seed)
        except ValueError:
            pass
        raise InvalidArgument('mask rule {} unknown!'.format(value))


@typeguard.typechecked
def realized_mask_rule(network: Network, x: Vector) -> MaskRule:
    """Mask rule replaying the activation pattern of x"""
    _, pattern = forward(network, x)
    return MaskRule.explicit(pattern.layers)


@dataclass
class ProductState:
    """Running product W_(start..n) together with its convergence history"""
    value      : np.ndarray
    start      : int
    depth      : int
    norm_history: List[float] = field(default_factory=list)
    diffs      : List[float] = field(default_factory=list)
    value_norms: List[float] = field(default_factory=list)
    tail_bounds: List[Optional[float]] = field(default_factory=list)

    @property
    def certified(self) -> bool:
        return len(self.tail_bounds) > 0 and self.tail_bounds[-1] is not None

    def as_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'n': np.arange(self.start, self.depth + 1),
            'diff_norm': self.diffs,
            'value_norm': self.value_norms,
            'tail_bound': [np.nan if t is None else t for t in self.tail_bounds],
            })


@dataclass
class SeriesState:
    """Running bias series c_n with its convergence history"""
    value      : np.ndarray
    depth      : int
    diffs      : List[float] = field(default_factory=list)
    value_norms: List[float] = field(default_factory=list)

    def as_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'n': np.arange(1, self.depth + 1),
            'diff_norm': self.diffs,
            'value_norm': self.value_norms,
            })


def _cauchy_status(diffs: Sequence[float], value_norm: float, tol: float) -> Status:
    if not np.isfinite(value_norm) or value_norm > DIVERGENCE_THRESHOLD:
        return Status.DIVERGED
    if len(diffs) >= CAUCHY_WINDOW and max(diffs[-CAUCHY_WINDOW:]) <= tol:
        return Status.CONVERGED
    return Status.UNDECIDED


def _stagnates(diffs: Sequence[float], tol: float) -> bool:
    """Increments stay above tol over the final half without decaying"""
    half = np.asarray(diffs[len(diffs) // 2:])
    if len(half) < 4 or np.min(half) < tol:
        return False
    third, last = half[:len(half) // 2], half[len(half) // 2:]
    return bool(np.mean(last) >= STAGNATION_RATIO * np.mean(third))


def _validate_limit_arguments(tol: float, n_max: int) -> None:
    if tol <= 0:
        raise InvalidArgument('tolerance must be positive')
    if n_max < 2:
        raise InvalidArgument('n_max must be at least 2')


@typeguard.typechecked
def tail_bound(
        pnorms: Vector,
        cut: int,
        model: Optional[DecayModel] = None,
        ) -> float:
    """Upper bound on |W_(2..n') - W_(2..n)| valid for all n' >= n = cut

    pnorms[k] holds |P_(k + 2)|, the realized perturbation norms from layer 2
    onwards. Norms beyond the realized ones are taken from the decay model;
    without a model the realized sequence is treated as complete.

    """
    if cut < 2:
        raise InvalidArgument('tail bound cut must be at least 2')
    values = np.asarray(pnorms, dtype=np.float64).reshape(-1)
    if np.any(values < 0):
        raise InvalidArgument('perturbation norms must be nonnegative')
    last = len(values) + 1
    total = float(np.sum(values))
    tail = float(np.sum(values[cut - 1:]))
    if model is not None:
        total += model.tail(last)
        tail += model.tail(max(last, cut))
    return _certificate(tail, total)


def _certificate(tail: float, total: float) -> float:
    if tail == 0:
        return 0.0
    if not np.isfinite(total) or not np.isfinite(tail) or total > 700:
        return np.inf
    return 2 * tail * float(np.exp(total))


@dataclass(frozen=True)
class TailLemmaResult:
    lhs  : float
    rhs  : float
    holds: bool


@typeguard.typechecked
def verify_tail_lemma(a: Vector, p: int) -> TailLemmaResult:
    """Sums a_(i_1) .. a_(i_k) over nonempty index sets with largest index > p"""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    if np.any(a < 0):
        raise InvalidArgument('tail lemma needs nonnegative numbers')
    if p < 0:
        raise InvalidArgument('cut p must be nonnegative')
    n = len(a)
    if n > MAX_LEMMA_LENGTH:
        raise ResourceLimitExceeded('subset enumeration limited to {} numbers'.format(
            MAX_LEMMA_LENGTH))
    lhs = 0.0
    if n > p:
        shifts = np.arange(n)
        chunk = 1 << 14
        for begin in range(1, 1 << n, chunk):
            codes = np.arange(begin, min(begin + chunk, 1 << n))
            members = ((codes[:, None] >> shifts) & 1).astype(bool)
            largest = n - 1 - np.argmax(members[:, ::-1], axis=1)
            products = np.prod(np.where(members, a, 1.0), axis=1)
            lhs += float(np.sum(products[largest >= p]))
    rhs = float(np.sum(a[p:])) * float(np.exp(np.sum(a)))
    return TailLemmaResult(lhs, rhs, bool(lhs <= rhs + LEMMA_TOLERANCE))


@typeguard.typechecked
def stabilization_index(masks: Sequence[ActivationMatrix]) -> Tuple[int, ActivationMatrix]:
    """Shortest prefix whose product equals the product of all masks"""
    final = activation_product(masks)
    running = masks[0]
    for index, mask in enumerate(masks):
        running = running & mask
        if running == final:
            return index + 1, final
    raise AssertionError('running product never reached the final product')


@typeguard.typechecked
def partial_product(
        factors: Sequence[Tuple[ActivationMatrix, Matrix]],
        start: int,
        stop: int,
        ) -> np.ndarray:
    """Ordered product I_stop W_stop ... I_start W_start over 1-based layers

    Later layers multiply on the left; an empty range (stop < start) gives
    the identity of the mask width.

    """
    if len(factors) == 0:
        raise InvalidArgument('partial product needs at least one factor')
    if start < 1 or stop > len(factors) or start > len(factors) + 1 or stop < 0:
        raise InvalidArgument('range [{}, {}] outside of {} factors'.format(
            start, stop, len(factors)))
    width = factors[0][0].width
    if stop < start:
        return np.eye(width)
    value = None
    for mask, matrix in factors[start - 1:stop]:
        matrix = np.asarray(matrix, dtype=np.float64)
        if mask.width != matrix.shape[0]:
            raise InvalidArgument('mask of width {} cannot act on {} rows'.format(
                mask.width, matrix.shape[0]))
        if value is None:
            value = mask.apply(matrix)
        else:
            value = mask.apply(matrix @ value)
    return value


def _generator(seq):
    from relulimit.sequences import get_generator
    return get_generator(seq)


def _last_layer(generator, n: int) -> int:
    """Caps n at the layers a finite sequence holds"""
    last = generator.available(n)
    if last < n:
        logger.warning('{} sequence holds {} layers, stopping before layer {}'.format(
            generator.kind, last, n))
    return last


@typeguard.typechecked
def product_limit(
        seq: Any,
        mask_rule: MaskRule,
        p: NormKind,
        tol: float,
        n_max: int,
        start: int = 2,
        ) -> Tuple[np.ndarray, Status, ProductState]:
    """Iterates W_(start..n) = I_n W_n ... I_start W_start until Cauchy"""
    _validate_limit_arguments(tol, n_max)
    if not 1 <= start <= n_max:
        raise InvalidArgument('start {} outside 1..{}'.format(start, n_max))
    generator = _generator(seq)
    decay = generator.perturbation_decay(p)
    last = _last_layer(generator, n_max)
    columns = generator.input_dim if start == 1 else generator.width
    pnorms = [
            induced_matrix_norm(generator.perturbation(i), p)
            for i in range(2, min(start, last + 1))
            ]
    state = ProductState(
            value=np.eye(columns),
            start=start,
            depth=start - 1,
            norm_history=pnorms,
            )
    total = float(np.sum(pnorms))
    status = Status.UNDECIDED
    for n in range(start, last + 1):
        layer = generator.layer(n)
        value = mask_rule(n).apply(layer.weight @ state.value)
        if n >= 2:
            pnorms.append(induced_matrix_norm(layer.weight - np.eye(*layer.shape), p))
            total += pnorms[-1]
        if value.shape == state.value.shape:
            diff = induced_matrix_norm(value - state.value, p)
        else:
            diff = induced_matrix_norm(value, p)
        state.value = value
        state.depth = n
        state.diffs.append(diff)
        state.value_norms.append(induced_matrix_norm(value, p))
        if decay is not None and n >= 2:
            # cut at the current depth: the remaining tail comes from the model
            remainder = decay.tail(n)
            state.tail_bounds.append(_certificate(remainder, total + remainder))
        else:
            state.tail_bounds.append(None)
        status = _cauchy_status(state.diffs, state.value_norms[-1], tol)
        if status is not Status.UNDECIDED:
            break
    if status is Status.UNDECIDED and last == n_max and _stagnates(state.diffs, tol):
        status = Status.DIVERGED
    logger.info('product from layer {}: {} after {} layers'.format(
        start, status.value, state.depth))
    return state.value, status, state


@typeguard.typechecked
def series_limit(
        seq: Any,
        mask_rule: MaskRule,
        p: NormKind,
        tol: float,
        n_max: int,
        ) -> Tuple[np.ndarray, Status, SeriesState]:
    """Iterates c_n = I_n W_n c_(n-1) + I_n b_n from c_0 = 0"""
    _validate_limit_arguments(tol, n_max)
    generator = _generator(seq)
    last = _last_layer(generator, n_max)
    state = SeriesState(value=np.zeros(generator.input_dim), depth=0)
    status = Status.UNDECIDED
    for n in range(1, last + 1):
        layer = generator.layer(n)
        value = mask_rule(n).apply(layer.weight @ state.value + layer.bias)
        if n == 1:
            diff = vector_norm(value, p)
        else:
            diff = vector_norm(value - state.value, p)
        state.value = value
        state.depth = n
        state.diffs.append(diff)
        state.value_norms.append(vector_norm(value, p))
        status = _cauchy_status(state.diffs, state.value_norms[-1], tol)
        if status is not Status.UNDECIDED:
            break
    if status is Status.UNDECIDED and last == n_max and _stagnates(state.diffs, tol):
        status = Status.DIVERGED
    logger.info('bias series: {} after {} layers'.format(status.value, state.depth))
    return state.value, status, state


@dataclass
class ProductConditionReport:
    horizon                 : int
    norm                    : str
    perturbation_norms      : List[float]
    partial_sums            : List[float]
    summable                : Optional[bool]
    tail_products           : List[float]
    tail_o_one_over_n       : Optional[bool]
    bias_norms              : List[float]
    bias_sup                : float
    bias_partial_sums       : List[float]
    bias_summable           : Optional[bool]
    bounded_product_max     : float
    bounded_product_constant: float
    source                  : str

    @property
    def hypotheses_hold(self) -> Optional[bool]:
        """Summable perturbations with o(1/n) tails and bounded biases"""
        if self.summable is None or self.tail_o_one_over_n is None:
            return None
        return bool(self.summable and self.tail_o_one_over_n and np.isfinite(self.bias_sup))

    def as_dict(self) -> Dict[str, Any]:
        return {
                'horizon': self.horizon,
                'norm': self.norm,
                'source': self.source,
                'summable': self.summable,
                'tail_o_one_over_n': self.tail_o_one_over_n,
                'bias_summable': self.bias_summable,
                'hypotheses_hold': self.hypotheses_hold,
                'bias_sup': self.bias_sup,
                'bounded_product_max': _finite_or_none(self.bounded_product_max),
                'bounded_product_constant': _finite_or_none(self.bounded_product_constant),
                'perturbation_norms': self.perturbation_norms,
                'partial_sums': [_finite_or_none(s) for s in self.partial_sums],
                'tail_products': [_finite_or_none(t) for t in self.tail_products],
                'bias_norms': self.bias_norms,
                'bias_partial_sums': self.bias_partial_sums,
                }


def _finite_or_none(value: float) -> Optional[float]:
    return float(value) if np.isfinite(value) else None


@typeguard.typechecked
def check_product_conditions(
        seq: Any,
        p: NormKind,
        horizon: int,
        ) -> ProductConditionReport:
    """Empirical and analytic checks of the product convergence hypotheses

    Verdicts on summability and on the o(1/n) tails come from the decay model
    the generator declares; explicit sequences carry no model, in which case
    only the realized partial sums are reported.

    """
    if horizon < 10:
        raise InvalidArgument('horizon must be at least 10')
    generator = _generator(seq)
    decay = generator.perturbation_decay(p)
    bias_decay = generator.bias_decay(p)

    horizon = _last_layer(generator, horizon)
    layers = generator.realize(horizon).layers
    pnorms = np.array([
        induced_matrix_norm(layer.weight - np.eye(*layer.shape), p) for layer in layers[1:]
        ])
    bnorms = np.array([vector_norm(layer.bias, p) for layer in layers])
    wnorms = np.array([induced_matrix_norm(layer.weight, p) for layer in layers[1:]])
    extra = decay.tail(horizon) if decay is not None else 0.0
    tails = np.cumsum(pnorms[::-1])[::-1] - pnorms + extra # tail after index n
    tail_products = np.arange(2, horizon + 1) * tails

    # max over 2 <= i <= n <= horizon of prod_(j=i..n) |W_j|, in log space
    logs = np.concatenate([[0.0], np.cumsum(np.log(np.maximum(wnorms, 1e-300)))])
    if len(wnorms) == 0:
        bounded_max = 1.0 # empty product
    else:
        best = float(np.max(logs[1:] - np.minimum.accumulate(logs[:-1])))
        bounded_max = float(np.exp(best)) if best < 700 else np.inf
    total = float(np.sum(pnorms)) + extra
    return ProductConditionReport(
            horizon=horizon,
            norm=p.value,
            perturbation_norms=pnorms.tolist(),
            partial_sums=np.cumsum(pnorms).tolist(),
            summable=None if decay is None else decay.summable,
            tail_products=tail_products.tolist(),
            tail_o_one_over_n=None if decay is None else decay.tail_is_o_one_over_n,
            bias_norms=bnorms.tolist(),
            bias_sup=float(np.max(bnorms)),
            bias_partial_sums=np.cumsum(bnorms).tolist(),
            bias_summable=None if bias_decay is None else bias_decay.summable,
            bounded_product_max=bounded_max,
            bounded_product_constant=float(np.exp(total)) if np.isfinite(total) else np.inf,
            source='empirical only' if decay is None else 'analytic',
            )
