from __future__ import annotations # necessary for type-guarding class methods
from typing import Optional, Union, List, Tuple, Dict, Any, Sequence, Set
import typeguard
import math
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from relulimit.core import Network, ActivationMatrix, ActivationPattern, \
        InvalidArgument, ResourceLimitExceeded, FeasibilityError, Matrix, Vector
from relulimit.network import AffinePiece, apply_layer, forward, preactivations


logger = logging.getLogger(__name__) # logging per module
logger.setLevel(logging.INFO)


EPSILON         = 1e-9  # minimal slack of a certified interior point
MAX_INPUT_DIM   = 3
MAX_WIDTH       = 8
MAX_DEPTH       = 6
LP_OPTIONS      = {
        'primal_feasibility_tolerance': 1e-10,
        'dual_feasibility_tolerance': 1e-10,
        }


@dataclass(frozen=True)
class HalfSpace:
    """Constraint a.x + beta > 0 (strict) or a.x + beta <= 0 (non-strict)"""
    normal: Tuple[float, ...]
    offset: float
    strict: bool

    def value(self, x: Vector) -> float:
        return float(np.dot(self.normal, x) + self.offset)

    def margin(self, x: Vector) -> float:
        """Signed slack of x; positive means strictly inside"""
        value = self.value(x)
        return value if self.strict else -value

    def contains(self, x: Vector) -> bool:
        value = self.value(x)
        return value > 0 if self.strict else value <= 0

    @property
    def is_constant(self) -> bool:
        return not any(self.normal)

    def constant_holds(self) -> bool:
        assert self.is_constant
        return self.offset > 0 if self.strict else self.offset <= 0

    def as_dict(self) -> Dict[str, Any]:
        return {'normal': list(self.normal), 'offset': self.offset, 'strict': self.strict}

    @classmethod
    def from_row(cls, row: np.ndarray, offset: float, strict: bool) -> HalfSpace:
        return cls(tuple(float(a) for a in row), float(offset), strict)


class Polyhedron:
    """Intersection of half-spaces with the unit cube [0, 1]^d

    Nonemptiness means a certified interior point: every non-constant
    constraint holds with slack at least EPSILON at the returned witness.

    """

    def __init__(
            self,
            dim: int,
            constraints: Sequence[HalfSpace] = (),
            candidate: Optional[np.ndarray] = None,
            ) -> None:
        self.dim         = dim
        self.constraints = tuple(constraints)
        self.candidate   = candidate
        self._certified  = False
        self.witness: Optional[np.ndarray] = None
        self.margin : Optional[float] = None

    def extend(self, halfspace: HalfSpace) -> Polyhedron:
        if self._certified and self.witness is not None:
            candidate = self.witness
        else:
            candidate = None
        return Polyhedron(self.dim, self.constraints + (halfspace,), candidate)

    def contains(self, x: Vector) -> bool:
        x = np.asarray(x, dtype=np.float64)
        if np.any(x < 0) or np.any(x > 1):
            return False
        return all(h.contains(x) for h in self.constraints)

    def margin_at(self, x: Vector) -> float:
        margins = [h.margin(x) for h in self.constraints if not h.is_constant]
        return min(margins, default=1.0)

    def _constants_hold(self) -> bool:
        return all(h.constant_holds() for h in self.constraints if h.is_constant)

    def _system(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Rows written as s * (a.x + beta) >= slack with s = +1 (strict) or -1"""
        rows = [h for h in self.constraints if not h.is_constant]
        if len(rows) == 0:
            return np.zeros((0, self.dim)), np.zeros(0), np.zeros(0)
        normals = np.array([h.normal for h in rows])
        offsets = np.array([h.offset for h in rows])
        signs   = np.array([1.0 if h.strict else -1.0 for h in rows])
        return normals, offsets, signs

    def certify(self, label: str = '') -> bool:
        if self._certified:
            return self.witness is not None
        self._certified = True
        if not self._constants_hold():
            return False
        if self.candidate is not None and self.margin_at(self.candidate) >= EPSILON:
            self.witness = np.array(self.candidate)
            self.margin  = self.margin_at(self.witness)
            return True
        normals, offsets, signs = self._system()
        if len(offsets) == 0:
            self.witness = np.full(self.dim, 0.5)
            self.margin  = 1.0
            return True

        # maximize t subject to s (a.x + beta) >= t, t <= 1 and x in the cube
        d = self.dim
        A_ub = np.hstack([-signs[:, None] * normals, np.ones((len(offsets), 1))])
        b_ub = signs * offsets
        cost = np.zeros(d + 1)
        cost[-1] = -1.0
        bounds = [(0.0, 1.0)] * d + [(None, 1.0)]
        result = linprog(
                cost,
                A_ub=A_ub,
                b_ub=b_ub,
                bounds=bounds,
                method='highs',
                options=LP_OPTIONS,
                )
        if result.status == 2:
            return False
        if result.status != 0:
            raise FeasibilityError('LP for region {} failed: {}'.format(label, result.message))
        x = np.clip(result.x[:d], 0.0, 1.0)
        margin = self.margin_at(x)
        if margin < EPSILON:
            return False
        self.witness = x
        self.margin  = margin
        return True

    def chebyshev_radius(self) -> float:
        """Radius of the largest Euclidean ball inside the closed polyhedron"""
        if not self._constants_hold():
            return 0.0
        normals, offsets, signs = self._system()
        d = self.dim
        scale = np.linalg.norm(normals, axis=1) if len(offsets) > 0 else np.zeros(0)
        A_ub = np.vstack([
            np.hstack([-signs[:, None] * normals, scale[:, None]]),
            np.hstack([-np.eye(d), np.ones((d, 1))]),
            np.hstack([np.eye(d), np.ones((d, 1))]),
            ])
        b_ub = np.concatenate([signs * offsets, np.zeros(d), np.ones(d)])
        cost = np.zeros(d + 1)
        cost[-1] = -1.0
        bounds = [(None, None)] * d + [(0.0, None)]
        result = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method='highs')
        if result.status != 0:
            return 0.0
        return float(result.x[-1])


@dataclass(eq=False)
class RegionCell:
    pattern   : ActivationPattern
    polyhedron: Polyhedron
    piece     : AffinePiece

    @property
    def witness(self) -> np.ndarray:
        return self.polyhedron.witness

    def as_dict(self) -> Dict[str, Any]:
        return {
                'pattern': self.pattern.as_list(),
                'witness': self.witness.tolist(),
                'margin': self.polyhedron.margin,
                'A': self.piece.A.tolist(),
                'c': self.piece.c.tolist(),
                'constraints': [h.as_dict() for h in self.polyhedron.constraints],
                }


@dataclass
class PartitionReport:
    total   : int
    matched : int
    boundary: int
    orphaned: int
    orphans : List[List[float]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.orphaned == 0

    def as_dict(self) -> Dict[str, Any]:
        return {
                'total': self.total,
                'matched': self.matched,
                'boundary': self.boundary,
                'orphaned': self.orphaned,
                'orphans': self.orphans,
                }


@dataclass
class _Branch:
    masks     : Tuple[ActivationMatrix, ...]
    polyhedron: Polyhedron
    A         : np.ndarray
    c         : np.ndarray


def _check_guardrails(network: Network, depth: int) -> None:
    if network.input_dim > MAX_INPUT_DIM or network.width > MAX_WIDTH or depth > MAX_DEPTH:
        raise ResourceLimitExceeded(
                'region enumeration supports d <= {}, m <= {} and depth <= {} '
                '(got d={}, m={}, depth={})'.format(
                    MAX_INPUT_DIM, MAX_WIDTH, MAX_DEPTH,
                    network.input_dim, network.width, depth))


def _split(branch: _Branch, layer_index: int, network: Network) -> List[_Branch]:
    layer = network.layers[layer_index]
    M = layer.weight @ branch.A
    v = layer.weight @ branch.c + layer.bias
    partial = [(0, branch.polyhedron)]
    for j in range(network.width):
        refined = []
        for bits, polyhedron in partial:
            for active in (True, False):
                child = polyhedron.extend(HalfSpace.from_row(M[j], v[j], strict=active))
                label = '{}:{}:{:b}'.format(layer_index + 1, j, bits)
                if child.certify(label):
                    refined.append((bits | (1 << j) if active else bits, child))
        partial = refined
    children = []
    for bits, polyhedron in partial:
        mask = ActivationMatrix(network.width, bits)
        children.append(_Branch(
            branch.masks + (mask,),
            polyhedron,
            mask.apply(M),
            mask.apply(v),
            ))
    return children


def _to_cell(branch: _Branch) -> RegionCell:
    pattern = ActivationPattern(branch.masks)
    return RegionCell(pattern, branch.polyhedron, AffinePiece(branch.A, branch.c, pattern))


@typeguard.typechecked
def enumerate_frontiers(network: Network, depth: Optional[int] = None) -> List[List[RegionCell]]:
    """Cells of every prefix N_1 .. N_depth, each list in canonical order"""
    depth = network.depth if depth is None else depth
    if not 1 <= depth <= network.depth:
        raise InvalidArgument('depth {} outside 1..{}'.format(depth, network.depth))
    _check_guardrails(network, depth)
    root = Polyhedron(network.input_dim)
    assert root.certify()
    frontier = [_Branch((), root, np.eye(network.input_dim), np.zeros(network.input_dim))]
    frontiers = []
    for k in range(depth):
        frontier = [child for branch in frontier for child in _split(branch, k, network)]
        cells = sorted((_to_cell(b) for b in frontier), key=lambda cell: cell.pattern.key())
        logger.info('depth {}: {} regions'.format(k + 1, len(cells)))
        frontiers.append(cells)
    return frontiers


@typeguard.typechecked
def enumerate_regions(network: Network, depth: Optional[int] = None) -> List[RegionCell]:
    return enumerate_frontiers(network, depth)[-1]


@typeguard.typechecked
def zaslavsky_bound(m: int, d: int) -> int:
    """Maximal number of regions cut out by m hyperplanes in R^d"""
    if m < 1 or d < 1:
        raise InvalidArgument('zaslavsky bound needs m >= 1 and d >= 1')
    return sum(math.comb(m, k) for k in range(min(d, m) + 1))


@typeguard.typechecked
def region_count_bound(m: int, d: int, depth: int = 1) -> int:
    """Crude bound for stacked layers: each layer refines every cell at most this much"""
    if depth < 1:
        raise InvalidArgument('depth must be positive')
    return zaslavsky_bound(m, d) ** depth


@typeguard.typechecked
def check_nested(network: Network, depth: Optional[int] = None) -> bool:
    depth = network.depth if depth is None else depth
    if depth < 2:
        raise InvalidArgument('nestedness needs a network of depth >= 2')
    frontiers = enumerate_frontiers(network, depth)
    for k in range(1, depth):
        parents = {cell.pattern.key(): cell for cell in frontiers[k - 1]}
        for child in frontiers[k]:
            parent = parents.get(child.pattern.prefix(k).key())
            if parent is None:
                logger.warning('cell {} has no parent at depth {}'.format(
                    child.pattern.as_list(), k))
                return False
            n = len(parent.polyhedron.constraints)
            if child.polyhedron.constraints[:n] != parent.polyhedron.constraints:
                logger.warning('cell {} does not refine its parent'.format(
                    child.pattern.as_list()))
                return False
            if not parent.polyhedron.contains(child.witness):
                logger.warning('witness of cell {} lies outside its parent'.format(
                    child.pattern.as_list()))
                return False
    return True


@typeguard.typechecked
def verify_partition(
        cells: Sequence[RegionCell],
        network: Network,
        samples: Matrix,
        ) -> PartitionReport:
    """Classifies samples as matched, on a boundary, or orphaned"""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if len(cells) == 0:
        raise InvalidArgument('no cells to verify against')
    depth = cells[0].pattern.depth
    known = set(cell.pattern.key() for cell in cells)
    report = PartitionReport(total=len(samples), matched=0, boundary=0, orphaned=0)
    for x in samples:
        values = preactivations(network, x, depth)
        if min(np.min(np.abs(z)) for z in values) <= EPSILON:
            report.boundary += 1
            continue
        pattern = ActivationPattern(tuple(ActivationMatrix.from_preactivation(z) for z in values))
        if pattern.key() in known:
            report.matched += 1
        else:
            report.orphaned += 1
            report.orphans.append(x.tolist())
    if report.orphaned > 0:
        logger.warning('{} of {} samples fall outside every enumerated region'.format(
            report.orphaned, report.total))
    return report


@typeguard.typechecked
def grid_census(
        network: Network,
        resolution: int = 500,
        depth: Optional[int] = None,
        ) -> Set[Tuple[Tuple[int, ...], ...]]:
    """Pattern keys observed at the centres of a regular grid on [0, 1]^d

    Grid points within EPSILON of a boundary are left out.

    """
    if resolution < 1:
        raise InvalidArgument('resolution must be positive')
    depth = network.depth if depth is None else depth
    d = network.input_dim
    axis = (np.arange(resolution) + 0.5) / resolution
    points = np.stack(np.meshgrid(*([axis] * d), indexing='ij'), axis=-1).reshape(-1, d)
    H = points
    active = np.zeros((len(points), depth, network.width), dtype=bool)
    margin = np.full(len(points), np.inf)
    for i, layer in enumerate(network.layers[:depth]):
        Z, H = apply_layer(layer, H)
        active[:, i, :] = Z > 0
        margin = np.minimum(margin, np.min(np.abs(Z), axis=1))
    active = active[margin > EPSILON]
    census = set()
    for row in np.unique(active.reshape(len(active), -1), axis=0):
        row = row.reshape(depth, network.width)
        census.add(tuple(tuple(int(j) for j in np.flatnonzero(mask)) for mask in row))
    return census
