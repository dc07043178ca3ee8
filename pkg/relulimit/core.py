from __future__ import annotations # necessary for type-guarding class methods
from typing import Optional, Union, List, Tuple, Dict, Any, Sequence, Iterable
import typeguard
import json
import logging
from enum import Enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


logger = logging.getLogger(__name__) # logging per module
logger.setLevel(logging.INFO)


Vector = Union[np.ndarray, Sequence[float]]
Matrix = Union[np.ndarray, Sequence[Sequence[float]]]

SEQUENCE_KINDS = (
        'identity_perturbation',
        'constant',
        'resnet_like',
        'explicit',
        )


class ReluLimitError(Exception):
    pass


class InvalidArgument(ReluLimitError, ValueError):
    pass


class InvalidState(ReluLimitError, RuntimeError):
    pass


class ResourceLimitExceeded(ReluLimitError, RuntimeError):
    pass


class FeasibilityError(ReluLimitError, RuntimeError):
    pass


class BoundaryProbeError(ReluLimitError, ValueError):
    pass


class NormKind(Enum):
    """Vector norm on R^m and its induced matrix norm"""
    L1   = 'l1'
    L2   = 'l2'
    LINF = 'linf'

    @property
    def ord(self) -> float:
        return {'l1': 1.0, 'l2': 2.0, 'linf': np.inf}[self.value]

    @classmethod
    def parse(cls, value: Union[NormKind, str, int, float]) -> NormKind:
        if isinstance(value, NormKind):
            return value
        key = str(value).lower()
        aliases = {
                'l1': 'l1', '1': 'l1', '1.0': 'l1',
                'l2': 'l2', '2': 'l2', '2.0': 'l2',
                'linf': 'linf', 'inf': 'linf', 'infinity': 'linf',
                }
        if key not in aliases:
            raise InvalidArgument('norm {} unknown!'.format(value))
        return cls(aliases[key])


class Status(Enum):
    CONVERGED = 'converged'
    DIVERGED  = 'diverged'
    UNDECIDED = 'undecided'


@dataclass(frozen=True)
class ActivationMatrix:
    """Diagonal 0/1 matrix of width m, stored as a bitset of its support"""
    width: int
    bits : int = 0

    def __post_init__(self) -> None:
        if self.width < 1:
            raise InvalidArgument('activation width must be positive')
        if self.bits < 0 or (self.bits >> self.width) != 0:
            raise InvalidArgument('support exceeds width {}'.format(self.width))

    @property
    def support(self) -> Tuple[int, ...]:
        return tuple(j for j in range(self.width) if (self.bits >> j) & 1)

    @property
    def diagonal(self) -> np.ndarray:
        return np.array([(self.bits >> j) & 1 for j in range(self.width)], dtype=bool)

    def dense(self) -> np.ndarray:
        return np.diag(self.diagonal.astype(np.float64))

    def apply(self, array: np.ndarray) -> np.ndarray:
        """Left-multiplies a vector or matrix by the mask (zeroes rows)"""
        array = np.array(array, dtype=np.float64) # copy
        assert array.shape[0] == self.width
        array[~self.diagonal] = 0.0
        return array

    def __and__(self, other: ActivationMatrix) -> ActivationMatrix:
        if other.width != self.width:
            raise InvalidArgument('width mismatch: {} vs {}'.format(self.width, other.width))
        return ActivationMatrix(self.width, self.bits & other.bits)

    def __repr__(self) -> str:
        return 'ActivationMatrix(width={}, support={})'.format(self.width, self.support)

    @classmethod
    def identity(cls, width: int) -> ActivationMatrix:
        return cls(width, (1 << width) - 1)

    @classmethod
    def zero(cls, width: int) -> ActivationMatrix:
        return cls(width, 0)

    @classmethod
    def from_diagonal(cls, diagonal: np.ndarray) -> ActivationMatrix:
        diagonal = np.asarray(diagonal, dtype=bool).reshape(-1)
        bits = 0
        for j in np.flatnonzero(diagonal):
            bits |= 1 << int(j)
        return cls(len(diagonal), bits)

    @classmethod
    def from_preactivation(cls, values: Vector) -> ActivationMatrix:
        # zero pre-activation counts as deactivated
        return cls.from_diagonal(np.asarray(values, dtype=np.float64) > 0)


@dataclass(frozen=True)
class ActivationPattern:
    """Sequence of activation matrices, one per layer"""
    layers: Tuple[ActivationMatrix, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, 'layers', tuple(self.layers))
        if len(self.layers) == 0:
            raise InvalidArgument('activation pattern needs at least one layer')
        widths = set(mask.width for mask in self.layers)
        if len(widths) != 1:
            raise InvalidArgument('activation pattern mixes widths {}'.format(sorted(widths)))

    @property
    def width(self) -> int:
        return self.layers[0].width

    @property
    def depth(self) -> int:
        return len(self.layers)

    def __len__(self) -> int:
        return len(self.layers)

    def prefix(self, k: int) -> ActivationPattern:
        if not 1 <= k <= self.depth:
            raise InvalidArgument('prefix length {} outside 1..{}'.format(k, self.depth))
        return ActivationPattern(self.layers[:k])

    def key(self) -> Tuple[Tuple[int, ...], ...]:
        """Canonical sort key: lexicographic on the supports"""
        return tuple(mask.support for mask in self.layers)

    def flip(self, layer: int, neuron: int) -> ActivationPattern:
        layers = list(self.layers)
        mask = layers[layer]
        layers[layer] = ActivationMatrix(mask.width, mask.bits ^ (1 << neuron))
        return ActivationPattern(tuple(layers))

    def as_list(self) -> List[List[int]]:
        return [list(mask.support) for mask in self.layers]

    @classmethod
    def from_list(cls, supports: Sequence[Sequence[int]], width: int) -> ActivationPattern:
        return cls(tuple(make_activation_matrix(s, width) for s in supports))


@typeguard.typechecked
def make_activation_matrix(support: Iterable[int], m: int) -> ActivationMatrix:
    bits = 0
    for index in support:
        index = int(index)
        if not 0 <= index < m:
            raise InvalidArgument('index {} outside 0..{}'.format(index, m - 1))
        bits |= 1 << index
    return ActivationMatrix(m, bits)


@typeguard.typechecked
def activation_product(masks: Sequence[ActivationMatrix]) -> ActivationMatrix:
    if len(masks) == 0:
        raise InvalidArgument('product of an empty list of masks')
    product = masks[0]
    for mask in masks[1:]:
        product = product & mask
    return product


@typeguard.typechecked
def vector_norm(v: Vector, p: NormKind) -> float:
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if v.size == 0:
        return 0.0
    return float(np.linalg.norm(v, ord=p.ord))


@typeguard.typechecked
def induced_matrix_norm(A: Matrix, p: NormKind) -> float:
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    if A.size == 0:
        return 0.0
    return float(np.linalg.norm(A, ord=p.ord))


class Layer:
    """Weight matrix and bias vector of one affine map"""

    def __init__(self, weight: Matrix, bias: Vector) -> None:
        weight = np.array(weight, dtype=np.float64, ndmin=2)
        bias   = np.array(bias, dtype=np.float64).reshape(-1)
        if weight.ndim != 2 or weight.shape[0] != len(bias):
            raise InvalidArgument('weight of shape {} does not match bias of length {}'.format(
                weight.shape, len(bias)))
        weight.setflags(write=False)
        bias.setflags(write=False)
        self.weight = weight
        self.bias   = bias

    @property
    def shape(self) -> Tuple[int, int]:
        return self.weight.shape

    def __eq__(self, other: Any) -> bool:
        if not isinstance(other, Layer):
            return NotImplemented
        return bool(
                np.array_equal(self.weight, other.weight) and
                np.array_equal(self.bias, other.bias)
                )

    def as_dict(self) -> Dict[str, Any]:
        return {'W': self.weight.tolist(), 'b': self.bias.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> Layer:
        return cls(data['W'], data['b'])


@typeguard.typechecked
class Network:
    """Finite prefix of a deep ReLU network

    Layer 1 maps R^d to R^m, every later layer R^m to R^m. The optional output
    layer maps R^m to R^d' and is never followed by a ReLU.

    """

    def __init__(
            self,
            input_dim: int,
            width: int,
            layers: Sequence[Layer],
            output_layer: Optional[Layer] = None,
            ) -> None:
        if input_dim < 1 or width < 1:
            raise InvalidArgument('input_dim and width must be positive')
        if len(layers) == 0:
            raise InvalidArgument('network needs at least one layer')
        for i, layer in enumerate(layers):
            expected = (width, input_dim if i == 0 else width)
            if layer.shape != expected:
                raise InvalidArgument('layer {} has shape {}, expected {}'.format(
                    i + 1, layer.shape, expected))
        if output_layer is not None and output_layer.shape[1] != width:
            raise InvalidArgument('output layer has shape {}, expected (*, {})'.format(
                output_layer.shape, width))
        self.input_dim    = input_dim
        self.width        = width
        self.layers       = tuple(layers)
        self.output_layer = output_layer

    @property
    def depth(self) -> int:
        return len(self.layers)

    def prefix(self, n: int) -> Network:
        if not 1 <= n <= self.depth:
            raise InvalidArgument('depth {} outside 1..{}'.format(n, self.depth))
        return Network(self.input_dim, self.width, self.layers[:n], self.output_layer)

    def __eq__(self, other: Any) -> bool:
        if not isinstance(other, Network):
            return NotImplemented
        return (
                self.input_dim == other.input_dim and
                self.width == other.width and
                self.layers == other.layers and
                self.output_layer == other.output_layer
                )

    def as_dict(self) -> Dict[str, Any]:
        data = {
                'input_dim': self.input_dim,
                'width': self.width,
                'layers': [layer.as_dict() for layer in self.layers],
                }
        if self.output_layer is not None:
            data['output_layer'] = self.output_layer.as_dict()
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> Network:
        try:
            layers = [Layer.from_dict(layer) for layer in data['layers']]
            output_layer = None
            if data.get('output_layer') is not None:
                output_layer = Layer.from_dict(data['output_layer'])
            return cls(int(data['input_dim']), int(data['width']), layers, output_layer)
        except KeyError as e:
            raise InvalidArgument('network data lacks key {}'.format(e))

    def save(self, path: Union[Path, str]) -> Path:
        from relulimit.utils import write_text_atomic
        return write_text_atomic(path, json.dumps(self.as_dict(), indent=2) + '\n')

    @classmethod
    def load(cls, path: Union[Path, str]) -> Network:
        with open(path, 'r') as f:
            return cls.from_dict(json.load(f))


@dataclass
class SequenceSpec:
    """Generator description of an infinite family {W_n, b_n}"""
    kind  : str
    params: Dict[str, Any] = field(default_factory=dict)
    seed  : int = 0

    def __post_init__(self) -> None:
        if self.kind not in SEQUENCE_KINDS:
            raise InvalidArgument('sequence kind {} unknown!'.format(self.kind))
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise InvalidArgument('seed must be an integer')

    def as_dict(self) -> Dict[str, Any]:
        return {'kind': self.kind, 'params': dict(self.params), 'seed': self.seed}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> SequenceSpec:
        if 'kind' not in data:
            raise InvalidArgument('sequence spec lacks a kind')
        return cls(data['kind'], dict(data.get('params', {})), int(data.get('seed', 0)))

    def save(self, path: Union[Path, str]) -> Path:
        from relulimit.utils import write_text_atomic
        return write_text_atomic(path, json.dumps(self.as_dict(), indent=2) + '\n')

    @classmethod
    def load(cls, path: Union[Path, str]) -> SequenceSpec:
        with open(path, 'r') as f:
            return cls.from_dict(json.load(f))
