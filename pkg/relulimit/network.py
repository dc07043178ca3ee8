from __future__ import annotations # necessary for type-guarding class methods
from typing import Optional, Union, List, Tuple, Dict, Any, Callable, Sequence
import typeguard
import logging
from dataclasses import dataclass

import numpy as np

from relulimit.core import Network, Layer, ActivationMatrix, ActivationPattern, \
        InvalidArgument, InvalidState, Vector, Matrix


logger = logging.getLogger(__name__) # logging per module
logger.setLevel(logging.INFO)


@dataclass(frozen=True, eq=False)
class AffinePiece:
    """Affine map x -> A x + c of one activation region"""
    A      : np.ndarray
    c      : np.ndarray
    pattern: ActivationPattern

    def __call__(self, x: Vector) -> np.ndarray:
        return self.A @ np.asarray(x, dtype=np.float64) + self.c

    def as_dict(self) -> Dict[str, Any]:
        return {'A': self.A.tolist(), 'c': self.c.tolist()}


def _as_input(network: Network, x: Vector) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape != (network.input_dim,):
        raise InvalidArgument('input of length {} for a network with input_dim {}'.format(
            len(x), network.input_dim))
    return x


def _resolve_depth(network: Network, depth: Optional[int]) -> int:
    if depth is None:
        return network.depth
    if not 1 <= depth <= network.depth:
        raise InvalidArgument('depth {} outside 1..{}'.format(depth, network.depth))
    return depth


@typeguard.typechecked
def apply_layer(layer: Layer, H: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Propagates a batch of row vectors; returns pre-activations and outputs"""
    Z = H @ layer.weight.T + layer.bias
    return Z, np.maximum(Z, 0.0)


@typeguard.typechecked
def preactivations(
        network: Network,
        x: Vector,
        depth: Optional[int] = None,
        ) -> List[np.ndarray]:
    h = _as_input(network, x)
    values = []
    for layer in network.layers[:_resolve_depth(network, depth)]:
        z = layer.weight @ h + layer.bias
        values.append(z)
        h = np.maximum(z, 0.0)
    return values


@typeguard.typechecked
def forward(
        network: Network,
        x: Vector,
        depth: Optional[int] = None,
        ) -> Tuple[np.ndarray, ActivationPattern]:
    values  = preactivations(network, x, depth)
    pattern = ActivationPattern(tuple(
        ActivationMatrix.from_preactivation(z) for z in values))
    return np.maximum(values[-1], 0.0), pattern


@typeguard.typechecked
def forward_batch(
        network: Network,
        X: Matrix,
        depth: Optional[int] = None,
        ) -> Tuple[np.ndarray, np.ndarray]:
    """Evaluates rows of X; returns outputs (N, m) and activations (N, depth, m)"""
    H = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if H.shape[1] != network.input_dim:
        raise InvalidArgument('points of dimension {} for a network with input_dim {}'.format(
            H.shape[1], network.input_dim))
    depth = _resolve_depth(network, depth)
    active = np.zeros((H.shape[0], depth, network.width), dtype=bool)
    for i, layer in enumerate(network.layers[:depth]):
        Z, H = apply_layer(layer, H)
        active[:, i, :] = Z > 0
    return H, active


@typeguard.typechecked
def boundary_margin(network: Network, x: Vector, depth: Optional[int] = None) -> float:
    """Smallest |pre-activation| along the forward pass of x"""
    return float(min(np.min(np.abs(z)) for z in preactivations(network, x, depth)))


@typeguard.typechecked
def affine_piece(network: Network, pattern: ActivationPattern) -> AffinePiece:
    if pattern.depth != network.depth:
        raise InvalidArgument('pattern of depth {} for a network of depth {}'.format(
            pattern.depth, network.depth))
    if pattern.width != network.width:
        raise InvalidArgument('pattern of width {} for a network of width {}'.format(
            pattern.width, network.width))
    A = np.eye(network.input_dim)
    c = np.zeros(network.input_dim)
    for layer, mask in zip(network.layers, pattern.layers):
        A = mask.apply(layer.weight @ A)
        c = mask.apply(layer.weight @ c + layer.bias)
    return AffinePiece(A, c, pattern)


@typeguard.typechecked
def representation_check(
        network: Network,
        samples: Matrix,
        pattern_hook: Optional[Callable[[ActivationPattern], ActivationPattern]] = None,
        ) -> float:
    """Largest |N(x) - (A x + c)| over samples, with (A, c) the piece of x

    The optional hook alters each observed pattern before its piece is
    built and serves as fault injection.

    """
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if samples.shape[0] == 0 or samples.size == 0:
        raise InvalidArgument('representation check needs at least one sample')
    discrepancy = 0.0
    for x in samples:
        y, pattern = forward(network, x)
        if pattern_hook is not None:
            pattern = pattern_hook(pattern)
        piece = affine_piece(network, pattern)
        discrepancy = max(discrepancy, float(np.max(np.abs(y - piece(x)))))
    return discrepancy


@typeguard.typechecked
def output_map(network: Network, y: Vector) -> np.ndarray:
    if network.output_layer is None:
        raise InvalidState('network has no output layer')
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.shape != (network.width,):
        raise InvalidArgument('hidden state of length {} for width {}'.format(
            len(y), network.width))
    return network.output_layer.weight @ y + network.output_layer.bias


@typeguard.typechecked
def random_network(
        rng: np.random.Generator,
        input_dim: int,
        width: int,
        depth: int,
        scale: float = 1.0,
        ) -> Network:
    """Network with standard normal weights and biases times scale"""
    layers = []
    for n in range(depth):
        columns = input_dim if n == 0 else width
        layers.append(Layer(
            scale * rng.normal(size=(width, columns)),
            scale * rng.normal(size=width),
            ))
    return Network(input_dim, width, layers)
