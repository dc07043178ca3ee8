from __future__ import annotations # necessary for type-guarding class methods
from typing import Optional, List, Dict, Any
import typeguard
from dataclasses import dataclass, field

import numpy as np

from relulimit.core import Layer, Network, NormKind, InvalidArgument, \
        induced_matrix_norm, vector_norm
from relulimit.products import DecayModel
from .base import BaseGenerator


@dataclass
class ConstantParameters:
    weight      : List[List[float]] = field(default_factory=lambda: [[1.0]])
    bias        : List[float] = field(default_factory=lambda: [0.0])
    first_weight: Optional[List[List[float]]] = None


@typeguard.typechecked
class ConstantGenerator(BaseGenerator):
    """Same layer (W, b) at every depth; layer 1 may have its own weight"""
    kind = 'constant'
    parameters_cls = ConstantParameters

    def validate(self) -> None:
        pars = self.parameters
        first = pars.weight if pars.first_weight is None else pars.first_weight
        try:
            self._repeated = Layer(pars.weight, pars.bias)
            self._first = Layer(first, pars.bias)
        except ValueError as e:
            raise InvalidArgument('constant layer is malformed: {}'.format(e))
        rows, columns = self._repeated.shape
        if rows != columns:
            raise InvalidArgument('repeated weight must be square, got {}'.format(
                self._repeated.shape))
        if self._first.shape[0] != rows:
            raise InvalidArgument('first weight must have {} rows'.format(rows))

    @property
    def width(self) -> int:
        return self._repeated.shape[0]

    @property
    def input_dim(self) -> int:
        return self._first.shape[1]

    def _layer(self, n: int) -> Layer:
        return self._first if n == 1 else self._repeated

    def perturbation_decay(self, p: NormKind) -> Optional[DecayModel]:
        weight = self._repeated.weight
        return DecayModel('power', induced_matrix_norm(weight - np.eye(self.width), p), 0.0)

    def bias_decay(self, p: NormKind) -> Optional[DecayModel]:
        return DecayModel('power', vector_norm(self._repeated.bias, p), 0.0)


@dataclass
class ExplicitParameters:
    layers: Optional[List[Dict[str, Any]]] = None
    path  : Optional[str] = None


@typeguard.typechecked
class ExplicitGenerator(BaseGenerator):
    """Finite list of layers, inline or read from a network file"""
    kind = 'explicit'
    parameters_cls = ExplicitParameters

    def validate(self) -> None:
        pars = self.parameters
        if (pars.layers is None) == (pars.path is None):
            raise InvalidArgument('explicit sequence needs exactly one of layers and path')
        if pars.path is not None:
            try:
                self.network = Network.load(pars.path)
            except OSError as e:
                raise InvalidArgument('cannot read network {}: {}'.format(pars.path, e))
        else:
            if len(pars.layers) == 0:
                raise InvalidArgument('explicit sequence needs at least one layer')
            layers = [Layer.from_dict(layer) for layer in pars.layers]
            self.network = Network(layers[0].shape[1], layers[0].shape[0], layers)

    @property
    def width(self) -> int:
        return self.network.width

    @property
    def input_dim(self) -> int:
        return self.network.input_dim

    @property
    def depth(self) -> int:
        return self.network.depth

    def _layer(self, n: int) -> Layer:
        if n > self.network.depth:
            raise InvalidArgument('explicit sequence holds {} layers, layer {} requested'.format(
                self.network.depth, n))
        return self.network.layers[n - 1]

    def output_layer(self) -> Optional[Layer]:
        return self.network.output_layer
