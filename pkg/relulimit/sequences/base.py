from __future__ import annotations # necessary for type-guarding class methods
from typing import Optional, Union, List, Tuple, Dict, Any
import typeguard
import logging
from dataclasses import dataclass, asdict
from copy import deepcopy

import numpy as np

from relulimit.core import Layer, Network, NormKind, SequenceSpec, InvalidArgument
from relulimit.products import DecayModel


logger = logging.getLogger(__name__) # logging per module
logger.setLevel(logging.INFO)


@dataclass
class EmptyParameters:
    pass


@typeguard.typechecked
def equivalence_factor(source: NormKind, target: NormKind, width: int) -> float:
    """Constant K with |A|_target <= K |A|_source for m x m matrices"""
    if source == target:
        return 1.0
    if {source, target} == {NormKind.L1, NormKind.LINF}:
        return float(width)
    return float(np.sqrt(width))


@typeguard.typechecked
class BaseGenerator:
    """Deterministic rule n -> (W_n, b_n) for n = 1, 2, ...

    Layer n only depends on the seed and on n, so prefixes of different
    depth share their layers.

    """
    kind = None
    parameters_cls = EmptyParameters

    def __init__(self, seed: int = 0, **kwargs) -> None:
        self.seed = seed
        try:
            self.parameters = self.parameters_cls(**deepcopy(kwargs))
        except TypeError as e:
            raise InvalidArgument('invalid parameters for {}: {}'.format(self.kind, e))
        self.validate()

    def validate(self) -> None:
        pass

    @property
    def width(self) -> int:
        raise NotImplementedError

    @property
    def input_dim(self) -> int:
        raise NotImplementedError

    @property
    def depth(self) -> Optional[int]:
        """Number of layers the sequence holds, None when unbounded"""
        return None

    def available(self, n: int) -> int:
        """Largest layer index up to n that the sequence holds"""
        if self.depth is None:
            return n
        return min(n, self.depth)

    def rng(self, n: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, n])

    def layer(self, n: int) -> Layer:
        if n < 1:
            raise InvalidArgument('layer index {} must be positive'.format(n))
        return self._layer(n)

    def _layer(self, n: int) -> Layer:
        raise NotImplementedError

    def output_layer(self) -> Optional[Layer]:
        return None

    def perturbation(self, n: int) -> np.ndarray:
        """W_n minus the (rectangular) identity"""
        weight = self.layer(n).weight
        return weight - np.eye(*weight.shape)

    def perturbation_decay(self, p: NormKind) -> Optional[DecayModel]:
        """Model of |P_n|_p for n >= 2, or None when nothing is declared"""
        return None

    def bias_decay(self, p: NormKind) -> Optional[DecayModel]:
        return None

    def realize(self, depth: int) -> Network:
        if depth < 1:
            raise InvalidArgument('depth must be positive')
        layers = [self.layer(n) for n in range(1, depth + 1)]
        logger.debug('realized {} layers of a {} sequence'.format(depth, self.kind))
        return Network(self.input_dim, self.width, layers, self.output_layer())

    @property
    def spec(self) -> SequenceSpec:
        return SequenceSpec(self.kind, asdict(self.parameters), self.seed)
