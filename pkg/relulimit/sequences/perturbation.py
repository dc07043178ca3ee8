from __future__ import annotations # necessary for type-guarding class methods
from typing import Optional
import typeguard
from dataclasses import dataclass

import numpy as np

from relulimit.core import Layer, NormKind, InvalidArgument, induced_matrix_norm, \
        vector_norm
from relulimit.products import DecayModel
from .base import BaseGenerator, equivalence_factor


DISTRIBUTIONS      = ('dense-uniform', 'sparse-one-entry')
BIAS_DISTRIBUTIONS = ('dense-uniform', 'constant')


@dataclass
class IdentityPerturbationParameters:
    width            : int = 2
    input_dim        : Optional[int] = None
    alpha            : float = 2.0
    scale            : float = 0.5
    distribution     : str = 'dense-uniform'
    beta             : float = 2.0
    bias_scale       : float = 0.0
    bias_distribution: str = 'dense-uniform'
    norm             : str = 'l1'


@typeguard.typechecked
class IdentityPerturbationGenerator(BaseGenerator):
    """W_n = I + P_n with |P_n| = scale / n^alpha, |b_n| = bias_scale / n^beta

    Both norms hold exactly in the declared norm. Layer 1 uses the
    rectangular identity when input_dim differs from width.

    """
    kind = 'identity_perturbation'
    parameters_cls = IdentityPerturbationParameters

    def validate(self) -> None:
        pars = self.parameters
        if pars.width < 1:
            raise InvalidArgument('width must be positive')
        if pars.input_dim is not None and pars.input_dim < 1:
            raise InvalidArgument('input_dim must be positive')
        if pars.alpha <= 0 or pars.scale < 0:
            raise InvalidArgument('perturbations need alpha > 0 and scale >= 0')
        if pars.beta < 0 or pars.bias_scale < 0:
            raise InvalidArgument('biases need beta >= 0 and bias_scale >= 0')
        if pars.distribution not in DISTRIBUTIONS:
            raise InvalidArgument('distribution {} unknown!'.format(pars.distribution))
        if pars.bias_distribution not in BIAS_DISTRIBUTIONS:
            raise InvalidArgument('bias distribution {} unknown!'.format(
                pars.bias_distribution))
        self.norm = NormKind.parse(pars.norm)

    @property
    def width(self) -> int:
        return self.parameters.width

    @property
    def input_dim(self) -> int:
        if self.parameters.input_dim is None:
            return self.parameters.width
        return self.parameters.input_dim

    def _direction(self, rng: np.random.Generator, shape: tuple) -> np.ndarray:
        if self.parameters.distribution == 'dense-uniform':
            return rng.uniform(-1, 1, size=shape)
        direction = np.zeros(shape)
        i = rng.integers(shape[0])
        j = rng.integers(shape[1])
        direction[i, j] = rng.choice([-1.0, 1.0])
        return direction

    def _layer(self, n: int) -> Layer:
        pars = self.parameters
        rng = self.rng(n)
        shape = (self.width, self.input_dim if n == 1 else self.width)
        P = self._direction(rng, shape)
        target = pars.scale / n ** pars.alpha
        size = induced_matrix_norm(P, self.norm)
        P = P * (target / size) if size > 0 else np.zeros(shape)

        if pars.bias_distribution == 'dense-uniform':
            b = rng.uniform(-1, 1, size=self.width)
        else:
            b = np.ones(self.width)
        target = pars.bias_scale / n ** pars.beta
        size = vector_norm(b, self.norm)
        b = b * (target / size) if size > 0 else np.zeros(self.width)
        return Layer(np.eye(*shape) + P, b)

    def perturbation_decay(self, p: NormKind) -> Optional[DecayModel]:
        factor = equivalence_factor(self.norm, p, self.width)
        return DecayModel('power', self.parameters.scale * factor, self.parameters.alpha)

    def bias_decay(self, p: NormKind) -> Optional[DecayModel]:
        factor = equivalence_factor(self.norm, p, self.width)
        return DecayModel('power', self.parameters.bias_scale * factor, self.parameters.beta)


@dataclass
class ResNetLikeParameters(IdentityPerturbationParameters):
    rank: int = 1


@typeguard.typechecked
class ResNetLikeGenerator(IdentityPerturbationGenerator):
    """Residual blocks x + U_n V_n x with a low-rank update of decaying size"""
    kind = 'resnet_like'
    parameters_cls = ResNetLikeParameters

    def validate(self) -> None:
        super().validate()
        if self.parameters.rank < 1:
            raise InvalidArgument('rank must be positive')

    def _direction(self, rng: np.random.Generator, shape: tuple) -> np.ndarray:
        rank = self.parameters.rank
        U = rng.uniform(-1, 1, size=(shape[0], rank))
        V = rng.uniform(-1, 1, size=(rank, shape[1]))
        return U @ V
