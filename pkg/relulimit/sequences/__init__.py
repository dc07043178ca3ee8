from __future__ import annotations # necessary for type-guarding class methods
from typing import Union
import typeguard

from relulimit.core import Network, SequenceSpec, InvalidArgument

from .base import BaseGenerator # import base before generators
from .perturbation import IdentityPerturbationGenerator, ResNetLikeGenerator
from .fixed import ConstantGenerator, ExplicitGenerator


GENERATORS = {
        cls.kind: cls for cls in [
            IdentityPerturbationGenerator,
            ConstantGenerator,
            ResNetLikeGenerator,
            ExplicitGenerator,
            ]
        }


@typeguard.typechecked
def generator_from_spec(spec: SequenceSpec) -> BaseGenerator:
    generator_cls = GENERATORS.get(spec.kind, None)
    if generator_cls is None:
        raise InvalidArgument('sequence kind {} unknown!'.format(spec.kind))
    return generator_cls(spec.seed, **spec.params)


@typeguard.typechecked
def get_generator(seq: Union[SequenceSpec, BaseGenerator]) -> BaseGenerator:
    if isinstance(seq, BaseGenerator):
        return seq
    return generator_from_spec(seq)


@typeguard.typechecked
def generate_sequence(spec: SequenceSpec, depth: int) -> Network:
    """Realizes the first depth layers of the sequence described by spec"""
    return generator_from_spec(spec).realize(depth)
