"""
Módulo de Parâmetros
Contêineres de parâmetros treináveis e inicializadores
"""

from dataclasses import dataclass, fields
from typing import Iterator, Optional, Tuple

import numpy as np

from modules.tensor import Tensor


class ParamGroup:
    """
    Base para dataclasses de parâmetros
    Percorre campos Tensor, grupos aninhados e listas em ordem de declaração
    """

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for field in fields(self):
            yield from _walk(getattr(self, field.name), f"{prefix}{field.name}")

    def parameters(self) -> Iterator[Tensor]:
        for _, tensor in self.named_parameters():
            yield tensor


def _walk(value, name: str) -> Iterator[Tuple[str, Tensor]]:
    if isinstance(value, Tensor):
        yield name, value
    elif isinstance(value, ParamGroup):
        yield from value.named_parameters(prefix=f"{name}.")
    elif isinstance(value, (list, tuple)):
        for index, item in enumerate(value):
            yield from _walk(item, f"{name}.{index}")


def is_norm_parameter(name: str) -> bool:
    """Ganhos e vieses de normalização ficam fora do weight decay"""
    return any(part.startswith(("ln_", "norm")) for part in name.split("."))


def parameter(data: np.ndarray) -> Tensor:
    return Tensor(data, requires_grad=True)


@dataclass
class LinearParams(ParamGroup):
    """Camada linear por voxel: y = W·x + b, W de forma (saída × entrada)"""
    weight: Tensor
    bias: Tensor


@dataclass
class ConvParams(ParamGroup):
    weight: Tensor
    bias: Optional[Tensor]


@dataclass
class NormParams(ParamGroup):
    gain: Tensor
    bias: Tensor


def init_linear(rng: np.random.Generator, out_features: int, in_features: int, zero: bool = False) -> LinearParams:
    if zero:
        weight = np.zeros((out_features, in_features))
    else:
        weight = rng.normal(0.0, np.sqrt(2.0 / in_features), size=(out_features, in_features))
    return LinearParams(parameter(weight), parameter(np.zeros(out_features)))


def init_conv(
    rng: np.random.Generator,
    out_channels: int,
    in_channels: int,
    kernel: int,
    groups: int = 1,
    zero: bool = False,
    bias: bool = True,
) -> ConvParams:
    group_in = in_channels // groups
    shape = (out_channels, group_in, kernel, kernel, kernel)
    if zero:
        weight = np.zeros(shape)
    else:
        fan_in = group_in * kernel ** 3
        weight = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
    return ConvParams(parameter(weight), parameter(np.zeros(out_channels)) if bias else None)


def init_norm(channels: int) -> NormParams:
    return NormParams(parameter(np.ones(channels)), parameter(np.zeros(channels)))
