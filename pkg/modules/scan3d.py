"""
Módulo SS3D
Serializa volumes 3D em sequências por direção, aplica a varredura seletiva e combina
"""

import itertools
import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from modules.errors import ShapeError
from modules.ssm import SSMParams, selective_scan
from modules.tensor import Tensor, flip, reshape, stack, transpose

logger = logging.getLogger(__name__)

AXIS_NAMES = ("D", "H", "W")


@dataclass(frozen=True)
class ScanDirection:
    """
    Ordem de percurso de um volume

    axis_order lista os eixos espaciais (0=D, 1=H, 2=W) do mais lento ao mais rápido.
    """
    axis_order: Tuple[int, int, int] = (0, 1, 2)
    reversed: bool = False

    def __post_init__(self):
        if sorted(self.axis_order) != [0, 1, 2]:
            raise ValueError(f"axis_order deve ser permutacao de (0, 1, 2), recebido {self.axis_order}")

    @property
    def label(self) -> str:
        order = "".join(AXIS_NAMES[a] for a in self.axis_order)
        return f"{order}-{'bwd' if self.reversed else 'fwd'}"


def default_directions(count: int = 6) -> List[ScanDirection]:
    """
    Conjuntos de direções padrão

    Args:
        count: 2 (D-major ida/volta), 6 (rasters D-, H- e W-major cíclicos, ida/volta)
               ou 12 (todas as ordens de eixos, ida/volta)

    Returns:
        Lista de direções em ordem fixa
    """
    if count == 2:
        orders = [(0, 1, 2)]
    elif count == 6:
        orders = [(0, 1, 2), (1, 2, 0), (2, 0, 1)]
    elif count == 12:
        orders = list(itertools.permutations((0, 1, 2)))
    else:
        raise ValueError(f"numero de direcoes SS3D nao suportado: {count} (use 2, 6 ou 12)")
    return [ScanDirection(tuple(order), rev) for order in orders for rev in (False, True)]


def serialize(x: Tensor, direction: ScanDirection) -> Tensor:
    """Volume C×D×H×W -> sequência C×L, L = D·H·W"""
    if x.ndim != 4:
        raise ShapeError(f"serialize exige volume C×D×H×W, recebido {x.shape}")
    permuted = transpose(x, (0,) + tuple(1 + a for a in direction.axis_order))
    seq = reshape(permuted, (x.shape[0], -1))
    return flip(seq, 1) if direction.reversed else seq


def deserialize(seq: Tensor, direction: ScanDirection, spatial_shape: Sequence[int]) -> Tensor:
    """Inversa de serialize para a mesma direção"""
    spatial_shape = tuple(spatial_shape)
    if seq.ndim != 2 or seq.shape[1] != int(np.prod(spatial_shape)):
        raise ShapeError(f"deserialize: sequencia {seq.shape} incompativel com volume {spatial_shape}")
    if direction.reversed:
        seq = flip(seq, 1)
    permuted_shape = tuple(spatial_shape[a] for a in direction.axis_order)
    volume = reshape(seq, (seq.shape[0],) + permuted_shape)
    inverse = np.argsort(direction.axis_order)
    return transpose(volume, (0,) + tuple(1 + int(a) for a in inverse))


def ss3d(x: Tensor, ssm: SSMParams, directions: Sequence[ScanDirection]) -> Tensor:
    """
    Varredura seletiva 3D

    Args:
        x: Volume C×D×H×W
        ssm: Parâmetros compartilhados entre direções
        directions: Direções de percurso (não vazia)

    Returns:
        Média, em ordem fixa, das varreduras desserializadas; mesma forma de x
    """
    if not directions:
        raise ValueError("ss3d exige ao menos uma direcao")
    sequences = [transpose(serialize(x, d), (1, 0)) for d in directions]
    scanned = selective_scan(stack(sequences, 0), ssm)
    merged = None
    for index, direction in enumerate(directions):
        volume = deserialize(transpose(scanned[index], (1, 0)), direction, x.shape[1:])
        merged = volume if merged is None else merged + volume
    return merged * (1.0 / len(directions))
