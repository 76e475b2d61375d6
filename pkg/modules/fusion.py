"""
Módulo de Fusão Bi-nível
Atenção por modalidade (softmax) e por canal (sigmoid) sobre características multimodais
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from modules.errors import ShapeError
from modules.functional import relu, sigmoid, softmax
from modules.params import ParamGroup, parameter
from modules.tensor import Tensor, concat, matmul, mean, reshape

logger = logging.getLogger(__name__)


@dataclass
class FusionParams(ParamGroup):
    """
    Projeções da fusão bi-nível, sem viés

    W1_mod e W1_ch: H_f × (M·C); W2_mod: M × H_f; W2_ch: C × H_f
    """
    W1_mod: Tensor
    W2_mod: Tensor
    W1_ch: Tensor
    W2_ch: Tensor

    @property
    def num_modalities(self) -> int:
        return self.W2_mod.shape[0]

    @property
    def channels(self) -> int:
        return self.W2_ch.shape[0]

    @property
    def hidden(self) -> int:
        return self.W1_mod.shape[0]


@dataclass
class FusionWeights:
    a_modality: Tensor  # M
    a_channel: Tensor   # C


def fusion_hidden_width(num_modalities: int, channels: int) -> int:
    return max(num_modalities * channels // 4, 8)


def init_fusion(
    rng: np.random.Generator,
    num_modalities: int,
    channels: int,
    zero_output: bool = True,
) -> FusionParams:
    """
    Inicializa a fusão de um nível

    Com zero_output as segundas projeções começam em zero: a_modality = 1/M e a_channel = 0.5.
    """
    width = num_modalities * channels
    hidden = fusion_hidden_width(num_modalities, channels)

    def second(rows: int) -> Tensor:
        if zero_output:
            return parameter(np.zeros((rows, hidden)))
        return parameter(rng.normal(0.0, np.sqrt(1.0 / hidden), size=(rows, hidden)))

    return FusionParams(
        W1_mod=parameter(rng.normal(0.0, np.sqrt(2.0 / width), size=(hidden, width))),
        W2_mod=second(num_modalities),
        W1_ch=parameter(rng.normal(0.0, np.sqrt(2.0 / width), size=(hidden, width))),
        W2_ch=second(channels),
    )


def _check_shapes(X: Sequence[Tensor], op: str):
    if not X:
        raise ShapeError(f"{op}: lista de modalidades vazia")
    shapes = [x.shape for x in X]
    if any(shape != shapes[0] for shape in shapes):
        raise ShapeError(f"{op}: formas divergentes entre modalidades {shapes}")


def concat_pool(X: Sequence[Tensor]) -> Tensor:
    """Média espacial por (modalidade, canal), achatada em ordem de modalidade -> vetor M·C"""
    _check_shapes(X, "concat_pool")
    spatial = tuple(range(1, X[0].ndim))
    return concat([mean(x, spatial) for x in X], 0)


def _project(pool: Tensor, first: Tensor, second: Tensor) -> Tensor:
    if pool.shape != (first.shape[1],):
        raise ShapeError(f"fusao: descritor {pool.shape} incompativel com projecao {first.shape}")
    hidden = relu(matmul(first, reshape(pool, (-1, 1))))
    return reshape(matmul(second, hidden), (-1,))


def modality_attention(pool: Tensor, p: FusionParams) -> Tensor:
    """softmax(W2_mod · relu(W1_mod · pool))"""
    return softmax(_project(pool, p.W1_mod, p.W2_mod), axis=0)


def channel_attention(pool: Tensor, p: FusionParams) -> Tensor:
    """sigmoid(W2_ch · relu(W1_ch · pool))"""
    return sigmoid(_project(pool, p.W1_ch, p.W2_ch))


def compute_fusion_weights(X: Sequence[Tensor], p: FusionParams) -> FusionWeights:
    if len(X) != p.num_modalities or X[0].shape[0] != p.channels:
        raise ShapeError(
            f"fusao configurada para M={p.num_modalities}, C={p.channels}; "
            f"recebido M={len(X)}, forma {X[0].shape if X else None}"
        )
    pool = concat_pool(X)
    return FusionWeights(modality_attention(pool, p), channel_attention(pool, p))


def bi_level_fuse(
    X: Sequence[Tensor],
    p: FusionParams,
    weights: Optional[FusionWeights] = None,
) -> List[Tensor]:
    """
    Recalibra cada modalidade: X_out^(m) = a_modality[m] · (a_channel ⊙ X^(m))

    Args:
        X: M volumes C×D×H×W
        p: Parâmetros da fusão
        weights: Pesos impostos (substituem os calculados a partir de X)

    Returns:
        M volumes com as formas de entrada
    """
    _check_shapes(X, "bi_level_fuse")
    if weights is None:
        weights = compute_fusion_weights(X, p)
    a_channel = reshape(weights.a_channel, (-1,) + (1,) * (X[0].ndim - 1))
    return [weights.a_modality[m] * (a_channel * x) for m, x in enumerate(X)]


def merge_modalities(X_out: Sequence[Tensor]) -> Tensor:
    """Soma elemento a elemento das M modalidades"""
    _check_shapes(X_out, "merge_modalities")
    merged = X_out[0]
    for x in X_out[1:]:
        merged = merged + x
    return merged


def simple_sum_fuse(X: Sequence[Tensor]) -> Tensor:
    """Fusão por soma direta, sem atenção (linha de ablação)"""
    return merge_modalities(X)
