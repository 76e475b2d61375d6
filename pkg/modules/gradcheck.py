"""
Módulo de Verificação de Gradientes
Compara o gradiente analítico da fita com diferenças finitas centrais
"""

import logging
from typing import Callable, Optional

import numpy as np

from modules.tensor import Tensor, backward, no_grad, tape_scope

logger = logging.getLogger(__name__)


def grad_check(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    step: float = 1e-6,
    num_coords: Optional[int] = None,
    seed: int = 0,
) -> float:
    """
    Erro relativo máximo entre gradiente analítico e diferença central

    Args:
        f: Função escalar de x (pode capturar outros tensores)
        x: Ponto de avaliação; seus dados são perturbados e restaurados
        step: Passo da diferença central
        num_coords: Se definido, amostra essa quantidade de coordenadas
        seed: Semente da amostragem de coordenadas

    Returns:
        max |analítico − central| / max(|analítico|, |central|, 1e-12)
    """
    if step <= 0:
        raise ValueError(f"step deve ser positivo, recebido {step}")

    x.requires_grad = True
    x.grad = None
    with tape_scope():
        loss = f(x)
        backward(loss)
    analytic = np.zeros_like(x.data) if x.grad is None else np.array(x.grad)

    flat = x.data.reshape(-1)
    coords = np.arange(flat.size)
    if num_coords is not None and num_coords < flat.size:
        coords = np.sort(np.random.default_rng(seed).choice(flat.size, size=num_coords, replace=False))

    worst = 0.0
    analytic_flat = analytic.reshape(-1)
    with no_grad():
        for index in coords:
            original = flat[index]
            flat[index] = original + step
            f_plus = f(x).item()
            flat[index] = original - step
            f_minus = f(x).item()
            flat[index] = original
            numeric = (f_plus - f_minus) / (2.0 * step)
            a = analytic_flat[index]
            error = abs(a - numeric) / max(abs(a), abs(numeric), 1e-12)
            worst = max(worst, error)

    logger.debug(f"[GRADCHECK] {len(coords)} coordenadas, erro relativo maximo {worst:.3e}")
    return worst
