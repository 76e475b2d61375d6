"""
Módulo da Bateria de Gradientes
Diferenças finitas centrais para cada primitiva, cada bloco composto e a rede completa
"""

import logging
import time
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from modules import functional as F
from modules import tensor as T
from modules.blocks import init_mamba_block, init_res_block, mamba_block, res_block
from modules.fusion import bi_level_fuse, init_fusion, merge_modalities
from modules.gradcheck import grad_check
from modules.network import NetConfig, build_model, forward
from modules.phantom import PhantomSpec, generate_sample
from modules.scan3d import default_directions, ss3d
from modules.ssm import init_ssm_params, selective_scan
from modules.tensor import Tensor
from modules.trainer import cross_entropy

logger = logging.getLogger(__name__)

BLOCK_TOLERANCE = 1e-4
NETWORK_TOLERANCE = 1e-3


@dataclass
class CheckResult:
    name: str
    error: float
    tolerance: float
    seconds: float

    @property
    def passed(self) -> bool:
        return self.error < self.tolerance


def _weighted(rng: np.random.Generator, shape: Tuple[int, ...]) -> np.ndarray:
    return rng.normal(size=shape)


def _primitive_cases(rng: np.random.Generator) -> List[Tuple[str, Callable[[Tensor], Tensor], Tensor]]:
    """(nome, f escalar, ponto) para cada primitiva"""
    x = Tensor(rng.normal(size=(3, 4)))
    positive = Tensor(rng.uniform(0.5, 2.0, size=(3, 4)))
    other = Tensor(rng.normal(size=(3, 4)))
    right = Tensor(rng.normal(size=(4, 2)))
    w34 = _weighted(rng, (3, 4))
    w32 = _weighted(rng, (3, 2))
    volume = Tensor(rng.normal(size=(2, 4, 4, 4)))
    kernel = Tensor(rng.normal(size=(3, 2, 3, 3, 3)))
    bias = Tensor(rng.normal(size=3))
    depthwise = Tensor(rng.normal(size=(2, 1, 3, 3, 3)))
    gain, norm_bias = Tensor(rng.normal(size=4)), Tensor(rng.normal(size=4))
    channel_gain, channel_bias = Tensor(rng.normal(size=2)), Tensor(rng.normal(size=2))
    w_conv = _weighted(rng, (3, 4, 4, 4))
    w_stride = _weighted(rng, (3, 2, 2, 2))
    w_volume = _weighted(rng, (2, 4, 4, 4))
    w_up = _weighted(rng, (2, 8, 8, 8))

    def dot(w):
        return lambda y: (y * w).sum()

    return [
        ("add", lambda v: dot(w34)(v + other), x),
        ("sub", lambda v: dot(w34)(other - v), x),
        ("mul", lambda v: dot(w34)(v * other), x),
        ("div", lambda v: dot(w34)(other / v), positive),
        ("exp", lambda v: dot(w34)(T.exp(v)), x),
        ("log", lambda v: dot(w34)(T.log(v)), positive),
        ("power", lambda v: dot(w34)(T.power(v, 1.5)), positive),
        ("matmul", lambda v: (T.matmul(v, right) * w32).sum(), x),
        ("mean", lambda v: (T.mean(v, 1) * np.arange(1.0, 4.0)).sum(), x),
        ("softmax", lambda v: dot(w34)(F.softmax(v, axis=1)), x),
        ("log_softmax", lambda v: dot(w34)(F.log_softmax(v, axis=0)), x),
        ("sigmoid", lambda v: dot(w34)(F.sigmoid(v)), x),
        ("relu", lambda v: dot(w34)(F.relu(v)), x),
        ("softplus", lambda v: dot(w34)(F.softplus(v)), x),
        ("silu", lambda v: dot(w34)(F.silu(v)), x),
        ("layer_norm", lambda v: dot(w34)(F.layer_norm(v, 1, gain, norm_bias)), x),
        ("channel_norm", lambda v: dot(w_volume)(F.channel_norm(v, channel_gain, channel_bias)), volume),
        ("conv3d", lambda v: dot(w_conv)(F.conv3d(v, kernel, bias, padding=1)), volume),
        ("conv3d_kernel", lambda k: dot(w_conv)(F.conv3d(volume, k, bias, padding=1)), kernel),
        ("conv3d_stride2", lambda v: dot(w_stride)(F.conv3d(v, kernel, bias, stride=2, padding=1)), volume),
        ("conv3d_depthwise", lambda v: dot(w_volume)(F.conv3d(v, depthwise, padding=1, groups=2)), volume),
        ("upsample_nearest", lambda v: dot(w_up)(F.upsample_nearest(v, 2)), volume),
    ]


def _block_cases(rng: np.random.Generator) -> List[Tuple[str, Callable[[Tensor], Tensor], Tensor]]:
    ssm = init_ssm_params(rng, 3, state_dim=4)
    sequence = Tensor(rng.normal(size=(6, 3)))
    w_seq = _weighted(rng, (6, 3))

    ss3d_params = init_ssm_params(rng, 2, state_dim=4)
    ss3d_input = Tensor(rng.normal(size=(2, 3, 3, 3)))
    w_ss3d = _weighted(rng, (2, 3, 3, 3))
    directions = default_directions(6)

    mamba = init_mamba_block(rng, 4, state_dim=4, zero_exit=False)
    mamba_input = Tensor(rng.normal(size=(4, 3, 3, 3)))
    w_mamba = _weighted(rng, (4, 3, 3, 3))

    res = init_res_block(rng, 2, 2, zero_exit=False)
    res_input = Tensor(rng.normal(size=(2, 3, 3, 3)))
    w_res = _weighted(rng, (2, 3, 3, 3))

    composite_mamba = init_mamba_block(rng, 2, state_dim=4, zero_exit=False)
    composite_res = init_res_block(rng, 2, 2, zero_exit=False)

    fusion = init_fusion(rng, 2, 2, zero_output=False)
    second = Tensor(rng.normal(size=(2, 2, 2, 2)))
    first = Tensor(rng.normal(size=(2, 2, 2, 2)))
    w_fuse = [_weighted(rng, (2, 2, 2, 2)) for _ in range(2)]

    logits = Tensor(rng.normal(size=(3, 2, 2, 2)))
    labels = rng.integers(0, 3, size=(2, 2, 2))

    def fuse(v):
        outputs = bi_level_fuse([v, second], fusion)
        return sum_tensors([(out * w).sum() for out, w in zip(outputs, w_fuse)])

    return [
        ("selective_scan", lambda v: (selective_scan(v, ssm) * w_seq).sum(), sequence),
        ("selective_scan_A_log", lambda a: (selective_scan(sequence, replace(ssm, A_log=a)) * w_seq).sum(), ssm.A_log),
        ("ss3d", lambda v: (ss3d(v, ss3d_params, directions) * w_ss3d).sum(), ss3d_input),
        ("mamba_block", lambda v: (mamba_block(v, mamba, directions) * w_mamba).sum(), mamba_input),
        ("res_block", lambda v: (res_block(v, res) * w_res).sum(), res_input),
        (
            "mamba_res_composite",
            lambda v: (res_block(mamba_block(v, composite_mamba, directions), composite_res) * w_res).sum(),
            res_input,
        ),
        ("bi_level_fuse", fuse, first),
        ("merge_modalities", lambda v: (merge_modalities(bi_level_fuse([v, second], fusion)) * w_fuse[0]).sum(), first),
        ("cross_entropy", lambda v: cross_entropy(v, labels), logits),
    ]


def sum_tensors(values: List[Tensor]) -> Tensor:
    total = values[0]
    for value in values[1:]:
        total = total + value
    return total


def _network_check(config: NetConfig, num_coords: int, seed: int) -> float:
    """Entropia cruzada da rede completa contra coordenadas amostradas da cabeça e da fusão"""
    config = replace(config, zero_init_residual=False)
    model = build_model(config)
    spec = PhantomSpec(extents=config.patch_extents, num_samples=1, seed=seed, num_modalities=config.num_modalities)
    sample = generate_sample(spec, 0)

    def loss(_):
        return cross_entropy(forward(sample, model), sample.label)

    targets = [model.head.weight, model.head.bias]
    if model.fusion:
        targets += [model.fusion[0].W2_mod, model.fusion[0].W1_ch]
    per_target = max(1, num_coords // len(targets))
    return max(grad_check(loss, t, num_coords=min(per_target, t.size), seed=seed) for t in targets)


def run_suite(
    net_config: Optional[NetConfig] = None,
    seed: int = 0,
    include_network: bool = True,
    network_coords: int = 16,
) -> List[CheckResult]:
    """
    Executa toda a bateria

    Args:
        net_config: Arquitetura da verificação da rede (padrão: 8³, M=2)
        seed: Semente dos pontos de avaliação
        include_network: Inclui a verificação da rede completa
        network_coords: Coordenadas amostradas na rede completa

    Returns:
        Um CheckResult por verificação
    """
    rng = np.random.default_rng(seed)
    results = []
    for name, f, x in _primitive_cases(rng) + _block_cases(rng):
        start = time.perf_counter()
        error = grad_check(f, x)
        results.append(CheckResult(name, error, BLOCK_TOLERANCE, time.perf_counter() - start))
        logger.info(f"[GRADCHECK] {name}: erro relativo {error:.3e}")

    if include_network:
        if net_config is None:
            net_config = NetConfig(patch_extents=(8, 8, 8))
        else:
            net_config = replace(net_config, patch_extents=(8, 8, 8))
        start = time.perf_counter()
        error = _network_check(net_config, network_coords, seed)
        results.append(CheckResult("network", error, NETWORK_TOLERANCE, time.perf_counter() - start))
        logger.info(f"[GRADCHECK] network: erro relativo {error:.3e}")

    failed = [r.name for r in results if not r.passed]
    if failed:
        logger.error(f"[ERRO] Verificacoes de gradiente reprovadas: {failed}")
    return results


def summarize(results: List[CheckResult]) -> Dict:
    return {
        "checks": {r.name: {"error": r.error, "tolerance": r.tolerance, "passed": r.passed} for r in results},
        "max_block_error": max((r.error for r in results if r.tolerance == BLOCK_TOLERANCE), default=0.0),
        "max_network_error": max((r.error for r in results if r.tolerance == NETWORK_TOLERANCE), default=None),
        "passed": all(r.passed for r in results),
    }
