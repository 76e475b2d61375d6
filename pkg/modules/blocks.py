"""
Módulo de Blocos
Bloco Mamba com SS3D, bloco residual convolucional e camadas de reamostragem
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from modules.errors import ShapeError
from modules.functional import channel_norm, conv3d, layer_norm, relu, silu, upsample_nearest
from modules.params import (
    ConvParams,
    LinearParams,
    NormParams,
    ParamGroup,
    init_conv,
    init_linear,
    init_norm,
    parameter,
)
from modules.scan3d import ScanDirection, default_directions, ss3d
from modules.ssm import SSMParams, init_ssm_params
from modules.tensor import Tensor, matmul, reshape

logger = logging.getLogger(__name__)


@dataclass
class MambaBlockParams(ParamGroup):
    ln_in: NormParams
    linear_a: LinearParams      # ramo de gate, C_h × C
    linear_b: LinearParams      # ramo SSM, C_h × C
    dw_conv: ConvParams         # depthwise 3×3×3 sobre C_h
    ssm: SSMParams
    ln_post: NormParams
    linear_out: LinearParams    # C × C_h

    @property
    def channels(self) -> int:
        return self.linear_out.weight.shape[0]

    @property
    def hidden_channels(self) -> int:
        return self.linear_b.weight.shape[0]


@dataclass
class ResBlockParams(ParamGroup):
    conv1: ConvParams
    norm1: NormParams
    conv2: ConvParams
    norm2: NormParams
    shortcut: Optional[ConvParams] = None

    @property
    def in_channels(self) -> int:
        return self.conv1.weight.shape[1]

    @property
    def out_channels(self) -> int:
        return self.conv1.weight.shape[0]


def linear_tokens(tokens: Tensor, p: LinearParams) -> Tensor:
    """Aplica W·x + b a cada coluna de uma matriz de tokens C×L"""
    if tokens.shape[0] != p.weight.shape[1]:
        raise ShapeError(f"linear: tokens com {tokens.shape[0]} canais, peso {p.weight.shape}")
    return matmul(p.weight, tokens) + reshape(p.bias, (-1, 1))


def init_mamba_block(
    rng: np.random.Generator,
    channels: int,
    state_dim: int = 8,
    expansion: int = 2,
    zero_exit: bool = True,
) -> MambaBlockParams:
    """
    Inicializa um bloco Mamba

    Args:
        rng: Gerador aleatório
        channels: Canais C de entrada e saída
        state_dim: Dimensão do estado do SSM
        expansion: Fator de expansão C_h = expansion·C
        zero_exit: Zera a projeção de saída (bloco começa como identidade)

    Returns:
        MambaBlockParams
    """
    hidden = expansion * channels
    return MambaBlockParams(
        ln_in=init_norm(channels),
        linear_a=init_linear(rng, hidden, channels),
        linear_b=init_linear(rng, hidden, channels),
        dw_conv=init_conv(rng, hidden, hidden, 3, groups=hidden),
        ssm=init_ssm_params(rng, hidden, state_dim),
        ln_post=init_norm(hidden),
        linear_out=init_linear(rng, channels, hidden, zero=zero_exit),
    )


def mamba_block(
    x: Tensor,
    p: MambaBlockParams,
    directions: Optional[Sequence[ScanDirection]] = None,
) -> Tensor:
    """
    Bloco Mamba residual sobre um volume C×D×H×W

    y = Linear_out(SiLU(Linear_A(LN(x))) ⊙ LN(SS3D(DWConv(Linear_B(LN(x)))))) + x
    """
    if x.ndim != 4 or x.shape[0] != p.channels:
        raise ShapeError(f"mamba_block: esperado volume com {p.channels} canais, recebido {x.shape}")
    if directions is None:
        directions = default_directions()
    channels, spatial = x.shape[0], x.shape[1:]
    hidden = p.hidden_channels

    tokens = reshape(x, (channels, -1))
    normed = layer_norm(tokens, 0, p.ln_in.gain, p.ln_in.bias)
    gate = silu(linear_tokens(normed, p.linear_a))

    branch = reshape(linear_tokens(normed, p.linear_b), (hidden,) + spatial)
    branch = conv3d(branch, p.dw_conv.weight, p.dw_conv.bias, padding=1, groups=hidden)
    branch = ss3d(branch, p.ssm, directions)
    branch = layer_norm(reshape(branch, (hidden, -1)), 0, p.ln_post.gain, p.ln_post.bias)

    out = linear_tokens(gate * branch, p.linear_out)
    return x + reshape(out, x.shape)


def init_res_block(
    rng: np.random.Generator,
    in_channels: int,
    out_channels: int,
    zero_exit: bool = True,
) -> ResBlockParams:
    """
    Inicializa um bloco residual

    Com zero_exit o ganho da segunda normalização começa em zero,
    então o bloco inicial devolve apenas o atalho.
    """
    norm2 = init_norm(out_channels)
    if zero_exit:
        norm2.gain = parameter(np.zeros(out_channels))
    shortcut = None
    if in_channels != out_channels:
        shortcut = init_conv(rng, out_channels, in_channels, 1)
    return ResBlockParams(
        conv1=init_conv(rng, out_channels, in_channels, 3),
        norm1=init_norm(out_channels),
        conv2=init_conv(rng, out_channels, out_channels, 3),
        norm2=norm2,
        shortcut=shortcut,
    )


def res_block(x: Tensor, p: ResBlockParams) -> Tensor:
    """relu(norm(conv(relu(norm(conv(x)))))) + atalho(x)"""
    if x.ndim != 4 or x.shape[0] != p.in_channels:
        raise ShapeError(f"res_block: esperado volume com {p.in_channels} canais, recebido {x.shape}")
    h = relu(channel_norm(conv3d(x, p.conv1.weight, p.conv1.bias, padding=1), p.norm1.gain, p.norm1.bias))
    h = relu(channel_norm(conv3d(h, p.conv2.weight, p.conv2.bias, padding=1), p.norm2.gain, p.norm2.bias))
    if p.shortcut is None:
        return h + x
    return h + conv3d(x, p.shortcut.weight, p.shortcut.bias)


def init_downsample(rng: np.random.Generator, channels: int) -> ConvParams:
    return init_conv(rng, 2 * channels, channels, 3)


def downsample(x: Tensor, p: ConvParams) -> Tensor:
    """Convolução k3 s2: C×D×H×W -> 2C×D/2×H/2×W/2"""
    if any(extent % 2 for extent in x.shape[1:]):
        raise ShapeError(f"downsample exige extensoes pares, recebido {x.shape}")
    return conv3d(x, p.weight, p.bias, stride=2, padding=1)


def init_upsample(rng: np.random.Generator, channels: int) -> ConvParams:
    if channels % 2:
        raise ShapeError(f"upsample exige numero par de canais, recebido {channels}")
    return init_conv(rng, channels // 2, channels, 1)


def upsample(x: Tensor, p: ConvParams) -> Tensor:
    """Vizinho mais próximo ×2 seguido de projeção 1×1×1: C -> C/2"""
    return conv3d(upsample_nearest(x, 2), p.weight, p.bias)
