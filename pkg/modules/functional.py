"""
Módulo de Operações de Rede
Convolução 3D, ativações, normalizações e reamostragem sobre Tensor
"""

import logging
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import special

from modules.errors import ShapeError
from modules.tensor import Tensor, TensorLike, apply_op, as_tensor, mean, power, reshape

logger = logging.getLogger(__name__)


def softmax(x: TensorLike, axis: int = -1) -> Tensor:
    """Softmax estável (subtração do máximo) ao longo de um eixo"""
    x = as_tensor(x)
    y = special.softmax(x.data, axis=axis)
    return apply_op(
        "softmax", y, (x,),
        lambda g: (y * (g - (g * y).sum(axis=axis, keepdims=True)),),
    )


def log_softmax(x: TensorLike, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    y = special.log_softmax(x.data, axis=axis)
    return apply_op(
        "log_softmax", y, (x,),
        lambda g: (g - np.exp(y) * g.sum(axis=axis, keepdims=True),),
    )


def sigmoid(x: TensorLike) -> Tensor:
    x = as_tensor(x)
    y = special.expit(x.data)
    return apply_op("sigmoid", y, (x,), lambda g: (g * y * (1.0 - y),))


def relu(x: TensorLike) -> Tensor:
    x = as_tensor(x)
    return apply_op("relu", np.maximum(x.data, 0.0), (x,), lambda g: (g * (x.data > 0),))


def softplus(x: TensorLike) -> Tensor:
    """log(1 + e^x), sempre positivo; usado para Δ"""
    x = as_tensor(x)
    return apply_op(
        "softplus", np.logaddexp(0.0, x.data), (x,),
        lambda g: (g * special.expit(x.data),),
    )


def silu(x: TensorLike) -> Tensor:
    x = as_tensor(x)
    s = special.expit(x.data)
    return apply_op(
        "silu", x.data * s, (x,),
        lambda g: (g * (s + x.data * s * (1.0 - s)),),
    )


def _affine_shape(ndim: int, axis: int, extent: int) -> Tuple[int, ...]:
    shape = [1] * ndim
    shape[axis] = extent
    return tuple(shape)


def layer_norm(x: TensorLike, axis: int, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """
    Normalização por posição ao longo de um eixo, seguida de afim

    Args:
        x: Tensor de entrada
        axis: Eixo normalizado
        gain: Ganho com comprimento igual à extensão do eixo
        bias: Viés com comprimento igual à extensão do eixo
        eps: Estabilizador da variância

    Returns:
        Tensor normalizado
    """
    x = as_tensor(x)
    axis = axis % x.ndim
    extent = x.shape[axis]
    if gain.shape != (extent,) or bias.shape != (extent,):
        raise ShapeError(
            f"layer_norm: ganho {gain.shape} / vies {bias.shape} nao batem com o eixo de extensao {extent}"
        )
    centered = x - mean(x, axis, keepdims=True)
    variance = mean(centered * centered, axis, keepdims=True)
    normalized = centered * power(variance + eps, -0.5)
    shape = _affine_shape(x.ndim, axis, extent)
    return normalized * reshape(gain, shape) + reshape(bias, shape)


def channel_norm(x: TensorLike, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalização por canal sobre os eixos espaciais (grupos de tamanho 1)"""
    x = as_tensor(x)
    channels = x.shape[0]
    if gain.shape != (channels,) or bias.shape != (channels,):
        raise ShapeError(f"channel_norm: ganho {gain.shape} nao bate com {channels} canais")
    spatial = tuple(range(1, x.ndim))
    centered = x - mean(x, spatial, keepdims=True)
    variance = mean(centered * centered, spatial, keepdims=True)
    normalized = centered * power(variance + eps, -0.5)
    shape = _affine_shape(x.ndim, 0, channels)
    return normalized * reshape(gain, shape) + reshape(bias, shape)


def _conv_output_extent(extent: int, kernel: int, stride: int, padding: int) -> int:
    return (extent + 2 * padding - kernel) // stride + 1


def conv3d(
    x: TensorLike,
    kernel: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 0,
    groups: int = 1,
) -> Tensor:
    """
    Convolução 3D agrupada sobre um volume C_in×D×H×W

    Args:
        x: Volume de entrada
        kernel: Pesos C_out×(C_in/groups)×k×k×k, k ímpar
        bias: Viés opcional de comprimento C_out
        stride: Passo espacial
        padding: Preenchimento com zeros em cada eixo espacial
        groups: Número de grupos (groups = C_in é o caso depthwise)

    Returns:
        Volume C_out×D'×H'×W'
    """
    x = as_tensor(x)
    if x.ndim != 4 or kernel.ndim != 5:
        raise ShapeError(f"conv3d exige volume 4D e kernel 5D, recebido {x.shape} e {kernel.shape}")

    in_channels = x.shape[0]
    out_channels, group_in, k = kernel.shape[0], kernel.shape[1], kernel.shape[2]
    if kernel.shape[2:] != (k, k, k) or k % 2 == 0:
        raise ShapeError(f"conv3d exige kernel cubico de extensao impar, recebido {kernel.shape}")
    if groups < 1 or in_channels % groups or out_channels % groups:
        raise ShapeError(
            f"conv3d: groups={groups} nao divide C_in={in_channels} e C_out={out_channels}"
        )
    if group_in != in_channels // groups:
        raise ShapeError(
            f"conv3d: kernel {kernel.shape} incompativel com C_in={in_channels} e groups={groups}"
        )
    out_extents = tuple(_conv_output_extent(e, k, stride, padding) for e in x.shape[1:])
    if min(out_extents) < 1:
        raise ShapeError(f"conv3d: volume {x.shape} menor que o kernel {kernel.shape}")

    pad = ((0, 0),) + ((padding, padding),) * 3
    padded = np.pad(x.data, pad)
    windows = sliding_window_view(padded, (k, k, k), axis=(1, 2, 3))[:, ::stride, ::stride, ::stride]
    group_out = out_channels // groups
    depthwise = group_in == 1 and group_out == 1

    if depthwise:
        out = np.einsum("cdhwijk,cijk->cdhw", windows, kernel.data[:, 0])
    else:
        out = np.empty((out_channels,) + out_extents)
        for g in range(groups):
            w_g = windows[g * group_in:(g + 1) * group_in]
            k_g = kernel.data[g * group_out:(g + 1) * group_out]
            out[g * group_out:(g + 1) * group_out] = np.tensordot(
                k_g, w_g, axes=([1, 2, 3, 4], [0, 4, 5, 6])
            )

    inputs: Tuple[Tensor, ...] = (x, kernel)
    if bias is not None:
        if bias.shape != (out_channels,):
            raise ShapeError(f"conv3d: vies {bias.shape} nao bate com C_out={out_channels}")
        out = out + bias.data[:, None, None, None]
        inputs = inputs + (bias,)

    def _backward(g):
        if depthwise:
            grad_kernel = np.einsum("cdhw,cdhwijk->cijk", g, windows)[:, None]
            grad_windows = np.einsum("cijk,cdhw->cijkdhw", kernel.data[:, 0], g)
        else:
            grad_kernel = np.empty_like(kernel.data)
            grad_windows = np.empty((in_channels, k, k, k) + out_extents)
            for gi in range(groups):
                g_g = g[gi * group_out:(gi + 1) * group_out]
                w_g = windows[gi * group_in:(gi + 1) * group_in]
                k_g = kernel.data[gi * group_out:(gi + 1) * group_out]
                grad_kernel[gi * group_out:(gi + 1) * group_out] = np.tensordot(
                    g_g, w_g, axes=([1, 2, 3], [1, 2, 3])
                )
                grad_windows[gi * group_in:(gi + 1) * group_in] = np.tensordot(k_g, g_g, axes=([0], [0]))

        grad_padded = np.zeros_like(padded)
        od, oh, ow = out_extents
        for i in range(k):
            for j in range(k):
                for l in range(k):
                    grad_padded[
                        :,
                        i:i + stride * od:stride,
                        j:j + stride * oh:stride,
                        l:l + stride * ow:stride,
                    ] += grad_windows[:, i, j, l]
        d, h, w = x.shape[1:]
        grad_x = grad_padded[:, padding:padding + d, padding:padding + h, padding:padding + w]
        grads = [grad_x, grad_kernel]
        if bias is not None:
            grads.append(g.sum(axis=(1, 2, 3)))
        return tuple(grads)

    return apply_op("conv3d", out, inputs, _backward)


def upsample_nearest(x: TensorLike, factor: int = 2) -> Tensor:
    """Reamostragem por vizinho mais próximo de um volume C×D×H×W"""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"upsample_nearest exige volume 4D, recebido {x.shape}")
    data = x.data
    for axis in (1, 2, 3):
        data = np.repeat(data, factor, axis=axis)
    c, d, h, w = x.shape

    def _backward(g):
        return (g.reshape(c, d, factor, h, factor, w, factor).sum(axis=(2, 4, 6)),)

    return apply_op("upsample", data, (x,), _backward)
