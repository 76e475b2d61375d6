"""
Módulo de Tensores
Arrays densos em float64 com diferenciação automática em modo reverso baseada em fita
"""

import logging
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from modules.errors import ShapeError

logger = logging.getLogger(__name__)

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]
Axis = Optional[Union[int, Tuple[int, ...]]]


@dataclass
class TapeNode:
    """Registro de uma operação primitiva na fita"""
    op: str
    inputs: Tuple["Tensor", ...]
    output: "Tensor"
    backward_fn: BackwardFn


class Tape:
    """
    Fita de operações em ordem topológica
    Cada nó é registrado depois de suas entradas, então o replay reverso
    visita cada nó exatamente uma vez
    """

    def __init__(self):
        self.nodes: List[TapeNode] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, op: str, inputs: Sequence["Tensor"], output: "Tensor", backward_fn: BackwardFn) -> int:
        node_id = len(self.nodes)
        self.nodes.append(TapeNode(op, tuple(inputs), output, backward_fn))
        output.node_id = node_id
        output.tape = self
        return node_id

    def release(self):
        """Libera os nós da fita (após o backward de um passo de treino)"""
        for node in self.nodes:
            node.output.node_id = None
            node.output.tape = None
        self.nodes = []

    def backward(self, loss: "Tensor", release: bool = True) -> Dict["Tensor", np.ndarray]:
        """
        Propaga gradientes a partir de uma perda escalar

        Args:
            loss: Tensor escalar conectado à fita
            release: Se True, libera a fita ao final

        Returns:
            Mapa tensor -> gradiente acumulado
        """
        if loss.data.size != 1:
            raise ShapeError(f"backward exige perda escalar, recebido shape {loss.shape}")

        gradients: Dict[Tensor, np.ndarray] = {}
        seed = np.ones_like(loss.data)

        if loss.node_id is None or loss.tape is not self:
            if loss.requires_grad:
                loss.grad = seed if loss.grad is None else loss.grad + seed
                gradients[loss] = loss.grad
            return gradients

        pending: Dict[int, np.ndarray] = {loss.node_id: seed}
        for index in range(loss.node_id, -1, -1):
            grad = pending.pop(index, None)
            if grad is None:
                continue
            node = self.nodes[index]
            node.output.grad = grad if node.output.grad is None else node.output.grad + grad
            gradients[node.output] = node.output.grad

            input_grads = node.backward_fn(grad)
            for tensor, input_grad in zip(node.inputs, input_grads):
                if input_grad is None or not tensor.requires_grad:
                    continue
                if tensor.node_id is not None and tensor.tape is self:
                    previous = pending.get(tensor.node_id)
                    pending[tensor.node_id] = input_grad if previous is None else previous + input_grad
                else:
                    tensor.grad = np.array(input_grad) if tensor.grad is None else tensor.grad + input_grad
                    gradients[tensor] = tensor.grad

        if release:
            self.release()
        return gradients


class _AutogradState(threading.local):
    def __init__(self):
        self.tape = Tape()
        self.enabled = True


_state = _AutogradState()


@contextmanager
def tape_scope() -> Iterator[Tape]:
    """Abre uma fita nova (um passo de treino) e restaura a anterior ao sair"""
    previous = _state.tape
    _state.tape = Tape()
    try:
        yield _state.tape
    finally:
        _state.tape.release()
        _state.tape = previous


@contextmanager
def no_grad() -> Iterator[None]:
    """Desabilita o registro na fita (inferência)"""
    previous = _state.enabled
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = previous


class Tensor:
    """
    Array denso de float64 em ordem row-major com participação opcional na fita
    """

    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=np.float64, order="C")
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.node_id: Optional[int] = None
        self.tape: Optional[Tape] = None
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def backward(self) -> Dict["Tensor", np.ndarray]:
        return backward(self)

    def __repr__(self) -> str:
        label = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def sum(self, axis: Axis = None, keepdims: bool = False):
        return sum(self, axis, keepdims)

    def mean(self, axis: Axis = None, keepdims: bool = False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes: Sequence[int]):
        return transpose(self, axes)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)


TensorLike = Union[Tensor, np.ndarray, float, int]


def as_tensor(value: TensorLike) -> Tensor:
    """Converte constantes em Tensor sem gradiente"""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def apply_op(op: str, data: np.ndarray, inputs: Sequence[Tensor], backward_fn: BackwardFn) -> Tensor:
    """
    Cria o tensor de saída de uma primitiva e registra o nó na fita ativa

    Args:
        op: Nome da operação
        data: Resultado numérico
        inputs: Tensores de entrada
        backward_fn: Recebe o gradiente da saída e devolve um gradiente por entrada

    Returns:
        Tensor de saída
    """
    output = Tensor(data)
    if _state.enabled and any(t.requires_grad for t in inputs):
        output.requires_grad = True
        _state.tape.record(op, inputs, output, backward_fn)
    return output


def backward(loss: Tensor) -> Dict[Tensor, np.ndarray]:
    """Backward a partir de uma perda escalar usando a fita onde ela foi registrada"""
    tape = loss.tape if loss.tape is not None else _state.tape
    return tape.backward(loss)


def broadcast_shape(a: Tensor, b: Tensor) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"formas incompativeis para broadcasting: {a.shape} e {b.shape}") from None


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Reduz um gradiente com broadcasting de volta à forma original"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    broadcast_shape(a, b)
    return apply_op(
        "add", a.data + b.data, (a, b),
        lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)),
    )


def sub(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    broadcast_shape(a, b)
    return apply_op(
        "sub", a.data - b.data, (a, b),
        lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)),
    )


def mul(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    broadcast_shape(a, b)
    return apply_op(
        "mul", a.data * b.data, (a, b),
        lambda g: (unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)),
    )


def div(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    broadcast_shape(a, b)
    return apply_op(
        "div", a.data / b.data, (a, b),
        lambda g: (
            unbroadcast(g / b.data, a.shape),
            unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        ),
    )


def neg(x: TensorLike) -> Tensor:
    x = as_tensor(x)
    return apply_op("neg", -x.data, (x,), lambda g: (-g,))


def exp(x: TensorLike) -> Tensor:
    x = as_tensor(x)
    y = np.exp(x.data)
    return apply_op("exp", y, (x,), lambda g: (g * y,))


def log(x: TensorLike) -> Tensor:
    x = as_tensor(x)
    return apply_op("log", np.log(x.data), (x,), lambda g: (g / x.data,))


def power(x: TensorLike, exponent: float) -> Tensor:
    x = as_tensor(x)
    return apply_op(
        "pow", np.power(x.data, exponent), (x,),
        lambda g: (g * exponent * np.power(x.data, exponent - 1),),
    )


def matmul(a: TensorLike, b: TensorLike) -> Tensor:
    """Produto matricial (m×k)·(k×n) -> (m×n)"""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul exige tensores de rank 2, recebido {a.shape} e {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: dimensoes internas incompativeis {a.shape} e {b.shape}")
    return apply_op(
        "matmul", a.data @ b.data, (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
    )


def _normalize_axes(axis: Axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def sum(x: TensorLike, axis: Axis = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _normalize_axes(axis, x.ndim)

    def _backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape),)

    return apply_op("sum", x.data.sum(axis=axes, keepdims=keepdims), (x,), _backward)


def mean(x: TensorLike, axis: Axis = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _normalize_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    return sum(x, axes, keepdims) * (1.0 / count)


def reshape(x: TensorLike, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    return apply_op("reshape", x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: TensorLike, axes: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return apply_op("transpose", x.data.transpose(axes), (x,), lambda g: (g.transpose(inverse),))


def flip(x: TensorLike, axis: Axis = None) -> Tensor:
    x = as_tensor(x)
    return apply_op("flip", np.flip(x.data, axis), (x,), lambda g: (np.flip(g, axis),))


def getitem(x: TensorLike, index) -> Tensor:
    x = as_tensor(x)

    def _backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return apply_op("getitem", x.data[index], (x,), _backward)


def concat(tensors: Sequence[TensorLike], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: formas incompativeis {[t.shape for t in tensors]} no eixo {axis}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return apply_op("concat", data, tensors, lambda g: tuple(np.split(g, bounds, axis=axis)))


def stack(tensors: Sequence[TensorLike], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        data = np.stack([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f"stack: formas incompativeis {[t.shape for t in tensors]}") from None
    return apply_op(
        "stack", data, tensors,
        lambda g: tuple(np.take(g, i, axis=axis) for i in range(len(tensors))),
    )
