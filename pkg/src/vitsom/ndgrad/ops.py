"""微分可能な演算の集まり。

各演算は順伝播をnumpyで計算し、テープが有効で入力のいずれかが勾配を必要とする
場合だけ逆伝播関数を記録します。逆伝播関数は出力勾配を受け取り、入力ごとの勾配
（不要ならNone）を返します。
"""

import builtins
import logging
import math
from typing import Any, Optional, Sequence, Tuple

import numpy as np
from scipy import special

from ..errors import ConfigurationError, DimensionError
from .tensor import BackwardFn, Tensor, active_tape, as_tensor

logger = logging.getLogger(__name__)

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

# manhattan距離のチャンク1つあたりの要素数上限
_MANHATTAN_CHUNK_ELEMENTS = 1 << 22


def _record(op: str, inputs: Sequence[Tensor], data: np.ndarray,
            backward: BackwardFn) -> Tensor:
    """演算結果をTensorにし、必要ならテープに記録する"""
    tape = active_tape()
    needs_grad = tape is not None and builtins.any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs_grad)
    if needs_grad and tape is not None:
        tape.record(op, inputs, out, backward)
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """ブロードキャストで広がった勾配を元の形状に畳み込む"""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, size in enumerate(shape) if size == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} cannot be broadcast")


def _normalize_axis(axis: int, ndim: int, op: str) -> int:
    if not -ndim <= axis < ndim:
        raise DimensionError(f"{op}: axis {axis} is out of range for a tensor of rank {ndim}")
    return axis % ndim


def add(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def backward(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record("add", (a, b), a.data + b.data, backward)


def sub(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)

    def backward(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record("sub", (a, b), a.data - b.data, backward)


def mul(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def backward(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _record("mul", (a, b), a.data * b.data, backward)


def div(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)

    def backward(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        grad_a = _unbroadcast(g / b.data, a.shape)
        grad_b = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return grad_a, grad_b

    return _record("div", (a, b), a.data / b.data, backward)


def neg(a: Any) -> Tensor:
    a = as_tensor(a)
    return _record("neg", (a,), -a.data, lambda g: (-g,))


def power(a: Any, exponent: float) -> Tensor:
    """スカラー指数のべき乗"""
    a = as_tensor(a)
    exponent = float(exponent)

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        return (g * exponent * np.power(a.data, exponent - 1.0),)

    return _record("power", (a,), np.power(a.data, exponent), backward)


def exp(a: Any) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _record("exp", (a,), out, lambda g: (g * out,))


def log(a: Any) -> Tensor:
    a = as_tensor(a)
    return _record("log", (a,), np.log(a.data), lambda g: (g / a.data,))


def sum(a: Any, axis: Any = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape),)

    return _record("sum", (a,), np.sum(a.data, axis=axis, keepdims=keepdims), backward)


def mean(a: Any, axis: Any = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return div(sum(a, axis=axis, keepdims=keepdims), float(count))


def reshape(a: Any, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(tuple(shape))
    except ValueError:
        raise DimensionError(f"reshape: cannot reshape {a.shape} into {tuple(shape)}")
    return _record("reshape", (a,), out, lambda g: (g.reshape(a.shape),))


def transpose(a: Any, axes: Optional[Sequence[int]] = None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    if len(axes) != a.ndim or sorted(ax % a.ndim for ax in axes) != list(range(a.ndim)):
        raise DimensionError(
            f"transpose: axes {tuple(axes)} do not match a tensor of rank {a.ndim}"
        )
    axes = tuple(ax % a.ndim for ax in axes)
    inverse = tuple(np.argsort(axes))
    return _record("transpose", (a,), np.transpose(a.data, axes),
                   lambda g: (np.transpose(g, inverse),))


def _is_basic_index(index: Any) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return builtins.all(
        item is None or item is Ellipsis or isinstance(item, (int, np.integer, slice))
        for item in items
    )


def getitem(a: Any, index: Any) -> Tensor:
    """インデックス参照。整数配列による参照では重複を加算する"""
    a = as_tensor(a)
    basic = _is_basic_index(index)

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        grad = np.zeros_like(a.data)
        if basic:
            grad[index] = g
        else:
            np.add.at(grad, index, g)
        return (grad,)

    return _record("getitem", (a,), a.data[index], backward)


def concat(tensors: Sequence[Any], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("concat: at least one tensor is required")
    axis = _normalize_axis(axis, tensors[0].ndim, "concat")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = ", ".join(str(t.shape) for t in tensors)
        raise DimensionError(f"concat: incompatible shapes {shapes} along axis {axis}")
    boundaries = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g: np.ndarray) -> Sequence[np.ndarray]:
        return np.split(g, boundaries, axis=axis)

    return _record("concat", tensors, out, backward)


def matmul(a: Any, b: Any) -> Tensor:
    """行列積。先頭の次元はバッチとしてブロードキャストする

    Raises:
        DimensionError: 内側の次元が一致しない場合
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: shape mismatch {a.shape} @ {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise DimensionError(f"matmul: batch shapes of {a.shape} and {b.shape} do not broadcast")

    def backward(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        grad_a = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        grad_b = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return grad_a, grad_b

    return _record("matmul", (a, b), a.data @ b.data, backward)


def softmax(x: Any, axis: int = -1) -> Tensor:
    """最大値を引いて安定化したsoftmax

    Raises:
        DimensionError: axisがランク外の場合
    """
    x = as_tensor(x)
    axis = _normalize_axis(axis, x.ndim, "softmax")
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)

    return _record("softmax", (x,), out, backward)


def log_softmax(x: Any, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    axis = _normalize_axis(axis, x.ndim, "log_softmax")
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    out = shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        return (g - np.exp(out) * np.sum(g, axis=axis, keepdims=True),)

    return _record("log_softmax", (x,), out, backward)


def layer_norm(x: Any, gain: Any, bias: Any, eps: float = 1e-6) -> Tensor:
    """最終軸に沿ったLayerNorm

    Args:
        x: 入力 (..., d)
        gain: 形状 (d,) のゲイン
        bias: 形状 (d,) のバイアス
        eps: 分散に加える正の定数

    Raises:
        ConfigurationError: eps <= 0 の場合
        DimensionError: gain/biasの形状が正規化軸と合わない場合
    """
    if eps <= 0:
        raise ConfigurationError(f"layer_norm eps must be positive, got {eps}")
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    width = x.shape[-1]
    if gain.shape != (width,) or bias.shape != (width,):
        raise DimensionError(
            f"layer_norm: gain {gain.shape} and bias {bias.shape} must be ({width},) "
            f"for input {x.shape}"
        )
    centered = x.data - x.data.mean(axis=-1, keepdims=True)
    var = (centered * centered).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = centered * rstd
    out = xhat * gain.data + bias.data

    def backward(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        dxhat = g * gain.data
        grad_x = rstd / width * (
            width * dxhat
            - dxhat.sum(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
        )
        grad_gain = (g * xhat).reshape(-1, width).sum(axis=0)
        grad_bias = g.reshape(-1, width).sum(axis=0)
        return grad_x, grad_gain, grad_bias

    return _record("layer_norm", (x, gain, bias), out, backward)


def gelu(x: Any) -> Tensor:
    """誤差関数による厳密なGELU: x * Phi(x)"""
    x = as_tensor(x)
    cdf = 0.5 * (1.0 + special.erf(x.data / _SQRT2))
    out = x.data * cdf

    def backward(g: np.ndarray) -> Tuple[np.ndarray]:
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.data * x.data)
        return (g * (cdf + x.data * pdf),)

    return _record("gelu", (x,), out, backward)


def _check_pairwise(op: str, a: Tensor, b: Tensor) -> None:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise DimensionError(f"{op}: expected (B, d) and (M, d), got {a.shape} and {b.shape}")


def cosine_distance(a: Any, b: Any) -> Tensor:
    """行ごとのコサイン距離 1 - cos を (B, M) で返す

    ノルムが0の行は距離1、勾配0として扱います。
    """
    a, b = as_tensor(a), as_tensor(b)
    _check_pairwise("cosine_distance", a, b)
    norm_a = np.linalg.norm(a.data, axis=1)
    norm_b = np.linalg.norm(b.data, axis=1)
    zero_a = norm_a == 0.0
    zero_b = norm_b == 0.0
    safe_a = np.where(zero_a, 1.0, norm_a)[:, None]
    safe_b = np.where(zero_b, 1.0, norm_b)[:, None]
    unit_a = a.data / safe_a
    unit_b = b.data / safe_b
    sim = unit_a @ unit_b.T
    out = np.clip(1.0 - sim, 0.0, 2.0)
    # 丸めで [-1, 1] を外れた要素はクリップされ、勾配を持たない
    clipped = (sim > 1.0) | (sim < -1.0)

    def backward(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        gs = np.where(clipped, 0.0, -g)
        grad_a = (gs @ unit_b - (gs * sim).sum(axis=1)[:, None] * unit_a) / safe_a
        grad_b = (gs.T @ unit_a - (gs * sim).sum(axis=0)[:, None] * unit_b) / safe_b
        grad_a[zero_a] = 0.0
        grad_b[zero_b] = 0.0
        return grad_a, grad_b

    return _record("cosine_distance", (a, b), out, backward)


def squared_euclidean_distance(a: Any, b: Any) -> Tensor:
    """行ごとの二乗ユークリッド距離を (B, M) で返す"""
    a, b = as_tensor(a), as_tensor(b)
    _check_pairwise("squared_euclidean_distance", a, b)
    sq_a = np.einsum("ij,ij->i", a.data, a.data)
    sq_b = np.einsum("ij,ij->i", b.data, b.data)
    out = np.maximum(sq_a[:, None] + sq_b[None, :] - 2.0 * (a.data @ b.data.T), 0.0)

    def backward(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        grad_a = 2.0 * (a.data * g.sum(axis=1)[:, None] - g @ b.data)
        grad_b = 2.0 * (b.data * g.sum(axis=0)[:, None] - g.T @ a.data)
        return grad_a, grad_b

    return _record("squared_euclidean_distance", (a, b), out, backward)


def _row_chunks(rows: int, per_row: int) -> range:
    step = builtins.max(1, _MANHATTAN_CHUNK_ELEMENTS // builtins.max(per_row, 1))
    return range(0, rows, step)


def manhattan_distance(a: Any, b: Any) -> Tensor:
    """行ごとのL1距離を (B, M) で返す。メモリを抑えるため行をチャンクに分けて計算する"""
    a, b = as_tensor(a), as_tensor(b)
    _check_pairwise("manhattan_distance", a, b)
    rows, width = a.shape
    units = b.shape[0]
    out = np.empty((rows, units))
    starts = _row_chunks(rows, units * width)
    for start in starts:
        stop = start + starts.step
        diff = a.data[start:stop, None, :] - b.data[None, :, :]
        out[start:stop] = np.abs(diff).sum(axis=2)

    def backward(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        grad_a = np.zeros_like(a.data)
        grad_b = np.zeros_like(b.data)
        for start in starts:
            stop = start + starts.step
            sign = np.sign(a.data[start:stop, None, :] - b.data[None, :, :])
            weighted = g[start:stop, :, None] * sign
            grad_a[start:stop] = weighted.sum(axis=1)
            grad_b -= weighted.sum(axis=0)
        return grad_a, grad_b

    return _record("manhattan_distance", (a, b), out, backward)
