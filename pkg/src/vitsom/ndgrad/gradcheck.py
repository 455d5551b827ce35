"""中心差分による勾配検証。

解析的勾配と数値勾配の相対誤差 ``|a - n| / max(|a| + |n|, floor)`` を座標ごとに求め、
最大値を報告します。``floor`` は両者がほぼ0の座標で誤差が発散しないための下限です。
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, List, Optional, Sequence, Tuple

import numpy as np

from .tensor import Tape, Tensor, backward

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-5
OP_FLOOR = 1e-6
MODEL_FLOOR = 1e-4


@dataclass
class GradCheckResult:
    """勾配検証の結果"""

    max_relative_error: float = 0.0
    checked: int = 0
    worst_tensor: Optional[int] = None
    worst_index: Tuple[int, ...] = ()
    analytic: float = 0.0
    numeric: float = 0.0
    errors: List[float] = field(default_factory=list, repr=False)

    def passed(self, tolerance: float) -> bool:
        return self.max_relative_error < tolerance


def relative_error(analytic: Any, numeric: Any, floor: float = OP_FLOOR) -> np.ndarray:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    return np.abs(analytic - numeric) / np.maximum(np.abs(analytic) + np.abs(numeric), floor)


def check_gradients(loss_fn: Callable[[], Tensor],
                    tensors: Sequence[Tensor],
                    step: float = DEFAULT_STEP,
                    floor: float = OP_FLOOR,
                    max_coords: Optional[int] = None,
                    rng: Optional[np.random.Generator] = None) -> GradCheckResult:
    """テンソルのデータをその場で摂動して解析的勾配と比較する

    Args:
        loss_fn: 引数なしでスカラー損失を返す関数（tensorsを参照していること）
        tensors: 検証対象のテンソル。requires_gradでなければ一時的に有効にする
        step: 中心差分の刻み幅
        floor: 相対誤差の分母の下限
        max_coords: テンソルごとに検査する座標数の上限（Noneなら全座標）
        rng: 座標をサンプルする乱数生成器

    Returns:
        最大相対誤差と最悪座標を含む結果
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    previous = [t.requires_grad for t in tensors]
    for t in tensors:
        t.requires_grad = True
        t.grad = None
        # reshape(-1)がビューを返すように連続配列にしておく
        t.data = np.ascontiguousarray(t.data)

    with Tape():
        loss = loss_fn()
        backward(loss)
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]

    result = GradCheckResult()
    try:
        for position, tensor in enumerate(tensors):
            flat = tensor.data.reshape(-1)
            coords = np.arange(flat.size)
            if max_coords is not None and flat.size > max_coords:
                coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
            for coord in coords:
                original = flat[coord]
                flat[coord] = original + step
                plus = loss_fn().item()
                flat[coord] = original - step
                minus = loss_fn().item()
                flat[coord] = original
                numeric = (plus - minus) / (2.0 * step)
                value = analytic[position].reshape(-1)[coord]
                error = float(relative_error(value, numeric, floor))
                result.errors.append(error)
                result.checked += 1
                if error >= result.max_relative_error:
                    result.max_relative_error = error
                    result.worst_tensor = position
                    result.worst_index = tuple(
                        int(i) for i in np.unravel_index(coord, tensor.shape)
                    )
                    result.analytic = float(value)
                    result.numeric = float(numeric)
    finally:
        for t, flag in zip(tensors, previous):
            t.requires_grad = flag
            t.grad = None
    logger.debug(
        f"Gradient check over {result.checked} coordinates: "
        f"max relative error {result.max_relative_error:.3e}"
    )
    return result


def check_op_gradients(op: Callable[..., Tensor],
                       *arrays: np.ndarray,
                       step: float = DEFAULT_STEP,
                       floor: float = OP_FLOOR,
                       rng: Optional[np.random.Generator] = None,
                       **kwargs: Any) -> GradCheckResult:
    """単一の演算を、出力へのランダムな射影をとったスカラーで検証する"""
    rng = rng if rng is not None else np.random.default_rng(0)
    tensors = [Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
    sample = op(*[t.detach() for t in tensors], **kwargs)
    projection = Tensor(rng.uniform(-1.0, 1.0, sample.shape))

    def loss_fn() -> Tensor:
        return (op(*tensors, **kwargs) * projection).sum()

    return check_gradients(loss_fn, tensors, step=step, floor=floor, rng=rng)
