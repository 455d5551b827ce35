import logging
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import ContractError

logger = logging.getLogger(__name__)

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

# 現在有効なテープのスタック（withでネストできる）
_ACTIVE_TAPES: List["Tape"] = []


class Tensor:
    """float64のnumpy配列を包み、逆伝播テープに参加できるテンソル。

    テープが有効な間に ``requires_grad=True`` の入力を含む演算を行うと、
    その演算はテープに記録されます。テープ外の演算はただのnumpy計算です。
    """

    # ndarray + Tensor のときにTensor側の演算子を優先させる
    __array_priority__ = 1000

    def __init__(self, data: Any, requires_grad: bool = False, name: Optional[str] = None):
        """
        Args:
            data: 配列に変換可能な値
            requires_grad: 勾配を計算する対象かどうか
            name: デバッグ・チェックポイント用の名前
        """
        if isinstance(data, Tensor):
            data = data.data
        if isinstance(data, np.ndarray) and data.dtype == np.float64:
            self.data = data
        else:
            self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self.tape_id: Optional[int] = None
        self._tape: Optional["Tape"] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self) -> "Tensor":
        return ops.transpose(self)

    def numpy(self) -> np.ndarray:
        """内部配列をそのまま返す"""
        return self.data

    def item(self) -> float:
        """要素数1のテンソルをPythonのfloatとして返す"""
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        """テープから切り離した同じ値のテンソルを返す"""
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def reshape(self, *shape: Any) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes: int) -> "Tensor":
        return ops.transpose(self, axes if axes else None)

    def sum(self, axis: Any = None, keepdims: bool = False) -> "Tensor":
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Any = None, keepdims: bool = False) -> "Tensor":
        return ops.mean(self, axis=axis, keepdims=keepdims)

    def __getitem__(self, index: Any) -> "Tensor":
        return ops.getitem(self, index)

    def __add__(self, other: Any) -> "Tensor":
        return ops.add(self, other)

    def __radd__(self, other: Any) -> "Tensor":
        return ops.add(other, self)

    def __sub__(self, other: Any) -> "Tensor":
        return ops.sub(self, other)

    def __rsub__(self, other: Any) -> "Tensor":
        return ops.sub(other, self)

    def __mul__(self, other: Any) -> "Tensor":
        return ops.mul(self, other)

    def __rmul__(self, other: Any) -> "Tensor":
        return ops.mul(other, self)

    def __truediv__(self, other: Any) -> "Tensor":
        return ops.div(self, other)

    def __rtruediv__(self, other: Any) -> "Tensor":
        return ops.div(other, self)

    def __matmul__(self, other: Any) -> "Tensor":
        return ops.matmul(self, other)

    def __rmatmul__(self, other: Any) -> "Tensor":
        return ops.matmul(other, self)

    def __neg__(self) -> "Tensor":
        return ops.neg(self)

    def __pow__(self, exponent: float) -> "Tensor":
        return ops.power(self, exponent)

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        grad = ", requires_grad=True" if self.requires_grad else ""
        name = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{grad}{name})"


class TapeEntry(NamedTuple):
    """テープに記録された1つの演算"""

    op: str
    inputs: Tuple[int, ...]
    output: int
    backward: BackwardFn


class Tape:
    """演算を記録順に保持する逆伝播テープ。

    順伝播ごとに新しく作り直す動的テープです。``with Tape():`` のブロック内で
    行った演算だけが記録され、``backward`` は記録の逆順にたどります。
    """

    def __init__(self) -> None:
        self.entries: List[TapeEntry] = []
        self._tensors: List[Tensor] = []

    def __enter__(self) -> "Tape":
        _ACTIVE_TAPES.append(self)
        return self

    def __exit__(self, *exc_info: Any) -> None:
        _ACTIVE_TAPES.remove(self)

    def __len__(self) -> int:
        return len(self.entries)

    def handle(self, tensor: Tensor) -> int:
        """テンソルにこのテープ上のハンドルを割り当てる"""
        if tensor._tape is self and tensor.tape_id is not None:
            return tensor.tape_id
        tensor._tape = self
        tensor.tape_id = len(self._tensors)
        self._tensors.append(tensor)
        return tensor.tape_id

    def record(self, op: str, inputs: Sequence[Tensor], output: Tensor,
               backward: BackwardFn) -> None:
        """演算を記録する。入力のハンドルは必ず出力より小さい"""
        input_handles = tuple(self.handle(t) for t in inputs)
        output_handle = self.handle(output)
        self.entries.append(TapeEntry(op, input_handles, output_handle, backward))

    def backward(self, loss: Tensor) -> None:
        """スカラー損失から記録の逆順に勾配を伝播する

        Args:
            loss: このテープ上で計算されたスカラー

        Raises:
            ContractError: lossがこのテープ上にない、またはスカラーでない場合
        """
        if loss._tape is not self or loss.tape_id is None:
            raise ContractError("backward() requires a loss recorded on this tape")
        if loss.data.size != 1:
            raise ContractError(f"backward() requires a scalar loss, got shape {loss.shape}")

        grads: Dict[int, np.ndarray] = {loss.tape_id: np.ones_like(loss.data)}
        for entry in reversed(self.entries):
            # 出力の勾配はこの時点で確定している（消費側はすべて処理済み）
            out_grad = grads.pop(entry.output, None)
            if out_grad is None:
                continue
            input_grads = entry.backward(out_grad)
            for handle, grad in zip(entry.inputs, input_grads):
                if grad is None or not self._tensors[handle].requires_grad:
                    continue
                if handle in grads:
                    grads[handle] = grads[handle] + grad
                else:
                    grads[handle] = grad

        # 残っているのは葉テンソルの勾配のみ
        for handle, grad in grads.items():
            tensor = self._tensors[handle]
            if not tensor.requires_grad:
                continue
            grad = np.array(grad, dtype=np.float64).reshape(tensor.shape)
            tensor.grad = grad if tensor.grad is None else tensor.grad + grad
        logger.debug(f"Backward pass over {len(self.entries)} recorded ops")


def active_tape() -> Optional[Tape]:
    """現在有効なテープを返す（無ければNone）"""
    return _ACTIVE_TAPES[-1] if _ACTIVE_TAPES else None


def as_tensor(value: Union[Tensor, Any]) -> Tensor:
    """Tensorでなければ定数テンソルに変換する"""
    return value if isinstance(value, Tensor) else Tensor(value)


def backward(loss: Tensor) -> None:
    """lossを記録したテープ上で逆伝播を実行する

    Raises:
        ContractError: lossがテープ上にない、またはスカラーでない場合
    """
    if loss._tape is None:
        raise ContractError("backward() requires a loss computed inside an active Tape")
    loss._tape.backward(loss)


from . import ops  # noqa: E402  (opsはTensorを参照するため末尾でimport)
