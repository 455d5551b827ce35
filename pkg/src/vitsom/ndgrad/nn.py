import logging
from typing import Any, Dict, Iterator, List, Mapping, Optional, Tuple, Union

import numpy as np
from scipy import stats

from ..errors import ContractError, DimensionError
from . import ops
from .tensor import Tensor

logger = logging.getLogger(__name__)

RngLike = Union[None, int, np.random.Generator]


def make_rng(rng: RngLike) -> np.random.Generator:
    """整数シードまたはGeneratorからGeneratorを得る"""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def trunc_normal(rng: np.random.Generator, shape: Tuple[int, ...], std: float = 0.02) -> np.ndarray:
    """±2σで切断した正規分布からサンプルする"""
    return stats.truncnorm.rvs(-2.0, 2.0, loc=0.0, scale=std, size=shape, random_state=rng)


class Parameter(Tensor):
    """学習対象のテンソル（常にrequires_grad=True）"""

    def __init__(self, data: Any, name: Optional[str] = None):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=True, name=name)


class Module:
    """パラメータを属性として持つ層の基底クラス。

    属性に置いた ``Parameter``・``Module``・それらのリストを代入順にたどり、
    ``blocks.0.attn.qkv.weight`` のようなドット区切りの名前を付けます。
    """

    def forward(self, *args: Any, **kwargs: Any) -> Any:
        raise NotImplementedError

    def __call__(self, *args: Any, **kwargs: Any) -> Any:
        return self.forward(*args, **kwargs)

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for attr, value in vars(self).items():
            if attr.startswith("_"):
                continue
            name = f"{prefix}{attr}"
            if isinstance(value, Parameter):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")
                    elif isinstance(item, Parameter):
                        yield f"{name}.{i}", item

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> Dict[str, np.ndarray]:
        """名前から配列のコピーへの辞書を返す"""
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        """state_dictの値をパラメータへ書き戻す

        Raises:
            ContractError: パラメータが欠けている、または余分なキーがある場合
            DimensionError: 形状が一致しない場合
        """
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise ContractError(f"state dict mismatch: missing {missing}, unexpected {unexpected}")
        for name, param in own.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != param.shape:
                raise DimensionError(
                    f"parameter '{name}' expects shape {param.shape}, got {value.shape}"
                )
            param.data = value.copy()


class Linear(Module):
    """全結合層 y = x W + b（Wは (in, out)）"""

    def __init__(self, in_features: int, out_features: int, rng: RngLike = None,
                 bias: bool = True, std: float = 0.02):
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Parameter(trunc_normal(make_rng(rng), (in_features, out_features), std))
        self.bias = Parameter(np.zeros(out_features)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_features:
            raise DimensionError(
                f"Linear expects last dimension {self.in_features}, got input {x.shape}"
            )
        lead = x.shape[:-1]
        y = x.reshape(-1, self.in_features) @ self.weight
        if self.bias is not None:
            y = y + self.bias
        return y.reshape(*lead, self.out_features)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-6):
        self.eps = eps
        self.gain = Parameter(np.ones(dim))
        self.bias = Parameter(np.zeros(dim))

    def forward(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gain, self.bias, self.eps)
