"""AdamW（重み減衰を勾配更新から切り離したAdam）とコサイン学習率。"""

import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..errors import ConfigurationError, ContractError, DimensionError, NumericError
from ..ndgrad import Parameter

logger = logging.getLogger(__name__)

DecayRule = Callable[[str], bool]


def decays_weight(name: str) -> bool:
    """重み減衰の対象か。線形層の重み（名前が ``.weight`` で終わるもの）だけを減衰する"""
    return name.endswith('.weight')


def cosine_lr(k: int, total_steps: int, lr_init: float, lr_min: float = 0.0) -> float:
    """コサインアニーリングした学習率

    ``lr_min + 0.5 * (lr_init - lr_min) * (1 + cos(pi * k / K))``。
    両端では lr_init と lr_min をそのまま返します。

    Raises:
        ConfigurationError: total_stepsが正でない場合
        ContractError: kが [0, total_steps] の外にある場合
    """
    if total_steps < 1:
        raise ConfigurationError(f"total_steps must be >= 1, got {total_steps}", key='total_steps')
    if not 0 <= k <= total_steps:
        raise ContractError(f"step {k} is outside [0, {total_steps}]")
    if k == 0:
        return lr_init
    if k == total_steps:
        return lr_min
    return lr_min + 0.5 * (lr_init - lr_min) * (1.0 + math.cos(math.pi * k / total_steps))


@dataclass
class AdamState:
    """パラメータ名ごとの1次・2次モーメントと更新回数"""

    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def zeros_like(cls, params: Mapping[str, np.ndarray]) -> 'AdamState':
        return cls(m={name: np.zeros_like(p) for name, p in params.items()},
                   v={name: np.zeros_like(p) for name, p in params.items()})

    def copy(self) -> 'AdamState':
        return AdamState(m={k: a.copy() for k, a in self.m.items()},
                         v={k: a.copy() for k, a in self.v.items()},
                         step=self.step)


def adamw_step(params: Mapping[str, np.ndarray],
               grads: Mapping[str, Optional[np.ndarray]],
               state: AdamState,
               lr: float,
               weight_decay: float,
               betas: Tuple[float, float] = (0.9, 0.999),
               eps: float = 1e-8,
               decay: DecayRule = decays_weight) -> AdamState:
    """AdamWの1ステップをパラメータ配列にその場で適用する

    減衰 ``p <- p - lr * wd * p`` を先に行い、その後バイアス補正した
    モーメントで ``p <- p - lr * m_hat / (sqrt(v_hat) + eps)`` を適用します。
    勾配がNoneのパラメータは勾配0として扱います。

    Args:
        params: 名前からパラメータ配列への辞書（その場で更新される）
        grads: 名前から勾配への辞書
        state: モーメント（その場で更新される）
        lr: 学習率
        weight_decay: 重み減衰係数
        betas: モーメントの減衰率
        eps: 分母の安定化項
        decay: 減衰を適用するかを名前から判定する関数

    Returns:
        更新後の状態（stateと同じオブジェクト）

    Raises:
        NumericError: 勾配にNaN・無限大が含まれる場合（パラメータ名を含む）
        DimensionError: 勾配の形状がパラメータと一致しない場合
    """
    # 1つでも異常があれば何も更新しない
    for name, param in params.items():
        grad = grads.get(name)
        if grad is None:
            continue
        if grad.shape != param.shape:
            raise DimensionError(
                f"gradient for '{name}' has shape {grad.shape}, parameter has {param.shape}"
            )
        if not np.all(np.isfinite(grad)):
            raise NumericError(f"non-finite gradient for parameter '{name}'")

    beta1, beta2 = betas
    state.step += 1
    correction1 = 1.0 - beta1 ** state.step
    correction2 = 1.0 - beta2 ** state.step
    for name, param in params.items():
        grad = grads.get(name)
        if grad is None:
            grad = np.zeros_like(param)
        if name not in state.m:
            state.m[name] = np.zeros_like(param)
            state.v[name] = np.zeros_like(param)
        m, v = state.m[name], state.v[name]
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        if weight_decay and decay(name):
            param -= lr * weight_decay * param
        param -= lr * (m / correction1) / (np.sqrt(v / correction2) + eps)
    return state


class AdamW:
    """名前付きパラメータを保持するAdamWオプティマイザ"""

    def __init__(self,
                 named_parameters: Sequence[Tuple[str, Parameter]],
                 lr: float = 0.01,
                 betas: Tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8,
                 weight_decay: float = 0.05,
                 decay: DecayRule = decays_weight):
        """
        Args:
            named_parameters: (名前, パラメータ) の列。名前は一意であること
            lr: 既定の学習率
            betas: モーメントの減衰率
            eps: 分母の安定化項
            weight_decay: 重み減衰係数
            decay: 減衰を適用するかを名前から判定する関数

        Raises:
            ContractError: 名前が重複している場合
        """
        self.params: 'OrderedDict[str, Parameter]' = OrderedDict()
        for name, param in named_parameters:
            if name in self.params:
                raise ContractError(f"duplicate parameter name '{name}'")
            self.params[name] = param
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.decay = decay
        self.state = AdamState.zeros_like({n: p.data for n, p in self.params.items()})
        decayed = sum(1 for n in self.params if decay(n))
        logger.debug(f"AdamW over {len(self.params)} tensors ({decayed} with weight decay)")

    def zero_grad(self) -> None:
        for param in self.params.values():
            param.grad = None

    def step(self, lr: Optional[float] = None) -> None:
        """各パラメータの ``grad`` を使って1ステップ更新する"""
        adamw_step({n: p.data for n, p in self.params.items()},
                   {n: p.grad for n, p in self.params.items()},
                   self.state,
                   lr=self.lr if lr is None else lr,
                   weight_decay=self.weight_decay,
                   betas=self.betas,
                   eps=self.eps,
                   decay=self.decay)

    def load_state(self, state: AdamState) -> None:
        """保存したモーメントを読み込む

        Raises:
            ContractError: パラメータ名が一致しない場合
            DimensionError: 形状が一致しない場合
        """
        if set(state.m) != set(self.params) or set(state.v) != set(self.params):
            missing = sorted(set(self.params) - set(state.m))
            raise ContractError(
                f"optimizer state does not match parameters (missing {missing[:3]})"
            )
        for name, param in self.params.items():
            if state.m[name].shape != param.shape or state.v[name].shape != param.shape:
                raise DimensionError(f"optimizer moments for '{name}' do not match {param.shape}")
        self.state = state.copy()
