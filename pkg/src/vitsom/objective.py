"""タスク損失とSOM損失を重み付きで合成する目的関数。

``L_total = L_nn + gamma(step) * L_som`` で、gammaは学習初期に線形ウォームアップします。
"""

import logging
from dataclasses import dataclass
from typing import Any, Union

import numpy as np

from .errors import ConfigurationError, ContractError, DataFormatError, DimensionError, NumericError
from .ndgrad import Tensor, as_tensor, log_softmax
from .vit import ModelOutput, Task

logger = logging.getLogger(__name__)

# タスクごとの最終的なSOM損失の重み
DEFAULT_GAMMA = {
    Task.CLUSTERING: 0.005,
    Task.CLASSIFICATION: 0.01,
}
DEFAULT_WARMUP_FRACTION = 0.1


@dataclass(frozen=True)
class GammaSchedule:
    """SOM損失の重みの線形ウォームアップ"""

    gamma_final: float
    warmup_steps: int

    def __post_init__(self) -> None:
        if not self.gamma_final >= 0:
            raise ConfigurationError(f"gamma must be >= 0, got {self.gamma_final}",
                                     key="gamma_final")
        if self.warmup_steps < 0:
            raise ConfigurationError(f"warmup_steps must be >= 0, got {self.warmup_steps}",
                                     key="warmup_fraction")

    @classmethod
    def from_total_steps(cls, gamma_final: float, total_steps: int,
                         warmup_fraction: float = DEFAULT_WARMUP_FRACTION) -> "GammaSchedule":
        """全ステップ数の一定割合をウォームアップにあてる"""
        if not 0.0 <= warmup_fraction <= 1.0:
            raise ConfigurationError(f"warmup_fraction must be in [0, 1], got {warmup_fraction}",
                                     key="warmup_fraction")
        return cls(gamma_final=gamma_final, warmup_steps=int(round(warmup_fraction * total_steps)))

    def __call__(self, step: int) -> float:
        return gamma(step, self)


def gamma(step: int, schedule: GammaSchedule) -> float:
    """ステップでのSOM損失の重み。ウォームアップ中は0からgamma_finalへ線形に増える

    Raises:
        ContractError: stepが負の場合
    """
    if step < 0:
        raise ContractError(f"step must be >= 0, got {step}")
    if step >= schedule.warmup_steps:
        return schedule.gamma_final
    return schedule.gamma_final * (step / schedule.warmup_steps)


@dataclass
class LossTerms:
    """合成した損失と、記録用の各項の値"""

    total: Tensor
    l_nn: float
    l_som: float
    gamma: float

    @property
    def l_total(self) -> float:
        return self.total.item()


def _finite(name: str, value: Tensor) -> None:
    if not np.all(np.isfinite(value.data)):
        raise NumericError(f"non-finite {name}: {value.data.reshape(-1)[:3].tolist()}")


def total_loss(l_nn: Any, l_som: Any, step: int, schedule: GammaSchedule) -> LossTerms:
    """タスク損失とSOM損失を合成する

    Raises:
        NumericError: いずれかの項がNaN・無限大の場合（項の名前を含む）
    """
    l_nn, l_som = as_tensor(l_nn), as_tensor(l_som)
    _finite("L_nn", l_nn)
    _finite("L_som", l_som)
    weight = gamma(step, schedule)
    total = l_nn + l_som * weight
    terms = LossTerms(total=total, l_nn=l_nn.item(), l_som=l_som.item(), gamma=weight)
    logger.debug(
        f"step {step}: L_nn={terms.l_nn:.6g} L_som={terms.l_som:.6g} gamma={weight:.6g} "
        f"L_total={terms.l_total:.6g}"
    )
    return terms


def mse_loss(prediction: Any, target: Any) -> Tensor:
    """画素ごとの平均二乗誤差"""
    prediction, target = as_tensor(prediction), as_tensor(target)
    if prediction.shape != target.shape:
        raise DimensionError(
            f"reconstruction {prediction.shape} does not match target {target.shape}"
        )
    diff = prediction - target
    return (diff * diff).mean()


def cross_entropy(logits: Any, labels: Any) -> Tensor:
    """ロジットとラベルの平均交差エントロピー

    Raises:
        DataFormatError: ラベルがクラス数の範囲外の場合
    """
    logits = as_tensor(logits)
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DimensionError(f"logits {logits.shape} and labels {labels.shape} are not aligned")
    num_classes = logits.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        bad = labels[(labels < 0) | (labels >= num_classes)][0]
        raise DataFormatError(f"label {int(bad)} is out of range for {num_classes} classes")
    picked = log_softmax(logits, axis=-1)[np.arange(len(labels)), labels.astype(np.int64)]
    return -picked.mean()


def task_loss(outputs: Union[ModelOutput, Tensor], targets: Any, task: Union[str, Task]) -> Tensor:
    """タスクに応じた損失。クラスタリングは再構成MSE、分類は交差エントロピー

    Args:
        outputs: モデル出力、または再構成画像/ロジットのテンソル
        targets: クラスタリングでは入力画像、分類ではラベル
        task: タスク
    """
    task = Task.parse(task)
    if isinstance(outputs, ModelOutput):
        prediction = outputs.x_recon if task is Task.CLUSTERING else outputs.logits
        if prediction is None:
            raise ContractError(f"model output has nothing to score for the {task.value} task")
    else:
        prediction = outputs
    if task is Task.CLUSTERING:
        return mse_loss(prediction, targets)
    return cross_entropy(prediction, targets)
