from typing import Any

import numpy as np

from ..errors import ContractError
from ..ndgrad import Tensor


def predictions(logits: Any) -> np.ndarray:
    """最大ロジットのクラス（同点は小さい番号）"""
    values = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    return np.argmax(values, axis=1)


def accuracy(logits: Any, labels: Any) -> float:
    """予測クラスがラベルと一致する割合

    Raises:
        ContractError: ロジットとラベルの件数が一致しない場合
    """
    labels = np.asarray(labels).reshape(-1)
    predicted = predictions(logits)
    if predicted.shape != labels.shape:
        raise ContractError(f"{len(predicted)} predictions but {len(labels)} labels")
    if labels.size == 0:
        raise ContractError("accuracy requires at least one sample")
    return float(np.mean(predicted == labels))
