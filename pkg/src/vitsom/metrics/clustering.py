"""クラスタリングの評価指標。

クラスタはSOMのユニット（各サンプルのBMU）です。
"""

import logging
from dataclasses import dataclass
from typing import Any

import numpy as np
from sklearn.metrics.cluster import contingency_matrix

from ..errors import ContractError
from ..ndgrad import Tensor
from ..som import SomGrid, find_bmu, pairwise_distance, quantization_objective, top2_units

logger = logging.getLogger(__name__)


@dataclass
class ClusterAssignment:
    """サンプルごとのユニット番号と真のラベル"""

    units: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        self.units = np.asarray(self.units, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.units.shape != self.labels.shape:
            raise ContractError(
                f"{len(self.units)} assignments but {len(self.labels)} labels"
            )

    def purity(self) -> float:
        return purity(self.units, self.labels)


def purity(assignments: Any, labels: Any) -> float:
    """各クラスタの多数派ラベルに一致するサンプルの割合

    Raises:
        ContractError: 長さが一致しない、または空の場合
    """
    assignments = np.asarray(assignments).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if assignments.shape != labels.shape:
        raise ContractError(f"{len(assignments)} assignments but {len(labels)} labels")
    if labels.size == 0:
        raise ContractError("purity requires at least one sample")
    # 行がラベル、列がクラスタ。空のクラスタは列に現れない
    table = contingency_matrix(labels, assignments)
    return float(table.max(axis=0).sum() / labels.size)


def quantization_error(z: Any, grid: SomGrid) -> float:
    """BMUまでの距離のサンプル平均"""
    return quantization_objective(z, grid) / len(z)


def quantization_error_from_distances(distances: Any) -> float:
    d = distances.data if isinstance(distances, Tensor) else np.asarray(distances)
    bmus = find_bmu(d)
    return float(d[np.arange(len(bmus)), bmus].mean())


def topographic_error_from_distances(distances: Any, grid: SomGrid) -> float:
    """1位と2位のユニットが8近傍で隣接していないサンプルの割合

    Raises:
        ContractError: ユニットが2つ未満の場合
    """
    if grid.n_units < 2:
        raise ContractError("topographic error requires at least two units")
    top2 = top2_units(distances)
    if len(top2) == 0:
        raise ContractError("topographic error requires at least one sample")
    adjacent = grid.are_adjacent(top2[:, 0], top2[:, 1])
    return float(np.mean(~adjacent))


def topographic_error(z: Any, grid: SomGrid) -> float:
    z = z.detach() if isinstance(z, Tensor) else Tensor(z)
    return topographic_error_from_distances(pairwise_distance(z, grid).data, grid)
