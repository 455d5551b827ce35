"""逐次SOM更新と全探索BMU。

バッチ実装を検証するための独立した参照実装です。どちらもベクトル化した
距離カーネルを使わず、サンプル・ユニットごとに素朴に計算します。
"""

import logging
from typing import Any, Union

import numpy as np

from ..errors import ContractError, DimensionError
from .grid import DistanceMetric, SomGrid
from .loss import neighborhood_weights
from .schedule import TemperatureSchedule

logger = logging.getLogger(__name__)


def _scalar_distance(z: np.ndarray, p: np.ndarray, metric: DistanceMetric) -> float:
    if metric is DistanceMetric.EUCLIDEAN:
        diff = z - p
        return float(np.dot(diff, diff))
    if metric is DistanceMetric.MANHATTAN:
        return float(np.abs(z - p).sum())
    nz = float(np.sqrt(np.dot(z, z)))
    npr = float(np.sqrt(np.dot(p, p)))
    if nz == 0.0 or npr == 0.0:
        return 1.0
    return 1.0 - float(np.dot(z, p)) / (nz * npr)


def exhaustive_bmu_scan(z: Any, prototypes: Any,
                        metric: Union[str, DistanceMetric]) -> np.ndarray:
    """サンプルごとに全ユニットを順に調べてBMUを求める（厳密な < で最初の最小を保持）"""
    z = np.asarray(z, dtype=np.float64)
    prototypes = np.asarray(prototypes, dtype=np.float64)
    metric = DistanceMetric.parse(metric)
    result = np.empty(len(z), dtype=np.int64)
    for i, sample in enumerate(z):
        best, best_distance = 0, np.inf
        for j, proto in enumerate(prototypes):
            distance = _scalar_distance(sample, proto, metric)
            if distance < best_distance:
                best, best_distance = j, distance
        result[i] = best
    return result


def apply_classic_update(prototypes: np.ndarray, z: np.ndarray, alpha: float,
                         h: np.ndarray) -> None:
    """p_j <- p_j + alpha * h_j * (z - p_j) をその場で適用する"""
    prototypes += (alpha * h)[:, None] * (z[None, :] - prototypes)


def classic_update(z: Any, grid: SomGrid, alpha: float, k: int,
                   schedule: TemperatureSchedule) -> SomGrid:
    """1サンプルによる逐次SOM更新を行った新しいグリッドを返す

    Raises:
        ContractError: グリッドの距離がeuclideanでない場合
        DimensionError: zの次元がグリッドと一致しない場合
    """
    if grid.metric is not DistanceMetric.EUCLIDEAN:
        raise ContractError(
            f"classic update requires the euclidean metric, got {grid.metric.value}"
        )
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    if z.shape != (grid.dim,):
        raise DimensionError(f"sample of shape {z.shape} does not match SOM dim {grid.dim}")
    bmu = int(exhaustive_bmu_scan(z[None, :], grid.prototypes.data, grid.metric)[0])
    h = neighborhood_weights(grid, bmu, k, schedule)
    prototypes = grid.prototypes.data.copy()
    apply_classic_update(prototypes, z, alpha, h)
    return grid.with_prototypes(prototypes)
