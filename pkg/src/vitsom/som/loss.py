"""バッチSOM損失と量子化目的関数。

損失は ``L = (1/B) Σ_i Σ_j w_ij d_ij(z_i)`` で、``w_ij`` はサンプルiのBMUを中心とする
ガウス近傍の重みです。BMUの選択と重みは定数として扱い、勾配は距離を通じて
潜在ベクトルとプロトタイプの両方に流れます。
"""

import logging
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from ..errors import ContractError, DimensionError
from ..ndgrad import Tensor, as_tensor
from .distance import find_bmu, pairwise_distance
from .grid import SomGrid
from .schedule import TemperatureSchedule, temperature

logger = logging.getLogger(__name__)


@dataclass
class SomOutput:
    """SOM順伝播の中間結果"""

    distances: Tensor
    bmu_indices: np.ndarray
    weights: np.ndarray
    loss: Tensor
    temperature: float


def neighborhood_matrix(grid: SomGrid, bmus: Any, temp: float) -> np.ndarray:
    """BMUごとのガウス近傍重み (B, M)。温度が0に近いとBMUの one-hot になる"""
    bmus = np.asarray(bmus, dtype=np.int64)
    if bmus.size and (bmus.min() < 0 or bmus.max() >= grid.n_units):
        raise IndexError(f"BMU index out of range for {grid.n_units} units")
    return np.exp(-grid.distance_matrix[bmus] / (2.0 * temp * temp))


def neighborhood_weights(grid: SomGrid, bmu: int, k: int,
                         schedule: TemperatureSchedule) -> np.ndarray:
    """反復kでのBMUを中心とする近傍重み h_j (M,)"""
    return neighborhood_matrix(grid, [bmu], temperature(k, schedule))[0]


def som_forward(z: Any, grid: SomGrid, k: int, schedule: TemperatureSchedule,
                bmu_indices: Optional[Any] = None) -> SomOutput:
    """距離・BMU・近傍重み・損失をまとめて計算する

    Args:
        z: 潜在ベクトル (B, dim)
        grid: SOMグリッド
        k: 現在の反復（温度スケジュールの入力）
        schedule: 温度スケジュール
        bmu_indices: 固定するBMU。Noneなら距離から求める

    Raises:
        ContractError: バッチが空の場合
    """
    z = as_tensor(z)
    if z.ndim != 2 or z.shape[0] == 0:
        raise ContractError(f"SOM loss requires a non-empty (B, dim) batch, got shape {z.shape}")
    distances = pairwise_distance(z, grid)
    if bmu_indices is None:
        bmus = find_bmu(distances)
    else:
        bmus = np.asarray(bmu_indices, dtype=np.int64)
        if bmus.shape != (z.shape[0],):
            raise DimensionError(
                f"bmu_indices of shape {bmus.shape} do not match batch {z.shape[0]}"
            )
    temp = temperature(k, schedule)
    weights = neighborhood_matrix(grid, bmus, temp)
    loss = (distances * weights).sum() / float(z.shape[0])
    return SomOutput(distances=distances, bmu_indices=bmus, weights=weights, loss=loss,
                     temperature=temp)


def som_loss(z: Any, grid: SomGrid, k: int, schedule: TemperatureSchedule,
             bmu_indices: Optional[Any] = None) -> Tensor:
    """バッチSOM損失（スカラー）"""
    return som_forward(z, grid, k, schedule, bmu_indices).loss


def quantization_objective(z: Any, grid: SomGrid) -> float:
    """各サンプルのBMUまでの距離の総和 J"""
    z = as_tensor(z)
    if z.ndim != 2 or z.shape[0] == 0:
        raise ContractError(f"quantization objective requires a non-empty batch, got {z.shape}")
    distances = pairwise_distance(z.detach(), grid).data
    bmus = find_bmu(distances)
    return float(distances[np.arange(len(bmus)), bmus].sum())
