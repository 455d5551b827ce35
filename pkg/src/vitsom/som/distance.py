import logging
from typing import Any, Optional, Union

import numpy as np

from ..errors import DimensionError, NumericError
from ..ndgrad import Tensor, as_tensor, cosine_distance, manhattan_distance
from ..ndgrad import squared_euclidean_distance
from .grid import DistanceMetric, SomGrid

logger = logging.getLogger(__name__)

_KERNELS = {
    DistanceMetric.COSINE: cosine_distance,
    DistanceMetric.EUCLIDEAN: squared_euclidean_distance,
    DistanceMetric.MANHATTAN: manhattan_distance,
}


def pairwise_distance(z: Any, grid: SomGrid,
                      metric: Optional[Union[str, DistanceMetric]] = None) -> Tensor:
    """各サンプルと全プロトタイプの距離 (B, M) を計算する

    Args:
        z: 潜在ベクトル (B, dim)
        grid: SOMグリッド
        metric: 距離の種類。省略時はグリッドの距離

    Returns:
        距離行列。テープが有効ならzとプロトタイプの両方に勾配が流れる

    Raises:
        DimensionError: zの次元がグリッドと一致しない場合
    """
    z = as_tensor(z)
    if z.ndim != 2 or z.shape[1] != grid.dim:
        raise DimensionError(f"latent batch of shape {z.shape} does not match SOM dim {grid.dim}")
    metric = DistanceMetric.parse(metric) if metric is not None else grid.metric
    if metric is DistanceMetric.COSINE:
        zero_samples = np.flatnonzero(~np.any(z.data, axis=1))
        zero_units = np.flatnonzero(~np.any(grid.prototypes.data, axis=1))
        if zero_samples.size or zero_units.size:
            logger.warning(
                f"Zero-norm vectors under cosine distance (samples {zero_samples.tolist()[:5]}, "
                f"units {zero_units.tolist()[:5]}); their distance is defined as 1"
            )
    return _KERNELS[metric](z, grid.prototypes)


def find_bmu(distances: Any) -> np.ndarray:
    """各サンプルの最良一致ユニット（距離最小、同点は小さい番号）

    Raises:
        NumericError: NaNの距離を含むサンプルがある場合
    """
    d = distances.data if isinstance(distances, Tensor) else np.asarray(distances, dtype=np.float64)
    if d.ndim != 2:
        raise DimensionError(f"distances must be (B, M), got shape {d.shape}")
    bad = np.flatnonzero(np.isnan(d).any(axis=1))
    if bad.size:
        raise NumericError(f"NaN distance for sample {int(bad[0])}")
    return np.argmin(d, axis=1)


def top2_units(distances: Any) -> np.ndarray:
    """距離の小さい順に上位2ユニット (B, 2) を返す（同点は小さい番号が先）"""
    d = distances.data if isinstance(distances, Tensor) else np.asarray(distances, dtype=np.float64)
    return np.argsort(d, axis=1, kind="stable")[:, :2]
