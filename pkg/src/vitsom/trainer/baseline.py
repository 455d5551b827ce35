"""生の画素に対する逐次（古典的）SOMのベースライン。

1サンプルずつBMUを求め、``p_j <- p_j + alpha_k * h_j * (x - p_j)`` で更新します。
温度はViT-SOMと同じ指数スケジュール、学習率 alpha_k は alpha_max から
alpha_min へ指数的に減衰させます。
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..data import Dataset
from ..errors import ConfigurationError, ContractError
from ..metrics import purity, quantization_error_from_distances, topographic_error_from_distances
from ..som import (
    DEFAULT_T_MIN,
    DistanceMetric,
    SomGrid,
    TemperatureSchedule,
    apply_classic_update,
    find_bmu,
    pairwise_distance,
    temperature,
)

logger = logging.getLogger(__name__)

ALPHA_MAX = 0.5
ALPHA_MIN = 0.01
# これより小さい近傍重みのユニットは更新しない
NEGLIGIBLE_WEIGHT = 1e-12


def alpha_schedule(k: int, total_steps: int, alpha_max: float = ALPHA_MAX,
                   alpha_min: float = ALPHA_MIN) -> float:
    """反復kでの学習率 alpha_max * (alpha_min / alpha_max) ** (k / K)"""
    if not 0 < alpha_min <= alpha_max:
        raise ConfigurationError(f"need 0 < alpha_min <= alpha_max, got {alpha_min}, {alpha_max}")
    if k >= total_steps:
        return alpha_min
    return alpha_max * (alpha_min / alpha_max) ** (k / total_steps)


@dataclass
class BaselineResult:
    """古典SOMの学習結果"""

    grid: SomGrid
    steps: int
    purity: Optional[float]
    quantization_error: float
    topographic_error: float

    @property
    def parameter_count(self) -> int:
        return self.grid.n_units * self.grid.dim


def _flatten(dataset: Dataset) -> np.ndarray:
    return dataset.images.reshape(len(dataset), -1)


def train_classic_som(train_set: Dataset,
                      test_set: Optional[Dataset] = None,
                      height: int = 24,
                      width: int = 24,
                      epochs: int = 1,
                      total_steps: Optional[int] = None,
                      seed: int = 0,
                      alpha_max: float = ALPHA_MAX,
                      alpha_min: float = ALPHA_MIN,
                      t_min: float = DEFAULT_T_MIN) -> BaselineResult:
    """画素ベクトルに対して逐次SOMを学習し、評価データで指標を計算する

    プロトタイプは学習データから無作為に選んだ画像で初期化します。

    Args:
        train_set: 学習データ
        test_set: 評価データ。Noneなら学習データで評価する
        height: 格子の行数
        width: 格子の列数
        epochs: total_stepsが無いときのエポック数（1エポック = 学習データ件数）
        total_steps: 逐次更新の回数
        seed: 乱数シード
        alpha_max: 学習率の初期値
        alpha_min: 学習率の最終値
        t_min: 温度の最終値

    Raises:
        ContractError: 学習データが空の場合
    """
    data = _flatten(train_set)
    n = len(data)
    if n == 0:
        raise ContractError("classic SOM requires a non-empty training set")
    steps = total_steps if total_steps is not None else max(1, epochs) * n
    rng = np.random.default_rng(seed)
    init = data[rng.choice(n, size=height * width, replace=n < height * width)]
    grid = SomGrid(height, width, data.shape[1], DistanceMetric.EUCLIDEAN, prototypes=init)
    schedule = TemperatureSchedule.for_grid(height, width, steps, t_min)
    prototypes = grid.prototypes.data
    lattice = grid.distance_matrix
    logger.info(f"Training classic {height}x{width} SOM on {n} samples for {steps} steps")

    order = np.empty(0, dtype=np.int64)
    for k in range(steps):
        if k % n == 0:
            order = rng.permutation(n)
        x = data[order[k % n]]
        diff = prototypes - x
        bmu = int(np.argmin(np.einsum('ij,ij->i', diff, diff)))
        temp = temperature(k, schedule)
        h = np.exp(-lattice[bmu] / (2.0 * temp * temp))
        active = np.flatnonzero(h > NEGLIGIBLE_WEIGHT)
        block = prototypes[active]
        apply_classic_update(block, x, alpha_schedule(k, steps, alpha_max, alpha_min), h[active])
        prototypes[active] = block
        if (k + 1) % max(1, steps // 10) == 0:
            logger.debug(f"classic SOM step {k + 1}/{steps}: T={temp:.4g}")

    eval_set = test_set if test_set is not None else train_set
    distances = pairwise_distance(_flatten(eval_set), grid).data
    units = find_bmu(distances)
    result = BaselineResult(
        grid=grid,
        steps=steps,
        purity=purity(units, eval_set.labels) if eval_set.labels is not None else None,
        quantization_error=quantization_error_from_distances(distances),
        topographic_error=topographic_error_from_distances(distances, grid),
    )
    logger.info(f"Classic SOM: purity={result.purity} QE={result.quantization_error:.4f} "
                f"TE={result.topographic_error:.4f} parameters={result.parameter_count}")
    return result
