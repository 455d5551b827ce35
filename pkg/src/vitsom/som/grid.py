import logging
from enum import Enum
from typing import List, Optional, Tuple, Union

import numpy as np

from ..errors import ConfigurationError, DimensionError, NumericError
from ..ndgrad import Parameter
from ..ndgrad.nn import RngLike, make_rng

logger = logging.getLogger(__name__)

PROTOTYPES_NAME = "som.prototypes"


class DistanceMetric(str, Enum):
    """潜在ベクトルとプロトタイプの距離の種類（euclideanは二乗距離）"""

    COSINE = "cosine"
    EUCLIDEAN = "euclidean"
    MANHATTAN = "manhattan"

    @classmethod
    def parse(cls, value: Union[str, "DistanceMetric"]) -> "DistanceMetric":
        if isinstance(value, DistanceMetric):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            choices = ", ".join(m.value for m in cls)
            raise ConfigurationError(f"unknown metric '{value}' (expected one of: {choices})",
                                     key="metric")


class SomGrid:
    """H×Wの格子上に並んだプロトタイプ集合。

    ユニットの番号は ``index = row * width + col`` です。プロトタイプは
    ``som.prototypes`` という名前の ``Parameter`` として保持し、ViTのパラメータと
    同じオプティマイザで更新されます。
    """

    def __init__(self,
                 height: int,
                 width: int,
                 dim: int,
                 metric: Union[str, DistanceMetric] = DistanceMetric.COSINE,
                 prototypes: Optional[np.ndarray] = None,
                 rng: RngLike = None,
                 init_scale: float = 0.05):
        """
        Args:
            height: 格子の行数
            width: 格子の列数
            dim: プロトタイプの次元
            metric: 距離の種類
            prototypes: (height*width, dim) の初期値。Noneなら一様乱数で初期化
            rng: 初期化に使う乱数生成器またはシード
            init_scale: 一様乱数初期化の範囲 [-init_scale, init_scale]

        Raises:
            ConfigurationError: 寸法が正でない場合
            DimensionError: prototypesの形状が合わない場合
            NumericError: prototypesに非有限値が含まれる場合
        """
        for name, value in (("height", height), ("width", width), ("dim", dim)):
            if value < 1:
                raise ConfigurationError(f"SOM {name} must be positive, got {value}", key=name)
        self.height = int(height)
        self.width = int(width)
        self.dim = int(dim)
        self.metric = DistanceMetric.parse(metric)
        if prototypes is None:
            prototypes = make_rng(rng).uniform(-init_scale, init_scale, (self.n_units, self.dim))
        prototypes = np.array(prototypes, dtype=np.float64)
        if prototypes.shape != (self.n_units, self.dim):
            raise DimensionError(
                f"prototypes of shape {prototypes.shape} do not match a "
                f"{self.height}x{self.width} grid of dim {self.dim}"
            )
        if not np.all(np.isfinite(prototypes)):
            raise NumericError("SOM prototypes contain non-finite values")
        self.prototypes = Parameter(prototypes, name=PROTOTYPES_NAME)
        rows, cols = np.divmod(np.arange(self.n_units), self.width)
        self._coords = np.stack([rows, cols], axis=1).astype(np.float64)
        self._distance_matrix: Optional[np.ndarray] = None

    @property
    def n_units(self) -> int:
        return self.height * self.width

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.height, self.width)

    @property
    def default_t_max(self) -> float:
        """近傍関数の初期温度（格子の一辺の半分）"""
        return max(self.height, self.width) / 2.0

    def _check_index(self, index: int) -> int:
        if not 0 <= index < self.n_units:
            raise IndexError(f"unit index {index} is out of range for {self.n_units} units")
        return int(index)

    def index_of(self, row: int, col: int) -> int:
        if not (0 <= row < self.height and 0 <= col < self.width):
            raise IndexError(f"({row}, {col}) is outside a {self.height}x{self.width} grid")
        return row * self.width + col

    def coord_of(self, index: int) -> Tuple[int, int]:
        row, col = divmod(self._check_index(index), self.width)
        return row, col

    def grid_distance_sq(self, i: int, j: int) -> float:
        """格子座標間の二乗ユークリッド距離"""
        (ri, ci), (rj, cj) = self.coord_of(i), self.coord_of(j)
        return float((ri - rj) ** 2 + (ci - cj) ** 2)

    @property
    def distance_matrix(self) -> np.ndarray:
        """全ユニット対の二乗格子距離 (M, M)"""
        if self._distance_matrix is None:
            diff = self._coords[:, None, :] - self._coords[None, :, :]
            self._distance_matrix = np.einsum("ijk,ijk->ij", diff, diff)
        return self._distance_matrix

    def are_adjacent(self, i: np.ndarray, j: np.ndarray) -> np.ndarray:
        """8近傍で隣接しているか（同一ユニットは隣接とみなさない）"""
        ri, ci = np.divmod(np.asarray(i), self.width)
        rj, cj = np.divmod(np.asarray(j), self.width)
        return np.maximum(np.abs(ri - rj), np.abs(ci - cj)) == 1

    def named_parameters(self) -> List[Tuple[str, Parameter]]:
        return [(PROTOTYPES_NAME, self.prototypes)]

    def with_prototypes(self, prototypes: np.ndarray) -> "SomGrid":
        """同じ格子・距離で別のプロトタイプを持つグリッドを返す"""
        return SomGrid(self.height, self.width, self.dim, self.metric, prototypes=prototypes)

    def copy(self) -> "SomGrid":
        return self.with_prototypes(self.prototypes.data.copy())

    def __repr__(self) -> str:
        return (f"SomGrid(height={self.height}, width={self.width}, dim={self.dim}, "
                f"metric={self.metric.value})")


def grid_distance_sq(grid: SomGrid, i: int, j: int) -> float:
    return grid.grid_distance_sq(i, j)
