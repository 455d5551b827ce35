"""バッチBMU探索と逐次全探索の速度比較。"""

import logging
import time
from dataclasses import dataclass
from typing import Dict, Union

import numpy as np

from .errors import ConfigurationError
from .som import DistanceMetric, SomGrid, exhaustive_bmu_scan, find_bmu, pairwise_distance

logger = logging.getLogger(__name__)


@dataclass
class BenchReport:
    """ベンチマーク結果"""

    height: int
    width: int
    dim: int
    batch: int
    metric: str
    batch_seconds: float
    sequential_seconds: float
    identical: bool

    @property
    def batch_throughput(self) -> float:
        return self.batch / max(self.batch_seconds, 1e-12)

    @property
    def sequential_throughput(self) -> float:
        return self.batch / max(self.sequential_seconds, 1e-12)

    @property
    def speedup(self) -> float:
        return self.sequential_seconds / max(self.batch_seconds, 1e-12)

    def as_dict(self) -> Dict[str, Union[int, float, str, bool]]:
        return {
            'map': f"{self.height}x{self.width}",
            'dim': self.dim,
            'batch': self.batch,
            'metric': self.metric,
            'batch_seconds': self.batch_seconds,
            'sequential_seconds': self.sequential_seconds,
            'batch_samples_per_second': self.batch_throughput,
            'sequential_samples_per_second': self.sequential_throughput,
            'speedup': self.speedup,
            'identical': self.identical,
        }

    def format(self) -> str:
        return "\n".join([
            f"map {self.height}x{self.width}, dim {self.dim}, batch {self.batch}, "
            f"metric {self.metric}",
            f"  batch      {self.batch_seconds:10.4f} s  {self.batch_throughput:12.1f} samples/s",
            f"  sequential {self.sequential_seconds:10.4f} s  "
            f"{self.sequential_throughput:12.1f} samples/s",
            f"  speedup    {self.speedup:10.1f}x",
            f"  identical BMUs: {'yes' if self.identical else 'NO'}",
        ])


def bench_bmu(height: int = 40,
              width: int = 40,
              dim: int = 784,
              batch: int = 256,
              metric: Union[str, DistanceMetric] = DistanceMetric.EUCLIDEAN,
              seed: int = 0) -> BenchReport:
    """ランダムなプロトタイプとサンプルでBMU探索の時間を測る

    Raises:
        ConfigurationError: 寸法が正でない場合
    """
    for name, value in (('height', height), ('width', width), ('dim', dim), ('batch', batch)):
        if value < 1:
            raise ConfigurationError(f"{name} must be positive, got {value}", key=name)
    rng = np.random.default_rng(seed)
    grid = SomGrid(height, width, dim, metric, rng=rng, init_scale=1.0)
    z = rng.uniform(-1.0, 1.0, (batch, dim))

    started = time.perf_counter()
    fast = find_bmu(pairwise_distance(z, grid))
    batch_seconds = time.perf_counter() - started

    started = time.perf_counter()
    oracle = exhaustive_bmu_scan(z, grid.prototypes.data, grid.metric)
    sequential_seconds = time.perf_counter() - started

    report = BenchReport(height, width, dim, batch, grid.metric.value, batch_seconds,
                         sequential_seconds, bool(np.array_equal(fast, oracle)))
    if not report.identical:
        logger.warning(f"Batch and sequential BMU disagree on "
                       f"{int(np.sum(fast != oracle))} of {batch} samples")
    logger.info(f"BMU benchmark: speedup {report.speedup:.1f}x")
    return report
