"""評価指標と指標ログを提供するモジュール。

純度・量子化誤差・位相誤差・分類精度と、学習中の指標を追記するCSVログを含みます。
"""

from .classification import accuracy, predictions
from .clustering import (
    ClusterAssignment,
    purity,
    quantization_error,
    quantization_error_from_distances,
    topographic_error,
    topographic_error_from_distances,
)
from .log import FIELDS, MetricLog, format_value, read_metric_log

__all__ = [
    'ClusterAssignment',
    'purity',
    'quantization_error',
    'quantization_error_from_distances',
    'topographic_error',
    'topographic_error_from_distances',
    'accuracy',
    'predictions',
    'FIELDS',
    'MetricLog',
    'format_value',
    'read_metric_log',
]
