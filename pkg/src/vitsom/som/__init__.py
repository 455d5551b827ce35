"""バッチ学習できる自己組織化マップを提供するモジュール。

格子トポロジー、BMU探索、ガウス近傍、温度スケジュール、バッチSOM損失、
および検証用の逐次SOM更新を含みます。
"""

from .classic import apply_classic_update, classic_update, exhaustive_bmu_scan
from .distance import find_bmu, pairwise_distance, top2_units
from .export import (
    decode_prototypes,
    load_prototypes,
    prototype_images,
    render_tiles,
    save_prototypes,
    tile_images,
)
from .grid import PROTOTYPES_NAME, DistanceMetric, SomGrid, grid_distance_sq
from .loss import (
    SomOutput,
    neighborhood_matrix,
    neighborhood_weights,
    quantization_objective,
    som_forward,
    som_loss,
)
from .schedule import DEFAULT_T_MIN, TemperatureSchedule, temperature

__all__ = [
    'DistanceMetric',
    'SomGrid',
    'PROTOTYPES_NAME',
    'grid_distance_sq',
    'TemperatureSchedule',
    'DEFAULT_T_MIN',
    'temperature',
    'pairwise_distance',
    'find_bmu',
    'top2_units',
    'SomOutput',
    'neighborhood_matrix',
    'neighborhood_weights',
    'som_forward',
    'som_loss',
    'quantization_objective',
    'classic_update',
    'apply_classic_update',
    'exhaustive_bmu_scan',
    'save_prototypes',
    'load_prototypes',
    'decode_prototypes',
    'prototype_images',
    'tile_images',
    'render_tiles',
]
