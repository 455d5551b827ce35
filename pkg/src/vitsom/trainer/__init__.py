"""学習ループ・オプティマイザ・チェックポイントを提供するモジュール。

ViTのパラメータとSOMのプロトタイプをAdamWで同時に最適化し、
評価・チェックポイント保存・再開を行います。生の画素に対する
古典的な逐次SOMのベースラインも含みます。
"""

from .baseline import BaselineResult, alpha_schedule, train_classic_som
from .checkpoint import Checkpoint
from .loop import (
    CHECKPOINT_NAME,
    METRIC_LOG_NAME,
    StepRecord,
    Trainer,
    TrainResult,
    evaluate,
    evaluate_model,
    load_training_data,
    restore_model,
    train,
)
from .optim import AdamState, AdamW, adamw_step, cosine_lr, decays_weight

__all__ = [
    'AdamState',
    'AdamW',
    'adamw_step',
    'cosine_lr',
    'decays_weight',
    'Checkpoint',
    'StepRecord',
    'Trainer',
    'TrainResult',
    'train',
    'evaluate',
    'evaluate_model',
    'restore_model',
    'load_training_data',
    'CHECKPOINT_NAME',
    'METRIC_LOG_NAME',
    'BaselineResult',
    'alpha_schedule',
    'train_classic_som',
]
