"""学習設定の読み込みと検証を提供するモジュール。

INI形式の設定ファイルを ``configparser`` で読み、検証済みの
``TrainConfig`` に変換します。
"""

from .loader import SCHEMA, RunConfigFile, load_train_config
from .schema import MODEL_OVERRIDES, TASK_DATASETS, TrainConfig

__all__ = [
    'RunConfigFile',
    'load_train_config',
    'SCHEMA',
    'TrainConfig',
    'MODEL_OVERRIDES',
    'TASK_DATASETS',
]
