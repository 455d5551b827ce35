"""vitsom - 自己組織化マップで正則化した小さなVision Transformer。

ViTのパッチトークンをバッチ学習のSOMに写し、再構成（クラスタリング）または
分類の損失とSOM損失を同時に最小化します。自動微分は ``vitsom.ndgrad`` の
numpy実装で、GPUや深層学習フレームワークを必要としません。

Example:
    設定ファイルから学習:

    >>> from vitsom import run_training
    >>> result = run_training("mnist.ini", out_dir="runs/mnist")

    チェックポイントの評価:

    >>> from vitsom import run_evaluation
    >>> record = run_evaluation("runs/mnist/checkpoint.ckpt")
    >>> record["purity"]

    ロギングの設定:

    >>> result = run_training("mnist.ini", out_dir="runs/mnist",
    ...                       log_level='INFO',
    ...                       log_file='vitsom.log')
"""

from .config import TrainConfig, load_train_config
from .core import run_evaluation, run_training
from .errors import (
    CheckpointError,
    ConfigurationError,
    ContractError,
    DataFormatError,
    DatasetNotFoundError,
    DimensionError,
    ExportError,
    IntegrityError,
    NumericError,
    VitSomError,
)

__version__ = "0.1.0"
__license__ = "MIT"

__all__ = [
    "run_training",
    "run_evaluation",
    "TrainConfig",
    "load_train_config",
    "VitSomError",
    "ConfigurationError",
    "DimensionError",
    "ContractError",
    "NumericError",
    "DataFormatError",
    "IntegrityError",
    "DatasetNotFoundError",
    "CheckpointError",
    "ExportError",
]
