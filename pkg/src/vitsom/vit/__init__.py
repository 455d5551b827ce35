"""小型Vision Transformerを提供するモジュール。

パッチ埋め込み・エンコーダ・再構成用デコーダ・分類ヘッドを持ち、
SOMに渡す ``z_patches`` と分類に使う ``z_cls`` を出力します。
"""

from .config import Task, VitConfig, parameter_count
from .layers import Attention, Block, Mlp, attention_weights
from .model import ModelOutput, VisionTransformer
from .patches import patchify, unpatchify

__all__ = [
    'Task',
    'VitConfig',
    'parameter_count',
    'Attention',
    'Block',
    'Mlp',
    'attention_weights',
    'ModelOutput',
    'VisionTransformer',
    'patchify',
    'unpatchify',
]
