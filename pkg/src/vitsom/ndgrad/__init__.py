"""逆伝播テープ付きの小さなテンソル演算ライブラリ。

float64のnumpy配列を包む ``Tensor`` と、演算を記録順に保持する ``Tape`` からなる
動的な逆モード自動微分を提供します。ViTとSOM損失を端から端まで学習するのに
必要な演算だけを備えています。
"""

from . import ops
from .gradcheck import GradCheckResult, check_gradients, check_op_gradients, relative_error
from .nn import LayerNorm, Linear, Module, Parameter, make_rng, trunc_normal
from .ops import (
    concat,
    cosine_distance,
    gelu,
    layer_norm,
    log_softmax,
    manhattan_distance,
    matmul,
    softmax,
    squared_euclidean_distance,
)
from .tensor import Tape, Tensor, active_tape, as_tensor, backward

__all__ = [
    'Tensor',
    'Tape',
    'active_tape',
    'as_tensor',
    'backward',
    'ops',
    'matmul',
    'softmax',
    'log_softmax',
    'layer_norm',
    'gelu',
    'concat',
    'cosine_distance',
    'squared_euclidean_distance',
    'manhattan_distance',
    'Module',
    'Parameter',
    'Linear',
    'LayerNorm',
    'make_rng',
    'trunc_normal',
    'GradCheckResult',
    'check_gradients',
    'check_op_gradients',
    'relative_error',
]
