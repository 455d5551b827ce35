import logging
from typing import Tuple, Union

import numpy as np

from ..errors import DimensionError
from ..ndgrad import LayerNorm, Linear, Module, Tensor, as_tensor, gelu, softmax
from ..ndgrad.nn import RngLike, make_rng

logger = logging.getLogger(__name__)


class Attention(Module):
    """マルチヘッド自己注意（スケール付き内積）"""

    def __init__(self, dim: int, num_heads: int, rng: RngLike = None):
        if dim % num_heads:
            raise DimensionError(f"dim {dim} is not divisible by num_heads {num_heads}")
        rng = make_rng(rng)
        self.dim = dim
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.scale = self.head_dim ** -0.5
        self.qkv = Linear(dim, 3 * dim, rng)
        self.proj = Linear(dim, dim, rng)

    def forward(self, tokens: Tensor,
                return_weights: bool = False) -> Union[Tensor, Tuple[Tensor, Tensor]]:
        """
        Args:
            tokens: (n, d) または (B, n, d)
            return_weights: Trueなら注意重み (B, heads, n, n) も返す
        """
        x = as_tensor(tokens)
        single = x.ndim == 2
        if single:
            x = x.reshape(1, *x.shape)
        if x.ndim != 3 or x.shape[-1] != self.dim:
            raise DimensionError(f"attention expects tokens (..., n, {self.dim}), got {x.shape}")
        batch, n, _ = x.shape
        qkv = self.qkv(x).reshape(batch, n, 3, self.num_heads, self.head_dim)
        qkv = qkv.transpose(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        weights = softmax((q @ k.transpose(0, 1, 3, 2)) * self.scale, axis=-1)
        out = (weights @ v).transpose(0, 2, 1, 3).reshape(batch, n, self.dim)
        out = self.proj(out)
        if single:
            out = out.reshape(n, self.dim)
            weights = weights.reshape(self.num_heads, n, n)
        return (out, weights) if return_weights else out


class Mlp(Module):
    def __init__(self, dim: int, hidden: int, rng: RngLike = None):
        rng = make_rng(rng)
        self.fc1 = Linear(dim, hidden, rng)
        self.fc2 = Linear(hidden, dim, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(gelu(self.fc1(x)))


class Block(Module):
    """プレノルム形式のTransformerブロック"""

    def __init__(self, dim: int, num_heads: int, mlp_dim: int, rng: RngLike = None,
                 eps: float = 1e-6):
        rng = make_rng(rng)
        self.norm1 = LayerNorm(dim, eps)
        self.attn = Attention(dim, num_heads, rng)
        self.norm2 = LayerNorm(dim, eps)
        self.mlp = Mlp(dim, mlp_dim, rng)

    def forward(self, x: Tensor) -> Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))


def attention_weights(attn: Attention, tokens: np.ndarray) -> np.ndarray:
    """注意重みだけを配列で返す（テスト・診断用）"""
    _, weights = attn(tokens, return_weights=True)
    return weights.data
