"""画像とパッチ列の相互変換。

パッチは行優先で並べ、各パッチ内の要素は (行, 列, チャネル) の順に平坦化します。
"""

from typing import Any

from ..errors import ConfigurationError, DimensionError
from ..ndgrad import Tensor, as_tensor


def patchify(images: Any, patch_size: int) -> Tensor:
    """画像 (C, H, W) または (B, C, H, W) をパッチ列に変換する

    Args:
        images: 画像またはそのバッチ
        patch_size: 正方パッチの一辺

    Returns:
        (N, C*ps*ps) または (B, N, C*ps*ps) のテンソル

    Raises:
        ConfigurationError: H, Wがpatch_sizeで割り切れない場合
    """
    x = as_tensor(images)
    single = x.ndim == 3
    if single:
        x = x.reshape(1, *x.shape)
    if x.ndim != 4:
        raise DimensionError(f"patchify expects (C, H, W) or (B, C, H, W), got {x.shape}")
    batch, channels, height, width = x.shape
    if patch_size < 1 or height % patch_size or width % patch_size:
        raise ConfigurationError(
            f"image {height}x{width} is not divisible by patch size {patch_size}"
        )
    rows, cols = height // patch_size, width // patch_size
    out = (
        x.reshape(batch, channels, rows, patch_size, cols, patch_size)
        .transpose(0, 2, 4, 3, 5, 1)
        .reshape(batch, rows * cols, patch_size * patch_size * channels)
    )
    return out.reshape(rows * cols, -1) if single else out


def unpatchify(patches: Any, patch_size: int, channels: int, image_size: int) -> Tensor:
    """patchifyの逆変換。(B, N, P) から (B, C, H, W) を返す"""
    x = as_tensor(patches)
    single = x.ndim == 2
    if single:
        x = x.reshape(1, *x.shape)
    rows = image_size // patch_size
    expected = (rows * rows, channels * patch_size * patch_size)
    if x.ndim != 3 or x.shape[1:] != expected:
        raise DimensionError(f"unpatchify expects (B, {expected[0]}, {expected[1]}), got {x.shape}")
    batch = x.shape[0]
    out = (
        x.reshape(batch, rows, rows, patch_size, patch_size, channels)
        .transpose(0, 5, 1, 3, 2, 4)
        .reshape(batch, channels, image_size, image_size)
    )
    return out.reshape(channels, image_size, image_size) if single else out
