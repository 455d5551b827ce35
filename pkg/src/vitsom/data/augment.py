"""学習時のデータ拡張。

分類タスクの学習分割だけに、ゼロパディング後のランダムクロップと左右反転を
適用します。クラスタリングでは入力をそのまま返します。
"""

import logging
from typing import Optional, Union

import numpy as np

from ..vit import Task

logger = logging.getLogger(__name__)

DEFAULT_PAD = 4

SeedLike = Union[None, int, np.random.Generator]


def augment(image: np.ndarray,
            task: Union[str, Task],
            seed: SeedLike = None,
            pad: int = DEFAULT_PAD,
            flip: bool = True,
            force_flip: Optional[bool] = None) -> np.ndarray:
    """1枚の画像 (C, H, W) を拡張する

    Args:
        image: 入力画像
        task: タスク。クラスタリングなら入力をそのまま返す
        seed: 乱数シードまたはGenerator
        pad: 各辺のゼロパディング幅
        flip: 左右反転を許可するか
        force_flip: 反転するかを乱数によらず指定する（Noneなら確率0.5）

    Returns:
        拡張後の画像
    """
    if Task.parse(task) is Task.CLUSTERING:
        return image
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    _, height, width = image.shape
    out = image
    if pad > 0:
        padded = np.pad(image, ((0, 0), (pad, pad), (pad, pad)))
        top, left = rng.integers(0, 2 * pad + 1, size=2)
        out = padded[:, top:top + height, left:left + width]
    do_flip = force_flip if force_flip is not None else bool(rng.random() < 0.5)
    if flip and do_flip:
        out = out[:, :, ::-1]
    return np.ascontiguousarray(out)


def augment_batch(images: np.ndarray,
                  task: Union[str, Task],
                  rng: np.random.Generator,
                  pad: int = DEFAULT_PAD,
                  flip: bool = True) -> np.ndarray:
    """バッチ (B, C, H, W) の各画像を独立に拡張する"""
    if Task.parse(task) is Task.CLUSTERING:
        return images
    return np.stack([augment(image, task, rng, pad=pad, flip=flip) for image in images])
