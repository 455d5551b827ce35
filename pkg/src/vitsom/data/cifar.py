"""CIFAR-10バイナリ形式の読み込み。

各レコードは3073バイトで、ラベル1バイトに続いて 3×32×32 の画素が
チャネル優先で並びます。
"""

import logging
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from ..errors import DataFormatError, DatasetNotFoundError, IntegrityError
from .base import BaseLoader, Dataset, Split

logger = logging.getLogger(__name__)

CIFAR_SIDE = 32
CIFAR_CHANNELS = 3
CIFAR_RECORD = 1 + CIFAR_CHANNELS * CIFAR_SIDE * CIFAR_SIDE
CIFAR_DIRNAME = 'cifar-10-batches-bin'
TRAIN_BATCHES = tuple(f'data_batch_{i}.bin' for i in range(1, 6))
TEST_BATCHES = ('test_batch.bin',)


def read_cifar_batch(path: Union[str, Path]) -> Tuple[np.ndarray, np.ndarray]:
    """1つのバッチファイルを (uint8画像 (N, 3, 32, 32), ラベル (N,)) として読む

    Raises:
        IntegrityError: ファイル長がレコード長の倍数でない場合
        DataFormatError: ラベルが0-9の外の場合
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetNotFoundError(f"CIFAR batch not found: {path}")
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size % CIFAR_RECORD:
        raise IntegrityError(f"{path}: {raw.size} bytes is not a multiple of {CIFAR_RECORD}")
    records = raw.reshape(-1, CIFAR_RECORD)
    labels = records[:, 0]
    if labels.size and labels.max() > 9:
        raise DataFormatError(f"{path}: label {int(labels.max())} outside 0-9")
    images = records[:, 1:].reshape(-1, CIFAR_CHANNELS, CIFAR_SIDE, CIFAR_SIDE)
    return images, labels


def load_cifar10(paths: List[Path], split: Union[str, Split]) -> Dataset:
    parts = [read_cifar_batch(p) for p in paths]
    images = np.concatenate([p[0] for p in parts]) / 255.0
    labels = np.concatenate([p[1] for p in parts]).astype(np.int64)
    logger.debug(f"Loaded {len(labels)} CIFAR-10 images from {len(paths)} batch files")
    return Dataset(name='cifar10', images=images, labels=labels, split=Split.parse(split))


class CifarLoader(BaseLoader):
    name = 'cifar10'

    def files(self, root: Path, split: Split) -> List[Path]:
        directory = root / CIFAR_DIRNAME
        if not directory.is_dir() and (root / 'cifar10' / CIFAR_DIRNAME).is_dir():
            directory = root / 'cifar10' / CIFAR_DIRNAME
        names = TRAIN_BATCHES if split is Split.TRAIN else TEST_BATCHES
        return [directory / name for name in names]

    def load(self, root: Path, split: Split) -> Dataset:
        return load_cifar10(self.files(root, split), split)
