"""IDX形式（MNIST, Fashion-MNIST）の読み込み。

ヘッダはビッグエンディアンで、画像は magic 2051・件数・行数・列数、
ラベルは magic 2049・件数です。``.gz`` で圧縮されたファイルも読めます。
"""

import gzip
import logging
import struct
from pathlib import Path
from typing import BinaryIO, List, Union

import numpy as np

from ..errors import DataFormatError, DatasetNotFoundError, IntegrityError
from .base import BaseLoader, Dataset, Split, first_existing

logger = logging.getLogger(__name__)

IDX_IMAGE_MAGIC = 2051
IDX_LABEL_MAGIC = 2049

_FILE_PREFIX = {
    Split.TRAIN: 'train',
    Split.TEST: 't10k',
}


def _open(path: Path) -> BinaryIO:
    if not path.is_file():
        raise DatasetNotFoundError(f"IDX file not found: {path}")
    if path.suffix == '.gz':
        return gzip.open(path, 'rb')
    return open(path, 'rb')


def _read_header(f: BinaryIO, path: Path, fields: int) -> tuple:
    raw = f.read(4 * fields)
    if len(raw) < 4 * fields:
        raise IntegrityError(f"{path}: truncated header ({len(raw)} bytes)")
    return struct.unpack(f'>{fields}I', raw)


def read_idx_images(path: Union[str, Path]) -> np.ndarray:
    """IDX画像ファイルを (N, rows, cols) のuint8配列として読む

    Raises:
        DataFormatError: magicが2051でない場合
        IntegrityError: データが途中で切れている場合
    """
    path = Path(path)
    with _open(path) as f:
        magic, = _read_header(f, path, 1)
        if magic != IDX_IMAGE_MAGIC:
            raise DataFormatError(f"{path}: bad magic {magic}, expected {IDX_IMAGE_MAGIC}")
        count, rows, cols = _read_header(f, path, 3)
        data = f.read()
    expected = count * rows * cols
    if len(data) < expected:
        raise IntegrityError(f"{path}: truncated image data ({len(data)} of {expected} bytes)")
    return np.frombuffer(data, dtype=np.uint8, count=expected).reshape(count, rows, cols)


def read_idx_labels(path: Union[str, Path]) -> np.ndarray:
    """IDXラベルファイルを (N,) のuint8配列として読む"""
    path = Path(path)
    with _open(path) as f:
        magic, = _read_header(f, path, 1)
        if magic != IDX_LABEL_MAGIC:
            raise DataFormatError(f"{path}: bad magic {magic}, expected {IDX_LABEL_MAGIC}")
        count, = _read_header(f, path, 1)
        data = f.read()
    if len(data) < count:
        raise IntegrityError(f"{path}: truncated label data ({len(data)} of {count} bytes)")
    return np.frombuffer(data, dtype=np.uint8, count=count)


def load_idx(images_path: Union[str, Path],
             labels_path: Union[str, Path],
             name: str = 'idx',
             split: Union[str, Split] = Split.TRAIN) -> Dataset:
    """IDXの画像・ラベルの組を読み込み、画素を [0, 1] に正規化する

    Raises:
        IntegrityError: 画像とラベルの件数が一致しない場合
    """
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if len(images) != len(labels):
        raise IntegrityError(
            f"{images_path} has {len(images)} images but {labels_path} has {len(labels)} labels"
        )
    logger.debug(f"Loaded {len(images)} IDX images of {images.shape[1]}x{images.shape[2]}")
    return Dataset(name=name, images=(images[:, None, :, :] / 255.0),
                   labels=labels.astype(np.int64), split=Split.parse(split), num_classes=10)


class IdxLoader(BaseLoader):
    """MNIST系のIDXデータセット。``<root>/<name>/`` または ``<root>/`` のファイルを探す"""

    def __init__(self, name: str):
        self.name = name

    def _candidates(self, root: Path, filename: str) -> List[Path]:
        return [directory / f"{filename}{suffix}"
                for directory in (root / self.name, root)
                for suffix in ('', '.gz')]

    def files(self, root: Path, split: Split) -> List[Path]:
        prefix = _FILE_PREFIX[split]
        return [first_existing(self._candidates(root, f"{prefix}-images-idx3-ubyte")),
                first_existing(self._candidates(root, f"{prefix}-labels-idx1-ubyte"))]

    def load(self, root: Path, split: Split) -> Dataset:
        images_path, labels_path = self.files(root, split)
        return load_idx(images_path, labels_path, name=self.name, split=split)
