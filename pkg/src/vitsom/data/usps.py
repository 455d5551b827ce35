"""USPSの平坦なバイナリ形式と、libsvm形式からの変換。

バイナリ形式（リトルエンディアン）::

    int32            N
    float32[N*256]   画素（16×16を行優先、値域 [0, 1]）
    uint8[N]         ラベル（0-9）

標準の分割では先頭7,291件が学習、残り2,007件がテストです。
"""

import logging
from pathlib import Path
from typing import Iterable, List, Optional, Tuple, Union

import numpy as np

from ..errors import DataFormatError, DatasetNotFoundError, IntegrityError
from ..utils.path import atomic_write_bytes
from .base import BaseLoader, Dataset, Split, first_existing

logger = logging.getLogger(__name__)

USPS_SIDE = 16
USPS_PIXELS = USPS_SIDE * USPS_SIDE
USPS_TOTAL = 9298
USPS_TRAIN = 7291
USPS_FILENAME = 'usps.bin'


def train_count(total: int) -> int:
    """学習分割の件数。標準のアーカイブ以外は同じ比率で切る"""
    if total == USPS_TOTAL:
        return USPS_TRAIN
    return int(round(total * USPS_TRAIN / USPS_TOTAL))


def load_usps(path: Union[str, Path], split: Union[str, Split] = Split.ALL) -> Dataset:
    """USPSバイナリを読み込む

    Args:
        path: usps.bin のパス
        split: 'train', 'test' または 'all'

    Raises:
        DatasetNotFoundError: ファイルが無い場合
        IntegrityError: ファイル長が件数と一致しない場合
        DataFormatError: 画素が [0, 1] の外、またはラベルが0-9の外の場合
    """
    path = Path(path)
    split = Split.parse(split)
    if not path.is_file():
        raise DatasetNotFoundError(f"USPS file not found: {path}")
    raw = path.read_bytes()
    if len(raw) < 4:
        raise IntegrityError(f"{path}: truncated header")
    count = int(np.frombuffer(raw, dtype='<i4', count=1)[0])
    if count < 0:
        raise DataFormatError(f"{path}: negative sample count {count}")
    expected = 4 + count * USPS_PIXELS * 4 + count
    if len(raw) != expected:
        raise IntegrityError(f"{path}: {len(raw)} bytes, expected {expected} for {count} samples")
    pixels = np.frombuffer(raw, dtype='<f4', count=count * USPS_PIXELS, offset=4)
    labels = np.frombuffer(raw, dtype=np.uint8, count=count, offset=4 + count * USPS_PIXELS * 4)
    if pixels.size and (pixels.min() < 0.0 or pixels.max() > 1.0):
        raise DataFormatError(f"{path}: pixels outside [0, 1]")
    images = pixels.astype(np.float64).reshape(count, 1, USPS_SIDE, USPS_SIDE)
    boundary = train_count(count)
    if split is Split.TRAIN:
        images, labels = images[:boundary], labels[:boundary]
    elif split is Split.TEST:
        images, labels = images[boundary:], labels[boundary:]
    return Dataset(name='usps', images=images, labels=labels.astype(np.int64), split=split)


def write_usps_binary(images: np.ndarray, labels: np.ndarray, path: Union[str, Path]) -> Path:
    """画像 (N, 256) または (N, 16, 16) とラベルをUSPSバイナリとして書く"""
    images = np.asarray(images, dtype='<f4').reshape(-1, USPS_PIXELS)
    labels = np.asarray(labels, dtype=np.uint8)
    if len(images) != len(labels):
        raise IntegrityError(f"{len(images)} images but {len(labels)} labels")
    payload = np.array([len(images)], dtype='<i4').tobytes() + images.tobytes() + labels.tobytes()
    return atomic_write_bytes(path, payload)


def _parse_libsvm(lines: Iterable[str], source: str) -> Tuple[List[np.ndarray], List[int]]:
    images: List[np.ndarray] = []
    labels: List[int] = []
    for lineno, line in enumerate(lines, 1):
        fields = line.split()
        if not fields:
            continue
        try:
            label = int(float(fields[0]))
            row = np.full(USPS_PIXELS, -1.0)
            for item in fields[1:]:
                index, value = item.split(':', 1)
                row[int(index) - 1] = float(value)
        except (ValueError, IndexError) as e:
            raise DataFormatError(f"{source}:{lineno}: malformed libsvm line ({e})")
        if not 1 <= label <= 10:
            raise DataFormatError(f"{source}:{lineno}: label {label} outside 1-10")
        images.append(np.clip((row + 1.0) / 2.0, 0.0, 1.0))
        labels.append(label - 1)
    return images, labels


def convert_usps_libsvm(train_path: Union[str, Path],
                        test_path: Optional[Union[str, Path]],
                        out_path: Union[str, Path]) -> int:
    """libsvm形式（ラベル1-10、画素 [-1, 1]）のUSPSをバイナリ形式に変換する

    学習ファイルの後にテストファイルを連結するため、標準の分割がそのまま保たれます。

    Returns:
        書き出したサンプル数
    """
    images: List[np.ndarray] = []
    labels: List[int] = []
    for source in (train_path, test_path):
        if source is None:
            continue
        source = Path(source)
        if not source.is_file():
            raise DatasetNotFoundError(f"USPS libsvm file not found: {source}")
        with open(source, 'r', encoding='utf-8') as f:
            part_images, part_labels = _parse_libsvm(f, str(source))
        images.extend(part_images)
        labels.extend(part_labels)
    write_usps_binary(np.array(images).reshape(-1, USPS_PIXELS), np.array(labels), out_path)
    logger.info(f"Converted {len(labels)} USPS samples to {out_path}")
    return len(labels)


class UspsLoader(BaseLoader):
    name = 'usps'

    def files(self, root: Path, split: Split) -> List[Path]:
        return [first_existing([root / 'usps' / USPS_FILENAME, root / USPS_FILENAME])]

    def load(self, root: Path, split: Split) -> Dataset:
        return load_usps(self.files(root, split)[0], split)

    def splits(self) -> Tuple[Split, ...]:
        return (Split.TRAIN, Split.TEST, Split.ALL)
