import logging
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterator, List, Optional, Tuple

import numpy as np

from ..errors import ConfigurationError
from .base import Dataset

logger = logging.getLogger(__name__)

Batch = Tuple[np.ndarray, Optional[np.ndarray]]
# (画像, ラベル, 乱数生成器) -> 変換後の画像
BatchTransform = Callable[[np.ndarray, Optional[np.ndarray], np.random.Generator], np.ndarray]


@dataclass(frozen=True)
class BatchIterator:
    """シード付きのミニバッチ分割。エポックeの並びは (seed, e) だけで決まる"""

    batch_size: int
    seed: int = 0
    drop_last: bool = False
    shuffle: bool = True

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}",
                                     key="batch_size")

    def order(self, n: int, epoch: int = 0) -> np.ndarray:
        if not self.shuffle:
            return np.arange(n)
        return np.random.default_rng([self.seed, epoch]).permutation(n)

    def num_batches(self, n: int) -> int:
        if self.drop_last:
            return n // self.batch_size
        return -(-n // self.batch_size)

    def index_batches(self, n: int, epoch: int = 0) -> List[np.ndarray]:
        """エポック内の各バッチのサンプル番号"""
        if self.batch_size > n:
            raise ConfigurationError(
                f"batch_size {self.batch_size} exceeds dataset size {n}", key="batch_size"
            )
        order = self.order(n, epoch)
        return [order[i * self.batch_size:(i + 1) * self.batch_size]
                for i in range(self.num_batches(n))]


def _make_batch(dataset: Dataset, indices: np.ndarray, transform: Optional[BatchTransform],
                rng: np.random.Generator) -> Batch:
    images = dataset.images[indices]
    labels = dataset.labels[indices] if dataset.labels is not None else None
    if transform is not None:
        images = transform(images, labels, rng)
    images = np.array(images, dtype=np.float64)
    images.setflags(write=False)
    if labels is not None:
        labels.setflags(write=False)
    return images, labels


def batches(dataset: Dataset,
            iterator: BatchIterator,
            epoch: int = 0,
            transform: Optional[BatchTransform] = None,
            prefetch: bool = False,
            start: int = 0) -> Iterator[Batch]:
    """1エポック分のバッチを順に返す

    Args:
        dataset: データセット
        iterator: バッチ分割の設定
        epoch: エポック番号（並びとデータ拡張の乱数に使う）
        transform: バッチに適用する変換（データ拡張）
        prefetch: Trueなら次のバッチを別スレッドで準備する
        start: 最初に返すバッチの番号（再開用）

    Yields:
        読み取り専用の (画像, ラベル) の組

    Raises:
        ConfigurationError: batch_sizeがデータセットより大きい場合
    """
    index_batches = iterator.index_batches(len(dataset), epoch)

    def build(position: int) -> Batch:
        rng = np.random.default_rng([iterator.seed, epoch, position])
        return _make_batch(dataset, index_batches[position], transform, rng)

    positions = range(start, len(index_batches))
    if not prefetch:
        for position in positions:
            yield build(position)
        return

    with ThreadPoolExecutor(max_workers=1) as executor:
        pending: Optional[Future] = None
        for position in positions:
            current = pending.result() if pending is not None else build(position)
            pending = executor.submit(build, position + 1) if position + 1 < len(index_batches) \
                else None
            yield current
        logger.debug(f"Prefetched {len(positions)} batches for epoch {epoch}")
