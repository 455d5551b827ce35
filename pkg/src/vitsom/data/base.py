import hashlib
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from ..errors import ConfigurationError, DataFormatError, DimensionError, IntegrityError

logger = logging.getLogger(__name__)


class Split(str, Enum):
    """データセットの分割。ALLは分割前のアーカイブ全体"""

    TRAIN = "train"
    TEST = "test"
    ALL = "all"

    @classmethod
    def parse(cls, value: Union[str, "Split"]) -> "Split":
        if isinstance(value, Split):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ConfigurationError(f"unknown split '{value}' (expected train, test or all)")


@dataclass
class Dataset:
    """画像と任意のラベルの組。

    画像は (N, C, H, W) のfloat64で値域は [0, 1]、ラベルはint64です。
    """

    name: str
    images: np.ndarray
    labels: Optional[np.ndarray]
    split: Split
    num_classes: Optional[int] = 10

    def __post_init__(self) -> None:
        self.split = Split.parse(self.split)
        self.images = np.asarray(self.images, dtype=np.float64)
        if self.images.ndim != 4:
            raise DimensionError(f"images must be (N, C, H, W), got shape {self.images.shape}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (len(self.images),):
                raise IntegrityError(
                    f"{self.name}: {len(self.images)} images but labels "
                    f"of shape {self.labels.shape}"
                )
            if self.num_classes is not None and self.labels.size and (
                    self.labels.min() < 0 or self.labels.max() >= self.num_classes):
                raise DataFormatError(
                    f"{self.name}: labels outside [0, {self.num_classes})"
                )

    def __len__(self) -> int:
        return len(self.images)

    @property
    def image_shape(self) -> Tuple[int, int, int]:
        _, c, h, w = self.images.shape
        return (c, h, w)

    def take(self, indices: np.ndarray) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        labels = self.labels[indices] if self.labels is not None else None
        return Dataset(self.name, self.images[indices], labels, self.split, self.num_classes)

    def subset(self, n: int, seed: int = 0) -> "Dataset":
        """シード付きで非復元抽出したn件の部分集合（元の順序を保つ）"""
        if n < 1:
            raise ConfigurationError(f"subset size must be positive, got {n}")
        if n >= len(self):
            return self
        rng = np.random.default_rng(seed)
        indices = np.sort(rng.choice(len(self), size=n, replace=False))
        return self.take(indices)

    def checksum(self) -> str:
        """画像とラベルのSHA-256"""
        digest = hashlib.sha256()
        digest.update(np.ascontiguousarray(self.images).tobytes())
        if self.labels is not None:
            digest.update(np.ascontiguousarray(self.labels).tobytes())
        return digest.hexdigest()


class BaseLoader(ABC):
    """データセット形式ごとのローダーの基底クラス"""

    #: ローダーが扱うデータセット名
    name: str = ""

    @abstractmethod
    def files(self, root: Path, split: Split) -> List[Path]:
        """分割に必要なファイルのパスを返す（存在確認はしない）"""
        pass

    @abstractmethod
    def load(self, root: Path, split: Split) -> Dataset:
        """データセットを読み込む

        Raises:
            DatasetNotFoundError: ファイルが存在しない場合
            DataFormatError: ファイル形式が不正な場合
        """
        pass

    def splits(self) -> Tuple[Split, ...]:
        return (Split.TRAIN, Split.TEST)


def first_existing(candidates: List[Path]) -> Path:
    """候補のうち最初に存在するパス。無ければ先頭の候補を返す"""
    for candidate in candidates:
        if candidate.is_file():
            return candidate
    return candidates[0]
