import logging
from pathlib import Path
from typing import Dict, Optional, Union

from ..errors import ConfigurationError, DatasetNotFoundError
from .base import BaseLoader, Dataset, Split
from .cache import DatasetCache, get_global_cache
from .cifar import CifarLoader
from .idx import IdxLoader
from .usps import USPS_TOTAL, USPS_TRAIN, UspsLoader

logger = logging.getLogger(__name__)

LOADERS: Dict[str, BaseLoader] = {
    'mnist': IdxLoader('mnist'),
    'fashion-mnist': IdxLoader('fashion-mnist'),
    'usps': UspsLoader(),
    'cifar10': CifarLoader(),
}

# 公開されているデータセットの件数
DECLARED_SIZES = {
    ('mnist', Split.TRAIN): 60000,
    ('mnist', Split.TEST): 10000,
    ('fashion-mnist', Split.TRAIN): 60000,
    ('fashion-mnist', Split.TEST): 10000,
    ('usps', Split.ALL): USPS_TOTAL,
    ('usps', Split.TRAIN): USPS_TRAIN,
    ('usps', Split.TEST): USPS_TOTAL - USPS_TRAIN,
    ('cifar10', Split.TRAIN): 50000,
    ('cifar10', Split.TEST): 10000,
}

# 数字のデータセット（左右反転でラベルが壊れる）
DIGIT_DATASETS = frozenset({'mnist', 'usps'})

# 画像の形状 (C, H, W)
IMAGE_SHAPES = {
    'mnist': (1, 28, 28),
    'fashion-mnist': (1, 28, 28),
    'usps': (1, 16, 16),
    'cifar10': (3, 32, 32),
}


def get_loader(name: str) -> BaseLoader:
    """名前に対応するローダーを返す

    Raises:
        ConfigurationError: 未知のデータセット名の場合
    """
    key = name.strip().lower()
    if key not in LOADERS:
        choices = ", ".join(sorted(LOADERS))
        raise ConfigurationError(f"unknown dataset '{name}' (expected one of: {choices})",
                                 key="dataset")
    return LOADERS[key]


def load_dataset(name: str,
                 root: Union[str, Path],
                 split: Union[str, Split],
                 cache: Optional[DatasetCache] = None) -> Dataset:
    """名前とルートディレクトリからデータセットを読み込む

    Args:
        name: 'mnist', 'fashion-mnist', 'usps', 'cifar10'
        root: データセットのルートディレクトリ
        split: 分割
        cache: 使用するキャッシュ。Noneならグローバルキャッシュ

    Raises:
        ConfigurationError: 未知のデータセット名・分割の場合
        DatasetNotFoundError: 必要なファイルが無い場合
    """
    loader = get_loader(name)
    split = Split.parse(split)
    if split not in loader.splits():
        raise ConfigurationError(f"dataset '{loader.name}' has no '{split.value}' split")
    root = Path(root)
    paths = loader.files(root, split)
    missing = [str(p) for p in paths if not p.is_file()]
    if missing:
        raise DatasetNotFoundError(
            f"{loader.name} {split.value} files not found: {', '.join(missing)}"
        )

    cache = cache if cache is not None else get_global_cache()
    cached = cache.get(paths, f"{loader.name}:{split.value}")
    if cached is not None:
        logger.debug(f"Dataset cache hit for {loader.name} {split.value}")
        return cached

    dataset = loader.load(root, split)
    declared = DECLARED_SIZES.get((loader.name, split))
    if declared is not None and len(dataset) != declared:
        logger.warning(
            f"{loader.name} {split.value} has {len(dataset)} samples; "
            f"the published size is {declared}"
        )
    logger.info(
        f"Loaded {loader.name} {split.value}: {len(dataset)} images of {dataset.image_shape}"
    )
    cache.set(paths, f"{loader.name}:{split.value}", dataset)
    return dataset
