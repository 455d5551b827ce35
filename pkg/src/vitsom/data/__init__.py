"""データセットの読み込み・拡張・バッチ分割を行うモジュール。

MNIST / Fashion-MNIST（IDX形式）、USPS（平坦なバイナリ形式）、
CIFAR-10（バイナリバッチ形式）を扱います。
"""

from .augment import augment, augment_batch
from .base import BaseLoader, Dataset, Split
from .batching import BatchIterator, batches
from .cache import DatasetCache, get_global_cache
from .cifar import CifarLoader, load_cifar10, read_cifar_batch
from .idx import IdxLoader, load_idx, read_idx_images, read_idx_labels
from .registry import (
    DECLARED_SIZES,
    DIGIT_DATASETS,
    IMAGE_SHAPES,
    LOADERS,
    get_loader,
    load_dataset,
)
from .usps import UspsLoader, convert_usps_libsvm, load_usps, write_usps_binary

__all__ = [
    'Dataset',
    'Split',
    'BaseLoader',
    'IdxLoader',
    'UspsLoader',
    'CifarLoader',
    'load_idx',
    'read_idx_images',
    'read_idx_labels',
    'load_usps',
    'write_usps_binary',
    'convert_usps_libsvm',
    'load_cifar10',
    'read_cifar_batch',
    'LOADERS',
    'DECLARED_SIZES',
    'DIGIT_DATASETS',
    'IMAGE_SHAPES',
    'get_loader',
    'load_dataset',
    'DatasetCache',
    'get_global_cache',
    'augment',
    'augment_batch',
    'BatchIterator',
    'batches',
]
