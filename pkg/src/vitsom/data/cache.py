import logging
from collections import OrderedDict
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

from ..utils.path import normalize_path
from .base import Dataset

logger = logging.getLogger(__name__)

CacheKey = Tuple[str, Tuple[Tuple[str, int, int], ...]]


class DatasetCache:
    """読み込み済みデータセットをキャッシュするクラス。

    キーはファイルの正規化パス・更新時刻・サイズと分割名の組なので、
    ファイルが書き換えられると自動的にミスになります。
    """

    def __init__(self, max_size: int = 8):
        """
        Args:
            max_size: キャッシュの最大エントリ数（超えると最も古いものを捨てる）
        """
        self._cache: "OrderedDict[CacheKey, Dataset]" = OrderedDict()
        self._max_size = max_size
        self._hits = 0
        self._misses = 0

    def _make_key(self, paths: Sequence[Union[str, Path]], split: str) -> Optional[CacheKey]:
        """ファイルの状態からキーを作る。存在しないファイルがあればNone"""
        stamps = []
        for path in paths:
            try:
                stat = Path(path).stat()
            except OSError:
                return None
            stamps.append((normalize_path(path), stat.st_mtime_ns, stat.st_size))
        return (split, tuple(stamps))

    def get(self, paths: Sequence[Union[str, Path]], split: str) -> Optional[Dataset]:
        """キャッシュからデータセットを取得する

        Args:
            paths: データセットを構成するファイル
            split: 分割名

        Returns:
            キャッシュされたデータセット。キャッシュミスの場合はNone
        """
        key = self._make_key(paths, split)
        if key is None or key not in self._cache:
            self._misses += 1
            return None
        self._hits += 1
        self._cache.move_to_end(key)
        return self._cache[key]

    def set(self, paths: Sequence[Union[str, Path]], split: str, dataset: Dataset) -> None:
        """データセットをキャッシュに保存する"""
        key = self._make_key(paths, split)
        if key is None:
            return
        self._cache[key] = dataset
        self._cache.move_to_end(key)
        while len(self._cache) > self._max_size:
            evicted, _ = self._cache.popitem(last=False)
            logger.debug(f"Dataset cache is full. Evicting {evicted[1][0][0]}")

    def clear(self) -> None:
        """キャッシュをクリアする"""
        self._cache.clear()
        self._hits = 0
        self._misses = 0

    @property
    def hit_ratio(self) -> float:
        """キャッシュのヒット率（0.0 - 1.0）"""
        total = self._hits + self._misses
        return self._hits / total if total > 0 else 0.0

    def get_stats(self) -> Dict[str, Union[int, float]]:
        """キャッシュの統計情報を取得する"""
        return {
            'hits': self._hits,
            'misses': self._misses,
            'hit_ratio': self.hit_ratio,
            'datasets': len(self._cache),
        }


# グローバルなキャッシュインスタンス
_global_cache = DatasetCache()


def get_global_cache() -> DatasetCache:
    """グローバルなデータセットキャッシュを取得する"""
    return _global_cache
