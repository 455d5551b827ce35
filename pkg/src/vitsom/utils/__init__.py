"""ユーティリティ関数と共通機能を提供するモジュール。

このモジュールはパスの正規化、データセットルートの解決、
アトミックなファイル書き込みなど、共通で使用される機能を提供します。
"""

from .path import (
    DATA_ROOT_ENV,
    atomic_write_bytes,
    ensure_directory,
    normalize_path,
    resolve_data_root,
)

__all__ = [
    'DATA_ROOT_ENV',
    'atomic_write_bytes',
    'ensure_directory',
    'normalize_path',
    'resolve_data_root',
]
