import logging
import os
import tempfile
from pathlib import Path
from typing import Optional, Union

from ..errors import DatasetNotFoundError

logger = logging.getLogger(__name__)

# データセットルートの環境変数
DATA_ROOT_ENV = 'VITSOM_DATA_ROOT'


def normalize_path(path: Union[str, Path]) -> str:
    """パスを正規化する

    - チルダを展開
    - 相対パス表現 (./, ../) を解決
    - バックスラッシュをスラッシュに変換

    Args:
        path: 正規化するパス

    Returns:
        正規化されたパス文字列
    """
    normalized = str(Path(os.path.expanduser(str(path))).resolve())
    # Windows形式のパスをPOSIX形式に変換
    normalized = normalized.replace('\\', '/')
    if normalized.endswith('/') and len(normalized) > 1:
        normalized = normalized[:-1]
    return normalized


def resolve_data_root(cli_root: Optional[Union[str, Path]] = None,
                      config_root: Optional[Union[str, Path]] = None) -> Path:
    """データセットのルートディレクトリを決める

    優先順位はコマンドライン引数、設定ファイルの ``[data] root``、
    環境変数 ``VITSOM_DATA_ROOT`` の順です。

    Raises:
        DatasetNotFoundError: どれも指定されていない、または存在しない場合
    """
    for source, value in (('--dataset-root', cli_root),
                          ('[data] root', config_root),
                          (DATA_ROOT_ENV, os.environ.get(DATA_ROOT_ENV))):
        if value:
            root = Path(normalize_path(value))
            if not root.is_dir():
                raise DatasetNotFoundError(f"dataset root from {source} does not exist: {root}")
            logger.debug(f"Using dataset root {root} from {source}")
            return root
    raise DatasetNotFoundError(
        f"no dataset root given; pass --dataset-root, set [data] root or {DATA_ROOT_ENV}"
    )


def ensure_directory(path: Union[str, Path]) -> Path:
    """ディレクトリを作成して返す

    Raises:
        PermissionError: 書き込みできない場合
    """
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)
    if not os.access(directory, os.W_OK):
        raise PermissionError(f"Permission denied: {directory}")
    return directory


def atomic_write_bytes(path: Union[str, Path], data: bytes) -> Path:
    """一時ファイルに書いてから置き換えることで、途中の状態を残さずに書き込む"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=str(path.parent))
    try:
        with os.fdopen(fd, 'wb') as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return path
