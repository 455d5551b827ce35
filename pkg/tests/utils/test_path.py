import os
from pathlib import Path
from unittest.mock import patch

import pytest

from vitsom.errors import DatasetNotFoundError
from vitsom.utils.path import (
    DATA_ROOT_ENV,
    atomic_write_bytes,
    ensure_directory,
    normalize_path,
    resolve_data_root,
)


def test_normalize_path_basic():
    assert normalize_path('foo/bar') == str(Path('foo/bar').resolve())
    assert normalize_path('foo\\bar') == str(Path('foo/bar').resolve())
    assert normalize_path('./foo/bar') == str(Path('foo/bar').resolve())


def test_normalize_path_trailing_slash():
    assert not normalize_path('foo/bar/').endswith('/')
    assert normalize_path('/') == '/'  # ルートディレクトリは特別扱い


def test_normalize_path_expands_user(tmp_path):
    with patch.dict(os.environ, {'HOME': str(tmp_path)}):
        assert normalize_path('~/data') == str((tmp_path / 'data').resolve())


def test_resolve_data_root_precedence(tmp_path):
    """コマンドライン > 設定ファイル > 環境変数"""
    cli, config, env = (tmp_path / name for name in ('cli', 'config', 'env'))
    for directory in (cli, config, env):
        directory.mkdir()
    with patch.dict(os.environ, {DATA_ROOT_ENV: str(env)}):
        assert resolve_data_root(cli, config) == cli.resolve()
        assert resolve_data_root(None, config) == config.resolve()
        assert resolve_data_root(None, None) == env.resolve()


def test_resolve_data_root_errors(tmp_path):
    """指定が無い、または存在しないディレクトリはDatasetNotFoundError"""
    with patch.dict(os.environ, {}, clear=True):
        with pytest.raises(DatasetNotFoundError, match=DATA_ROOT_ENV):
            resolve_data_root()
    with pytest.raises(DatasetNotFoundError, match='--dataset-root'):
        resolve_data_root(tmp_path / 'missing')


def test_ensure_directory(tmp_path):
    directory = ensure_directory(tmp_path / 'a' / 'b')
    assert directory.is_dir()
    assert ensure_directory(directory) == directory


def test_atomic_write_bytes(tmp_path):
    """書き込み後は一時ファイルが残らず、既存のファイルは置き換えられる"""
    target = tmp_path / 'out' / 'file.bin'
    atomic_write_bytes(target, b'first')
    atomic_write_bytes(target, b'second')
    assert target.read_bytes() == b'second'
    assert [p.name for p in target.parent.iterdir()] == ['file.bin']


def test_atomic_write_bytes_failure_keeps_old_content(tmp_path):
    """置き換えに失敗しても元の内容が残り、一時ファイルは消える"""
    target = tmp_path / 'file.bin'
    target.write_bytes(b'old')
    with patch('vitsom.utils.path.os.replace', side_effect=OSError('disk full')):
        with pytest.raises(OSError):
            atomic_write_bytes(target, b'new')
    assert target.read_bytes() == b'old'
    assert [p.name for p in tmp_path.iterdir()] == ['file.bin']
