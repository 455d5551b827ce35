"""テストの共通設定とフィクスチャ"""

import struct
from io import StringIO
from pathlib import Path
from typing import Callable, Generator, Tuple
from unittest.mock import patch

import numpy as np
import pytest

from vitsom.config import TrainConfig, load_train_config
from vitsom.data import Dataset, Split, write_usps_binary
from vitsom.logging import get_log_config
from vitsom.trainer import Trainer


def synthetic_digits(count: int, side: int = 28, seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """ラベルごとに明るい矩形の位置が違う、uint8の合成画像 (N, side, side)"""
    rng = np.random.default_rng(seed)
    labels = np.arange(count) % 10
    images = rng.integers(0, 40, size=(count, side, side)).astype(np.uint8)
    block = side // 4
    for i, label in enumerate(labels):
        row = (label // 5) * (side // 2) + block // 2
        col = (label % 5) * (side // 5)
        images[i, row:row + block, col:col + block] = 230
    return images, labels.astype(np.uint8)


def write_idx(directory: Path, prefix: str, images: np.ndarray, labels: np.ndarray) -> None:
    """IDX形式の画像・ラベルファイルを書く"""
    directory.mkdir(parents=True, exist_ok=True)
    count, rows, cols = images.shape
    (directory / f"{prefix}-images-idx3-ubyte").write_bytes(
        struct.pack('>4I', 2051, count, rows, cols) + images.tobytes())
    (directory / f"{prefix}-labels-idx1-ubyte").write_bytes(
        struct.pack('>2I', 2049, count) + labels.tobytes())


@pytest.fixture(autouse=True)
def reset_logging() -> Generator[None, None, None]:
    """テストごとにパッケージロガーを初期状態に戻す"""
    yield
    get_log_config().reset()


@pytest.fixture
def log_output() -> Generator[StringIO, None, None]:
    """パッケージロガーの出力先をStringIOに差し替える"""
    buffer = StringIO()
    with patch('sys.stderr', buffer):
        get_log_config().reset()
        yield buffer


@pytest.fixture
def data_root(tmp_path) -> Path:
    """合成MNIST（学習40件、テスト20件）を置いたデータセットのルート"""
    root = tmp_path / "data"
    train_images, train_labels = synthetic_digits(40, seed=1)
    test_images, test_labels = synthetic_digits(20, seed=2)
    write_idx(root / "mnist", "train", train_images, train_labels)
    write_idx(root / "mnist", "t10k", test_images, test_labels)
    return root


@pytest.fixture
def usps_path(tmp_path) -> Path:
    """合成USPSバイナリ（100件）"""
    images, labels = synthetic_digits(100, side=16, seed=3)
    path = tmp_path / "data" / "usps" / "usps.bin"
    write_usps_binary(images.reshape(100, -1) / 255.0, labels, path)
    return path


@pytest.fixture
def tiny_dataset() -> Dataset:
    """8x8の小さな画像のデータセット（テンソル計算の確認用）"""
    rng = np.random.default_rng(0)
    images = rng.uniform(0.0, 1.0, size=(12, 1, 8, 8))
    return Dataset(name='mnist', images=images, labels=np.arange(12) % 3, split=Split.TEST)


TINY_CONFIG = """\
[run]
task = clustering
seed = 3
total_steps = 6
batch_size = 8
eval_interval = 3
log_interval = 1

[data]
dataset = mnist
root = {root}
augment = false

[model]
patch_size = 7
embed_dim = 8
mlp_dim = 16
encoder_depth = 1
decoder_depth = 1
num_heads = 2
decoder_embed_dim = 8
decoder_mlp_dim = 16
decoder_num_heads = 2

[som]
height = 3
width = 3

[optim]
lr = 0.01
"""


@pytest.fixture
def write_config(tmp_path) -> Callable[..., Path]:
    """設定ファイルを書く関数を返すフィクスチャ"""
    def write(text: str, name: str = "run.ini") -> Path:
        path = tmp_path / name
        path.write_text(text, encoding='utf-8')
        return path
    return write


@pytest.fixture
def tiny_config_path(write_config, data_root) -> Path:
    """合成MNISTで数ステップだけ学習する設定ファイル"""
    return write_config(TINY_CONFIG.format(root=data_root))


@pytest.fixture
def tiny_config(tiny_config_path) -> TrainConfig:
    return load_train_config(tiny_config_path)


@pytest.fixture
def checkpoint_path(tiny_config, tmp_path) -> Path:
    """未学習の小さなモデルのチェックポイント（評価・書き出し用）"""
    model_config = tiny_config.vit_config((1, 28, 28), 10)
    return Trainer(tiny_config, model_config, total_steps=6).checkpoint().save(
        tmp_path / "ckpt" / "checkpoint.ckpt")
