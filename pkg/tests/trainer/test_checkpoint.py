"""チェックポイント形式のテスト"""

import json
import struct

import numpy as np
import pytest

from vitsom.errors import CheckpointError
from vitsom.data import DatasetCache
from vitsom.trainer import Checkpoint, Trainer, evaluate_model, load_training_data, restore_model
from vitsom.trainer.checkpoint import MAGIC


@pytest.fixture
def checkpoint(tiny_config):
    model_config = tiny_config.vit_config((1, 28, 28), 10)
    return Trainer(tiny_config, model_config, total_steps=6).checkpoint()


def _header(data):
    (length,) = struct.unpack_from("<Q", data, len(MAGIC))
    return json.loads(data[16:16 + length])


def test_round_trip(checkpoint):
    """バイト列から同じ状態が復元される"""
    restored = Checkpoint.from_bytes(checkpoint.to_bytes())
    assert restored.step == checkpoint.step
    assert restored.config == checkpoint.config
    assert restored.model_config == checkpoint.model_config
    assert restored.schedules == checkpoint.schedules
    assert restored.rng_state == {"seed": 3, "epoch": 0, "position": 0}
    assert restored.total_steps == 6
    np.testing.assert_array_equal(restored.prototypes, checkpoint.prototypes)
    assert restored.model_state.keys() == checkpoint.model_state.keys()
    for name, value in checkpoint.model_state.items():
        np.testing.assert_array_equal(restored.model_state[name], value)
    assert set(restored.adam.m) == set(checkpoint.adam.m)


def test_layout(checkpoint):
    """マジック、リトルエンディアンの長さ、ソート済みJSONヘッダ"""
    data = checkpoint.to_bytes()
    assert data[:8] == b"VITSOMCK"
    header = _header(data)
    assert list(header) == sorted(header)
    for key in ("config", "model", "step", "schedules", "rng_state", "adam_step", "tensors",
                "checksum"):
        assert key in header
    names = [entry["name"] for entry in header["tensors"]]
    assert "som.prototypes" in names
    assert names[0].startswith("model.")
    assert any(name.startswith("adam.m.") for name in names)


def test_bytes_are_deterministic(checkpoint):
    assert checkpoint.to_bytes() == Checkpoint.from_bytes(checkpoint.to_bytes()).to_bytes()


@pytest.mark.parametrize("corrupt", [
    lambda data: b"NOTACKPT" + data[8:],
    lambda data: data[:-1] + bytes([data[-1] ^ 0xFF]),
    lambda data: data[:20],
    lambda data: data[:8],
    lambda data: data[:-8],
])
def test_corrupt_checkpoints(checkpoint, corrupt):
    """マジック・チェックサム・長さの不正はCheckpointError"""
    with pytest.raises(CheckpointError):
        Checkpoint.from_bytes(corrupt(checkpoint.to_bytes()))


def test_invalid_header(checkpoint):
    """壊れたヘッダの内容もCheckpointError"""
    data = checkpoint.to_bytes()
    (length,) = struct.unpack_from("<Q", data, 8)
    header = _header(data)
    payload = data[16 + length:]
    header["config"]["batch_size"] = 0
    text = json.dumps(header, sort_keys=True).encode()
    with pytest.raises(CheckpointError, match="invalid config"):
        Checkpoint.from_bytes(MAGIC + struct.pack("<Q", len(text)) + text + payload)
    del header["step"]
    header["config"]["batch_size"] = 8
    text = json.dumps(header, sort_keys=True).encode()
    with pytest.raises(CheckpointError, match="incomplete"):
        Checkpoint.from_bytes(MAGIC + struct.pack("<Q", len(text)) + text + payload)


def test_save_and_load(checkpoint, tmp_path):
    path = checkpoint.save(tmp_path / "run" / "checkpoint.ckpt")
    assert path.is_file()
    assert Checkpoint.load(path).step == checkpoint.step
    assert [p.name for p in path.parent.iterdir()] == ["checkpoint.ckpt"]


def test_load_errors(tmp_path):
    """読めない・壊れたファイルはパスを含むCheckpointError"""
    with pytest.raises(CheckpointError):
        Checkpoint.load(tmp_path / "missing.ckpt")
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"garbage")
    with pytest.raises(CheckpointError, match="bad.ckpt"):
        Checkpoint.load(bad)


def test_restore_model(checkpoint):
    """チェックポイントからモデルとSOMを作り直す"""
    model, grid = restore_model(checkpoint)
    state = model.state_dict()
    for name, value in checkpoint.model_state.items():
        np.testing.assert_array_equal(state[name], value)
    np.testing.assert_array_equal(grid.prototypes.data, checkpoint.prototypes)
    assert grid.shape == (3, 3)


def test_saved_checkpoint_evaluates_identically(tiny_config, data_root, tmp_path):
    """保存して読み直したチェックポイントは、学習直後と完全に同じ指標を返す"""
    train_set, test_set = load_training_data(tiny_config, data_root, DatasetCache())
    trainer = Trainer(tiny_config, tiny_config.vit_config((1, 28, 28), 10), total_steps=6)
    trainer.fit(train_set, until=4)
    expected = evaluate_model(trainer.model, trainer.grid, test_set)

    path = trainer.checkpoint().save(tmp_path / "saved.ckpt")
    model, grid = restore_model(Checkpoint.load(path))
    assert evaluate_model(model, grid, test_set) == expected
