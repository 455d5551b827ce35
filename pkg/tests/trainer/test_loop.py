"""学習ループ・再開・評価のテスト"""

import numpy as np
import pytest

from vitsom.config import TrainConfig
from vitsom.data import Dataset, DatasetCache, Split
from vitsom.errors import ContractError, DimensionError, NumericError
from vitsom.metrics import read_metric_log
from vitsom.trainer import (
    CHECKPOINT_NAME,
    METRIC_LOG_NAME,
    Checkpoint,
    Trainer,
    evaluate,
    load_training_data,
    train,
)
from vitsom.vit import Task, VitConfig


@pytest.fixture
def splits(tiny_config, data_root):
    return load_training_data(tiny_config, data_root, DatasetCache())


@pytest.fixture
def model_config(tiny_config):
    return tiny_config.vit_config((1, 28, 28), 10)


def _assert_same_state(a: Trainer, b: Trainer) -> None:
    np.testing.assert_allclose(a.grid.prototypes.data, b.grid.prototypes.data, atol=1e-12)
    state_a, state_b = a.model.state_dict(), b.model.state_dict()
    for name in state_a:
        np.testing.assert_allclose(state_a[name], state_b[name], atol=1e-12, err_msg=name)
    assert a.optimizer.state.step == b.optimizer.state.step
    assert (a.step, a.epoch, a.position) == (b.step, b.epoch, b.position)


def test_fit_runs_all_steps(tiny_config, model_config, splits):
    """全ステップを学習し、各ステップの記録と評価指標を残す"""
    train_set, test_set = splits
    trainer = Trainer(tiny_config, model_config, total_steps=6)
    result = trainer.fit(train_set, test_set)
    assert trainer.step == 6 and trainer.done
    assert [r.step for r in result.records] == list(range(6))
    for record in result.records:
        assert np.isfinite(record.l_total)
        assert record.l_total == pytest.approx(record.l_nn + record.gamma * record.l_som)
    # eval_interval = 3 なので3ステップ目と最後に評価する
    evaluated = [r.step for r in result.records if r.purity is not None]
    assert evaluated == [2, 5]
    assert 0.0 < result.final_metrics["purity"] <= 1.0
    assert result.final_metrics["quantization_error"] >= 0.0
    assert result.checkpoint.step == 6
    with pytest.raises(ContractError):
        trainer.train_step(train_set.images[:2], train_set.labels[:2])


def test_schedules_in_records(tiny_config, model_config, splits):
    """温度とgammaは記録されたステップのスケジュール値"""
    trainer = Trainer(tiny_config, model_config, total_steps=6)
    records = trainer.fit(splits[0]).records
    assert records[0].temperature == 1.5
    assert records[0].gamma == 0.0
    assert records[0].lr == 0.01
    temperatures = [r.temperature for r in records]
    assert temperatures == sorted(temperatures, reverse=True)


def test_same_seed_is_deterministic(tiny_config, model_config, splits):
    """同じシード・同じデータなら同じプロトタイプとパラメータ"""
    a = Trainer(tiny_config, model_config, total_steps=6)
    b = Trainer(tiny_config, model_config, total_steps=6)
    a.fit(splits[0])
    b.fit(splits[0])
    _assert_same_state(a, b)


def test_different_seed_differs(tiny_config, model_config, splits):
    a = Trainer(tiny_config, model_config, total_steps=2)
    b = Trainer(tiny_config.replace(seed=4), model_config, total_steps=2)
    a.fit(splits[0])
    b.fit(splits[0])
    assert not np.allclose(a.grid.prototypes.data, b.grid.prototypes.data)


@pytest.mark.parametrize("until", [2, 5])
def test_resume_matches_uninterrupted_run(tiny_config, model_config, splits, until):
    """途中で保存して再開した学習は、中断しない学習と同じ状態に至る"""
    train_set = splits[0]
    reference = Trainer(tiny_config, model_config, total_steps=6)
    reference.fit(train_set)

    first = Trainer(tiny_config, model_config, total_steps=6)
    first.fit(train_set, until=until)
    assert first.step == until
    saved = Checkpoint.from_bytes(first.checkpoint().to_bytes())
    resumed = Trainer.from_checkpoint(saved)
    resumed.fit(train_set)
    _assert_same_state(reference, resumed)
    assert resumed.latent_norm == pytest.approx(reference.latent_norm, abs=1e-12)


def test_non_finite_loss_leaves_parameters(tiny_config, model_config, splits):
    """NaNの入力はNumericErrorで、パラメータもステップも変わらない"""
    trainer = Trainer(tiny_config, model_config, total_steps=6)
    before = trainer.model.state_dict()
    images = np.full((2, 1, 28, 28), np.nan)
    with pytest.raises(NumericError):
        trainer.train_step(images, None)
    assert trainer.step == 0
    after = trainer.model.state_dict()
    assert all(np.array_equal(before[name], after[name]) for name in before)


def test_task_mismatch(tiny_config, model_config):
    with pytest.raises(ContractError):
        Trainer(tiny_config.replace(task=Task.CLASSIFICATION), model_config, 6)


def test_image_shape_mismatch(tiny_config, model_config, tiny_dataset):
    trainer = Trainer(tiny_config, model_config, total_steps=6)
    with pytest.raises(DimensionError):
        trainer.fit(tiny_dataset)


def test_classification_training(tiny_config, splits):
    """分類タスクでは精度を評価する"""
    config = tiny_config.replace(task=Task.CLASSIFICATION, augment=True, total_steps=3)
    model_config = config.vit_config((1, 28, 28), 10)
    assert model_config.num_classes == 10
    result = Trainer(config, model_config, total_steps=3).fit(*splits)
    assert 0.0 <= result.final_metrics["accuracy"] <= 1.0
    assert "purity" not in result.final_metrics


def test_train_writes_outputs(tiny_config, data_root, tmp_path):
    """チェックポイントと指標CSVを書き出す"""
    out = tmp_path / "run"
    result = train(tiny_config, out_dir=out, data_root=data_root, cache=DatasetCache())
    assert result.checkpoint_path == out / CHECKPOINT_NAME
    assert Checkpoint.load(out / CHECKPOINT_NAME).step == 6
    rows = read_metric_log(out / METRIC_LOG_NAME)
    assert [row["step"] for row in rows] == [0.0, 1.0, 2.0, 3.0, 4.0, 5.0]
    assert rows[2]["purity"] is not None and rows[1]["purity"] is None


def test_train_resume_appends(tiny_config, data_root, tmp_path):
    """チェックポイントから再開すると指標CSVに追記する"""
    out = tmp_path / "run"
    first = tiny_config.replace(total_steps=6)
    trainer = Trainer(first, first.vit_config((1, 28, 28), 10), total_steps=6)
    train_set, _ = load_training_data(first, data_root, DatasetCache())
    trainer.fit(train_set, until=3)
    partial = trainer.checkpoint()

    result = train(first, out_dir=out, data_root=data_root, resume=partial,
                   cache=DatasetCache())
    assert result.checkpoint.step == 6
    assert [r.step for r in result.records] == [3, 4, 5]


def test_evaluate_checkpoint(tiny_config, model_config, splits):
    """評価はパラメータを変えず、同じ値を返す"""
    checkpoint = Trainer(tiny_config, model_config, total_steps=6).checkpoint()
    test_set = splits[1]
    first = evaluate(checkpoint, test_set)
    assert evaluate(checkpoint, test_set) == first
    assert set(first) == {"purity", "quantization_error", "topographic_error"}


def test_evaluate_rejects_wrong_dataset(tiny_config, model_config):
    """タスクに合わないデータセット・形状はContractError"""
    checkpoint = Trainer(tiny_config, model_config, total_steps=6).checkpoint()
    cifar = Dataset("cifar10", np.zeros((2, 3, 32, 32)), np.array([0, 1]), Split.TEST)
    with pytest.raises(ContractError):
        evaluate(checkpoint, cifar)
    usps = Dataset("usps", np.zeros((2, 1, 16, 16)), np.array([0, 1]), Split.TEST)
    with pytest.raises(ContractError):
        evaluate(checkpoint, usps)


def test_som_and_encoder_both_receive_gradients(tiny_config, model_config, splits):
    """ウォームアップ後のステップでは、プロトタイプとエンコーダの両方に勾配が残る"""
    train_set = splits[0]
    trainer = Trainer(tiny_config, model_config, total_steps=6)
    assert trainer.gamma_schedule.warmup_steps == 1
    trainer.train_step(train_set.images[:8], train_set.labels[:8])
    record = trainer.train_step(train_set.images[8:16], train_set.labels[8:16])
    assert record.gamma > 0.0
    prototype_grad = trainer.grid.prototypes.grad
    assert prototype_grad is not None and np.any(prototype_grad != 0.0)
    encoder_grad = trainer.model.patch_embed.weight.grad
    assert encoder_grad is not None and np.any(encoder_grad != 0.0)
    block_grad = trainer.model.blocks[0].attn.qkv.weight.grad
    assert block_grad is not None and np.any(block_grad != 0.0)


def test_training_drives_total_loss_down():
    """同じ小さなデータを繰り返し学習すると L_total は序盤の1割以下になる"""
    rng = np.random.default_rng(0)
    patterns = rng.uniform(-1.0, 1.0, size=(3, 1, 8, 8))
    labels = np.arange(12) % 3
    images = 0.6 + 0.05 * patterns[labels]
    dataset = Dataset("mnist", images, labels, Split.TRAIN)
    config = TrainConfig(dataset="mnist", total_steps=300, batch_size=12, eval_interval=300,
                         log_interval=1, augment=False, map_height=3, map_width=3,
                         gamma_final=1e-4)
    model_config = VitConfig(image_size=8, patch_size=4, channels=1, embed_dim=16, mlp_dim=32,
                             encoder_depth=1, decoder_depth=1, num_heads=2)
    records = Trainer(config, model_config, total_steps=300).fit(dataset).records
    assert len(records) == 300
    totals = np.array([r.l_total for r in records])
    assert np.all(np.isfinite(totals))
    assert totals[-10:].mean() <= 0.1 * totals[:10].mean()
