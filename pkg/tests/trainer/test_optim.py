"""AdamWとコサイン学習率のテスト"""

import math

import numpy as np
import pytest

from vitsom.errors import ConfigurationError, ContractError, DimensionError, NumericError
from vitsom.ndgrad import Parameter
from vitsom.trainer import AdamState, AdamW, adamw_step, cosine_lr, decays_weight


def test_cosine_lr_endpoints():
    """両端はlr_initとlr_min、中点はその平均"""
    assert cosine_lr(0, 100, 0.01, 1e-6) == 0.01
    assert cosine_lr(100, 100, 0.01, 1e-6) == 1e-6
    assert cosine_lr(50, 100, 0.01, 0.0) == pytest.approx(0.005)
    assert cosine_lr(25, 100, 1.0) == pytest.approx(0.5 * (1 + math.cos(math.pi / 4)))


def test_cosine_lr_is_non_increasing():
    values = [cosine_lr(k, 40, 0.01, 1e-4) for k in range(41)]
    assert all(b <= a for a, b in zip(values, values[1:]))


def test_cosine_lr_errors():
    with pytest.raises(ConfigurationError):
        cosine_lr(0, 0, 0.01)
    with pytest.raises(ContractError):
        cosine_lr(11, 10, 0.01)


def test_decay_applies_to_weights_only():
    assert decays_weight("model.blocks.0.mlp.fc1.weight")
    assert not decays_weight("model.blocks.0.norm1.gain")
    assert not decays_weight("model.head.bias")
    assert not decays_weight("som.prototypes")
    assert not decays_weight("model.cls_token")


def test_first_step_moves_by_lr_times_sign():
    """1回目はバイアス補正によりおよそ lr * sign(g) だけ動き、減衰は重みだけに掛かる"""
    params = {"fc.weight": np.array([1.0, -2.0]), "fc.bias": np.array([1.0, -2.0])}
    grads = {name: np.array([0.3, -5.0]) for name in params}
    state = adamw_step(params, grads, AdamState(), lr=0.1, weight_decay=0.5)
    assert state.step == 1
    # 減衰: p - 0.1 * 0.5 * p、続いて -0.1 * sign(g)
    np.testing.assert_allclose(params["fc.weight"], [0.95 - 0.1, -1.9 + 0.1], atol=1e-6)
    np.testing.assert_allclose(params["fc.bias"], [1.0 - 0.1, -2.0 + 0.1], atol=1e-6)


def test_missing_gradient_is_zero():
    """勾配がNoneのパラメータは（減衰以外）動かない"""
    params = {"a.bias": np.array([1.0]), "a.weight": np.array([2.0])}
    adamw_step(params, {"a.bias": None, "a.weight": None}, AdamState(), lr=0.1,
               weight_decay=0.5)
    assert params["a.bias"][0] == 1.0
    assert params["a.weight"][0] == pytest.approx(2.0 - 0.1 * 0.5 * 2.0)


def test_non_finite_gradient_updates_nothing():
    """NaNの勾配はパラメータ名を含むNumericErrorで、何も更新しない"""
    params = {"a.weight": np.array([1.0]), "b.weight": np.array([1.0])}
    grads = {"a.weight": np.array([0.5]), "b.weight": np.array([np.nan])}
    state = AdamState()
    with pytest.raises(NumericError, match="b.weight"):
        adamw_step(params, grads, state, lr=0.1, weight_decay=0.0)
    assert params["a.weight"][0] == 1.0
    assert state.step == 0


def test_gradient_shape_mismatch():
    with pytest.raises(DimensionError):
        adamw_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, AdamState(), lr=0.1, weight_decay=0.0)


def test_adamw_minimizes_a_quadratic():
    """(p - 3)^2 を最小化する"""
    p = Parameter(np.array([0.0]), name="x.bias")
    optimizer = AdamW([("x.bias", p)], lr=0.1, weight_decay=0.0)
    for _ in range(300):
        optimizer.zero_grad()
        p.grad = 2.0 * (p.data - 3.0)
        optimizer.step()
    assert p.data[0] == pytest.approx(3.0, abs=0.1)


def test_adamw_duplicate_names():
    p = Parameter(np.zeros(1))
    with pytest.raises(ContractError):
        AdamW([("p", p), ("p", p)])


def test_adamw_load_state():
    """保存したモーメントの読み込みと不一致の検出"""
    p = Parameter(np.zeros((2, 2)))
    optimizer = AdamW([("p.weight", p)])
    p.grad = np.ones((2, 2))
    optimizer.step()
    saved = optimizer.state.copy()

    other = AdamW([("p.weight", Parameter(np.zeros((2, 2))))])
    other.load_state(saved)
    assert other.state.step == 1
    np.testing.assert_array_equal(other.state.m["p.weight"], saved.m["p.weight"])
    saved.m["p.weight"][:] = 7.0
    assert np.all(other.state.m["p.weight"] != 7.0)

    with pytest.raises(ContractError):
        AdamW([("q.weight", Parameter(np.zeros((2, 2))))]).load_state(saved)
    with pytest.raises(DimensionError):
        AdamW([("p.weight", Parameter(np.zeros(3)))]).load_state(saved)
