"""BMU探索・近傍重み・バッチSOM損失・逐次更新のテスト"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vitsom.errors import ContractError, DimensionError, NumericError
from vitsom.ndgrad import Tape, Tensor
from vitsom.som import (
    SomGrid,
    TemperatureSchedule,
    classic_update,
    exhaustive_bmu_scan,
    find_bmu,
    neighborhood_matrix,
    neighborhood_weights,
    pairwise_distance,
    quantization_objective,
    som_forward,
    som_loss,
    top2_units,
)


@pytest.fixture
def schedule():
    return TemperatureSchedule(t_max=2.0, t_min=0.01, total_steps=10)


@pytest.mark.parametrize("metric", ["cosine", "euclidean", "manhattan"])
def test_find_bmu_matches_exhaustive_scan(metric):
    """ベクトル化したBMUと全探索の結果が一致する"""
    rng = np.random.default_rng(0)
    grid = SomGrid(4, 5, 6, metric=metric, prototypes=rng.normal(size=(20, 6)))
    z = rng.normal(size=(30, 6))
    bmus = find_bmu(pairwise_distance(z, grid))
    np.testing.assert_array_equal(bmus, exhaustive_bmu_scan(z, grid.prototypes.data, metric))


def test_ties_resolve_to_lowest_index():
    """同じ距離のユニットが複数あれば番号の小さい方"""
    prototypes = np.array([[0.0, 1.0], [1.0, 0.0], [1.0, 0.0], [0.0, -1.0]])
    z = np.array([[2.0, 0.0], [1.0, 1.0]])
    grid = SomGrid(2, 2, 2, metric="euclidean", prototypes=prototypes)
    np.testing.assert_array_equal(find_bmu(pairwise_distance(z, grid)), [1, 0])
    np.testing.assert_array_equal(exhaustive_bmu_scan(z, prototypes, "euclidean"), [1, 0])
    np.testing.assert_array_equal(top2_units(pairwise_distance(z, grid))[0], [1, 2])


def test_find_bmu_rejects_nan():
    with pytest.raises(NumericError):
        find_bmu(np.array([[0.0, np.nan], [1.0, 2.0]]))
    with pytest.raises(DimensionError):
        find_bmu(np.zeros(3))


def test_pairwise_distance_checks_dimension():
    grid = SomGrid(2, 2, 3, rng=0)
    with pytest.raises(DimensionError):
        pairwise_distance(np.zeros((2, 4)), grid)


def test_zero_latent_under_cosine_is_distance_one(log_output):
    """ノルム0の潜在ベクトルは全ユニットへ距離1で、警告を出す"""
    grid = SomGrid(2, 2, 3, rng=0)
    d = pairwise_distance(np.zeros((1, 3)), grid).data
    np.testing.assert_allclose(d, np.ones((1, 4)))
    assert "Zero-norm" in log_output.getvalue()


def test_neighborhood_weights():
    """BMUで1、格子距離に応じてガウス的に減衰する"""
    grid = SomGrid(3, 3, 1, rng=0)
    schedule = TemperatureSchedule(t_max=1.0, t_min=0.5, total_steps=4)
    h = neighborhood_weights(grid, 4, 0, schedule)
    assert h[4] == 1.0
    assert h[1] == pytest.approx(np.exp(-0.5))
    assert h[0] == pytest.approx(np.exp(-1.0))
    with pytest.raises(IndexError):
        neighborhood_matrix(grid, [9], 1.0)


def test_low_temperature_is_one_hot():
    grid = SomGrid(3, 3, 1, rng=0)
    weights = neighborhood_matrix(grid, [0, 8], 0.001)
    np.testing.assert_array_equal(weights, np.eye(9)[[0, 8]])


def test_som_loss_value(schedule):
    """損失は (1/B) Σ w_ij d_ij"""
    rng = np.random.default_rng(1)
    grid = SomGrid(2, 3, 4, metric="euclidean", prototypes=rng.normal(size=(6, 4)))
    z = rng.normal(size=(5, 4))
    out = som_forward(z, grid, 3, schedule)
    d = ((z[:, None, :] - grid.prototypes.data[None, :, :]) ** 2).sum(axis=2)
    expected = (d * out.weights).sum() / 5
    assert float(out.loss.data) == pytest.approx(expected)
    np.testing.assert_array_equal(out.bmu_indices, d.argmin(axis=1))
    assert out.temperature == schedule(3)


def test_som_loss_gradient_flows_to_latents_and_prototypes(schedule):
    """勾配は潜在ベクトルとプロトタイプの両方に流れる"""
    rng = np.random.default_rng(2)
    grid = SomGrid(2, 2, 3, prototypes=rng.normal(size=(4, 3)))
    z = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
    with Tape() as tape:
        tape.backward(som_loss(z, grid, 0, schedule))
    assert z.grad is not None and np.any(z.grad != 0.0)
    assert grid.prototypes.grad is not None and np.any(grid.prototypes.grad != 0.0)


def test_fixed_bmus(schedule):
    """BMUを与えるとそれを使う"""
    grid = SomGrid(2, 2, 2, rng=0)
    out = som_forward(np.ones((2, 2)), grid, 0, schedule, bmu_indices=[3, 3])
    np.testing.assert_array_equal(out.bmu_indices, [3, 3])
    with pytest.raises(DimensionError):
        som_forward(np.ones((2, 2)), grid, 0, schedule, bmu_indices=[3])


def test_empty_batch_is_rejected(schedule):
    grid = SomGrid(2, 2, 2, rng=0)
    with pytest.raises(ContractError):
        som_loss(np.zeros((0, 2)), grid, 0, schedule)
    with pytest.raises(ContractError):
        quantization_objective(np.zeros((0, 2)), grid)


def test_quantization_objective():
    """Jは各サンプルのBMUまでの距離の和"""
    grid = SomGrid(1, 2, 1, metric="euclidean", prototypes=np.array([[0.0], [10.0]]))
    assert quantization_objective(np.array([[1.0], [9.0], [4.0]]), grid) == 1.0 + 1.0 + 16.0


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), k=st.integers(0, 12), eta=st.floats(1e-3, 0.2))
def test_classic_update_equals_single_sample_gradient_step(seed, k, eta):
    """1サンプルのバッチSOM損失でのSGD（学習率η）は alpha=2η の逐次更新と一致する"""
    rng = np.random.default_rng(seed)
    grid = SomGrid(3, 3, 4, metric="euclidean", prototypes=rng.normal(size=(9, 4)))
    schedule = TemperatureSchedule(t_max=1.5, t_min=0.01, total_steps=10)
    z = rng.normal(size=4)

    expected = classic_update(z, grid, 2.0 * eta, k, schedule).prototypes.data
    with Tape() as tape:
        tape.backward(som_loss(z[None, :], grid, k, schedule))
    stepped = grid.prototypes.data - eta * grid.prototypes.grad
    np.testing.assert_allclose(stepped, expected, atol=1e-12)


def test_classic_update_requires_euclidean(schedule):
    grid = SomGrid(2, 2, 2, rng=0)
    with pytest.raises(ContractError):
        classic_update(np.ones(2), grid, 0.1, 0, schedule)
    euclid = SomGrid(2, 2, 2, metric="euclidean", rng=0)
    with pytest.raises(DimensionError):
        classic_update(np.ones(3), euclid, 0.1, 0, schedule)


def test_classic_update_moves_bmu_toward_sample(schedule):
    """BMUは alpha の割合だけサンプルに近づく"""
    grid = SomGrid(1, 3, 1, metric="euclidean", prototypes=np.array([[0.0], [5.0], [10.0]]))
    updated = classic_update(np.array([4.0]), grid, 0.5, 10, schedule)
    assert updated.prototypes.data[1, 0] == pytest.approx(4.5)
    np.testing.assert_array_equal(grid.prototypes.data[:, 0], [0.0, 5.0, 10.0])


@pytest.mark.parametrize("metric", ["cosine", "euclidean", "manhattan"])
def test_cold_limit_matches_quantization_objective(metric):
    """温度が0に近いとSOM損失は J/B に一致する"""
    rng = np.random.default_rng(9)
    grid = SomGrid(3, 4, 5, metric=metric, prototypes=rng.normal(size=(12, 5)))
    z = rng.normal(size=(16, 5))
    cold = TemperatureSchedule(t_max=2.0, t_min=1e-4, total_steps=10)
    loss = float(som_loss(z, grid, 10, cold).data)
    assert abs(loss - quantization_objective(z, grid) / 16) <= 1e-9


@pytest.mark.parametrize("metric", ["cosine", "euclidean"])
def test_prototype_gradient_step_decreases_loss(metric, schedule):
    """BMUを固定したまま勾配方向に小さく動かすと、SOM損失は必ず下がる"""
    for trial in range(100):
        rng = np.random.default_rng(trial)
        grid = SomGrid(3, 3, 4, metric=metric, prototypes=rng.normal(size=(9, 4)))
        z = rng.normal(size=(6, 4))
        k = trial % 10
        with Tape() as tape:
            out = som_forward(z, grid, k, schedule)
            tape.backward(out.loss)
        moved = grid.with_prototypes(grid.prototypes.data - 1e-4 * grid.prototypes.grad)
        after = som_loss(z, moved, k, schedule, bmu_indices=out.bmu_indices)
        assert float(after.data) < float(out.loss.data), trial
