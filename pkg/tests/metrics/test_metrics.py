"""評価指標と指標ログのテスト"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vitsom.errors import ContractError
from vitsom.metrics import (
    FIELDS,
    ClusterAssignment,
    MetricLog,
    accuracy,
    format_value,
    purity,
    quantization_error,
    quantization_error_from_distances,
    read_metric_log,
    topographic_error,
    topographic_error_from_distances,
)
from vitsom.ndgrad import Tensor
from vitsom.som import SomGrid, pairwise_distance


def test_purity_by_hand():
    """各クラスタの多数派を数える"""
    units = [0, 0, 0, 1, 1, 2]
    labels = [3, 3, 1, 2, 2, 5]
    assert purity(units, labels) == pytest.approx(5 / 6)
    assert ClusterAssignment(units, labels).purity() == pytest.approx(5 / 6)


def test_purity_bounds():
    """1クラスタなら最頻ラベルの割合、1サンプル1クラスタなら1"""
    labels = np.array([0, 1, 1, 2])
    assert purity(np.zeros(4), labels) == 0.5
    assert purity(np.arange(4), labels) == 1.0


def test_purity_errors():
    with pytest.raises(ContractError):
        purity([0, 1], [0])
    with pytest.raises(ContractError):
        purity([], [])
    with pytest.raises(ContractError):
        ClusterAssignment([0, 1], [0])


@settings(max_examples=50, deadline=None)
@given(
    data=st.lists(st.tuples(st.integers(0, 8), st.integers(0, 4)), min_size=1, max_size=60),
    seed=st.integers(0, 1000),
)
def test_purity_ignores_cluster_and_label_names(data, seed):
    """クラスタ番号・ラベルの付け替えで純度は変わらない"""
    units, labels = map(np.array, zip(*data))
    rng = np.random.default_rng(seed)
    unit_map, label_map = rng.permutation(9) + 100, rng.permutation(5)
    assert purity(unit_map[units], label_map[labels]) == pytest.approx(purity(units, labels))
    assert 0.0 < purity(units, labels) <= 1.0


def _brute_force_purity(units, labels):
    counts = {}
    for unit, label in zip(units, labels):
        counts.setdefault(unit, {})
        counts[unit][label] = counts[unit].get(label, 0) + 1
    return sum(max(c.values()) for c in counts.values()) / len(labels)


def test_purity_matches_brute_force():
    """多数派を辞書で数えた値と50通りの入力で一致する"""
    for seed in range(50):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 200))
        units = rng.integers(0, int(rng.integers(1, 30)), size=n)
        labels = rng.integers(0, 10, size=n)
        assert purity(units, labels) == pytest.approx(_brute_force_purity(units, labels))


def test_accuracy():
    logits = np.array([[2.0, 1.0], [0.0, 3.0], [1.0, 1.0]])
    assert accuracy(logits, [0, 1, 1]) == pytest.approx(2 / 3)
    with pytest.raises(ContractError):
        accuracy(logits, [0, 1])
    with pytest.raises(ContractError):
        accuracy(np.zeros((0, 2)), [])


def test_accuracy_of_random_logits_is_chance():
    """10クラスのランダムなロジットの精度は約0.10"""
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(10_000, 10))
    labels = rng.integers(0, 10, size=10_000)
    assert abs(accuracy(logits, labels) - 0.10) <= 0.01


@settings(max_examples=50, deadline=None)
@given(scale=st.floats(0.1, 100.0), shift=st.floats(-100.0, 100.0), seed=st.integers(0, 1000))
def test_accuracy_is_invariant_to_positive_affine_maps(scale, shift, seed):
    """正の倍率と平行移動でロジットを変えても精度は変わらない"""
    rng = np.random.default_rng(seed)
    # 行ごとに異なる整数値なので同点は生じない
    logits = np.stack([rng.permutation(10) for _ in range(40)]).astype(np.float64)
    labels = rng.integers(0, 10, size=40)
    assert accuracy(scale * logits + shift, labels) == accuracy(logits, labels)


@pytest.fixture
def line_grid():
    """1×3の格子に並んだ1次元プロトタイプ 0, 1, 2"""
    return SomGrid(1, 3, 1, metric="euclidean", prototypes=np.array([[0.0], [1.0], [2.0]]))


def test_quantization_error(line_grid):
    """BMUまでの（二乗）距離の平均"""
    z = np.array([[0.5], [2.0], [-1.0]])
    assert quantization_error(z, line_grid) == pytest.approx((0.25 + 0.0 + 1.0) / 3)
    distances = np.array([[1.0, 0.5], [3.0, 4.0]])
    assert quantization_error_from_distances(distances) == 1.75


def test_topographic_error(line_grid):
    """1位と2位が隣接していないサンプルの割合"""
    # 0.4 は 0 と 1（隣接）、-5 は 0 と 1（隣接）
    assert topographic_error(np.array([[0.4], [-5.0]]), line_grid) == 0.0
    # 1位と2位が0と2（隣接しない）になる距離を直接与える
    distances = np.array([[0.1, 0.9, 0.2], [0.1, 0.2, 0.9]])
    assert topographic_error_from_distances(distances, line_grid) == 0.5


def _brute_force_topographic_error(distances, width):
    errors = 0
    for row in distances:
        first, second = sorted(range(len(row)), key=lambda j: (row[j], j))[:2]
        (r1, c1), (r2, c2) = divmod(first, width), divmod(second, width)
        errors += max(abs(r1 - r2), abs(c1 - c2)) != 1
    return errors / len(distances)


@pytest.mark.parametrize("metric", ["cosine", "euclidean", "manhattan"])
def test_topographic_error_matches_brute_force(metric):
    """上位2ユニットを素朴に数えた結果と一致する"""
    for seed in range(20):
        rng = np.random.default_rng(seed)
        grid = SomGrid(3, 4, 5, metric=metric, prototypes=rng.normal(size=(12, 5)))
        z = rng.normal(size=(30, 5))
        distances = pairwise_distance(Tensor(z), grid).data
        expected = _brute_force_topographic_error(distances, grid.width)
        assert topographic_error(z, grid) == pytest.approx(expected)


def test_topographic_error_needs_two_units():
    grid = SomGrid(1, 1, 2, rng=0)
    with pytest.raises(ContractError):
        topographic_error(np.ones((2, 2)), grid)


def test_format_value():
    assert format_value(None) == ''
    assert format_value(0.1) == '0.1'
    assert format_value(1 / 3) == repr(1 / 3)
    assert format_value(7) == '7'


def test_metric_log_round_trip(tmp_path):
    """ヘッダはFIELDSの順で、空欄はNoneとして読み戻される"""
    path = tmp_path / "metrics.csv"
    with MetricLog(path) as log:
        log.append({"step": 1, "l_nn": 0.5, "unknown": 3})
        log.append({"step": 2, "purity": 1 / 3})
    assert path.read_text().splitlines()[0] == ",".join(FIELDS)
    rows = read_metric_log(path)
    assert rows[0]["step"] == 1.0 and rows[0]["l_nn"] == 0.5 and rows[0]["purity"] is None
    assert rows[1]["purity"] == 1 / 3


def test_metric_log_append_keeps_header(tmp_path):
    """再開時は既存のファイルに追記しヘッダを重ねない"""
    path = tmp_path / "metrics.csv"
    with MetricLog(path) as log:
        log.append({"step": 1})
    with MetricLog(path, append=True) as log:
        log.append({"step": 2})
    lines = path.read_text().splitlines()
    assert len(lines) == 3
    assert [row["step"] for row in read_metric_log(path)] == [1.0, 2.0]


def test_metric_log_bytes_are_deterministic(tmp_path):
    records = [{"step": 3, "l_total": 0.123456789012345, "lr": 1e-4}]
    for name in ("a.csv", "b.csv"):
        with MetricLog(tmp_path / name) as log:
            for record in records:
                log.append(record)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_closed_metric_log(tmp_path):
    log = MetricLog(tmp_path / "m.csv")
    log.close()
    with pytest.raises(ValueError):
        log.append({"step": 1})
