"""``vitsom verify`` が実行する検証スイート。

- ``ndgrad``: 各演算の解析的勾配と中心差分の比較
- ``model``: 小さな構成でのL_total全体の勾配検証
- ``som``: BMUの全探索との一致、バッチ更新と逐次更新の等価性、SOM損失の勾配
- ``schedules``: 温度・学習率・gammaのスケジュールの端点

各ケースは測定値と許容値を持ち、``measured <= tolerance`` で合格です。
``inject_failure`` を指定すると許容値を負にして失敗経路を確認できます。
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError
from .ndgrad import GradCheckResult, Tape, Tensor, check_gradients, check_op_gradients, ops
from .ndgrad.gradcheck import MODEL_FLOOR
from .objective import GammaSchedule, task_loss, total_loss
from .som import (
    DistanceMetric,
    SomGrid,
    TemperatureSchedule,
    classic_update,
    exhaustive_bmu_scan,
    find_bmu,
    pairwise_distance,
    som_forward,
    som_loss,
    temperature,
)
from .trainer import cosine_lr
from .vit import Task, VisionTransformer, VitConfig

logger = logging.getLogger(__name__)

SUITES = ('ndgrad', 'model', 'som', 'schedules')
DEFAULT_TRIALS = {'ndgrad': 100, 'model': 100, 'som': 1000, 'schedules': 50}

GRADIENT_TOLERANCE = 1e-4
EQUIVALENCE_TOLERANCE = 1e-10
SCHEDULE_TOLERANCE = 1e-12
INJECTED_TOLERANCE = -1.0


@dataclass
class CaseResult:
    """1つの検証ケースの結果"""

    suite: str
    name: str
    measured: float
    tolerance: float
    inputs: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.measured <= self.tolerance)


@dataclass
class SuiteResult:
    """スイートごとの結果"""

    name: str
    cases: List[CaseResult] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(case.passed for case in self.cases)

    @property
    def first_failure(self) -> Optional[CaseResult]:
        return next((case for case in self.cases if not case.passed), None)

    def summary(self) -> str:
        failed = sum(1 for case in self.cases if not case.passed)
        status = "PASS" if self.passed else "FAIL"
        return (f"{self.name:<10} {status}  {len(self.cases) - failed}/{len(self.cases)} cases "
                f"({self.seconds:.1f}s)")


def miniature_config(task: Task) -> VitConfig:
    """勾配検証用の最小構成（8x8画像, パッチ4, 埋め込み8, 深さ1）"""
    if Task.parse(task) is Task.CLUSTERING:
        return VitConfig(image_size=8, patch_size=4, channels=1, embed_dim=8, mlp_dim=16,
                         encoder_depth=1, decoder_depth=1, num_heads=2, task=Task.CLUSTERING)
    return VitConfig(image_size=8, patch_size=4, channels=1, embed_dim=8, mlp_dim=16,
                     encoder_depth=1, decoder_depth=0, num_heads=2, num_classes=3,
                     task=Task.CLASSIFICATION)


def model_gradient_check(task: Task,
                         seed: int = 0,
                         batch: int = 2,
                         map_size: int = 4,
                         metric: DistanceMetric = DistanceMetric.COSINE,
                         gamma_value: float = 0.5,
                         coords_per_tensor: int = 3) -> GradCheckResult:
    """小さなViT-SOMのL_totalを、全パラメータとプロトタイプについて中心差分で検証する

    BMUは最初の順伝播で求めたものに固定します（摂動でBMUが入れ替わると
    損失が不連続になるため）。
    """
    task = Task.parse(task)
    rng = np.random.default_rng(seed)
    config = miniature_config(task)
    model = VisionTransformer(config, rng)
    grid = SomGrid(map_size, map_size, config.som_dim, metric, rng=rng, init_scale=0.5)
    images = rng.uniform(0.0, 1.0, (batch,) + config.image_shape)
    labels = rng.integers(0, config.num_classes or 2, size=batch)
    targets = images if task is Task.CLUSTERING else labels
    schedule = TemperatureSchedule.for_grid(map_size, map_size, total_steps=10)
    gammas = GammaSchedule(gamma_final=gamma_value, warmup_steps=0)
    k = int(rng.integers(0, 10))
    bmus = find_bmu(pairwise_distance(model.encode(images).z_som, grid))

    def loss_fn() -> Tensor:
        outputs = model(images)
        l_som = som_loss(outputs.z_som, grid, k, schedule, bmu_indices=bmus)
        return total_loss(task_loss(outputs, targets, task), l_som, k, gammas).total

    tensors = [p for _, p in model.named_parameters()] + [grid.prototypes]
    return check_gradients(loss_fn, tensors, floor=MODEL_FLOOR, max_coords=coords_per_tensor,
                           rng=rng)


def _positive(rng: np.random.Generator, shape: Tuple[int, ...]) -> np.ndarray:
    return rng.uniform(0.5, 2.0, shape)


def _normal(rng: np.random.Generator, shape: Tuple[int, ...]) -> np.ndarray:
    return rng.normal(size=shape)


# (名前, 演算, 入力を作る関数)
OpCase = Tuple[str, Callable[..., Tensor], Callable[[np.random.Generator], Sequence[np.ndarray]]]

OP_CASES: List[OpCase] = [
    ('add', ops.add, lambda r: (_normal(r, (3, 4)), _normal(r, (4,)))),
    ('sub', ops.sub, lambda r: (_normal(r, (3, 4)), _normal(r, (3, 1)))),
    ('mul', ops.mul, lambda r: (_normal(r, (3, 4)), _normal(r, (3, 4)))),
    ('div', ops.div, lambda r: (_normal(r, (3, 4)), _positive(r, (3, 4)))),
    ('power', lambda a: ops.power(a, 2.5), lambda r: (_positive(r, (3, 4)),)),
    ('exp', ops.exp, lambda r: (_normal(r, (3, 4)),)),
    ('log', ops.log, lambda r: (_positive(r, (3, 4)),)),
    ('sum', lambda a: ops.sum(a, axis=1), lambda r: (_normal(r, (3, 4)),)),
    ('mean', lambda a: ops.mean(a, axis=0, keepdims=True), lambda r: (_normal(r, (3, 4)),)),
    ('reshape', lambda a: ops.reshape(a, (4, 3)), lambda r: (_normal(r, (3, 4)),)),
    ('transpose', lambda a: ops.transpose(a, (1, 0, 2)), lambda r: (_normal(r, (2, 3, 4)),)),
    ('getitem', lambda a: ops.getitem(a, (slice(None), slice(1, 3))),
     lambda r: (_normal(r, (3, 4)),)),
    ('gather', lambda a: ops.getitem(a, np.array([0, 2, 2])), lambda r: (_normal(r, (3, 4)),)),
    ('concat', lambda a, b: ops.concat([a, b], axis=1),
     lambda r: (_normal(r, (3, 2)), _normal(r, (3, 4)))),
    ('matmul', ops.matmul, lambda r: (_normal(r, (2, 3, 4)), _normal(r, (2, 4, 5)))),
    ('softmax', ops.softmax, lambda r: (_normal(r, (3, 5)),)),
    ('log_softmax', ops.log_softmax, lambda r: (_normal(r, (3, 5)),)),
    ('layer_norm', ops.layer_norm,
     lambda r: (_normal(r, (3, 5)), _positive(r, (5,)), _normal(r, (5,)))),
    ('gelu', ops.gelu, lambda r: (_normal(r, (3, 4)),)),
    ('cosine_distance', ops.cosine_distance, lambda r: (_normal(r, (3, 5)), _normal(r, (4, 5)))),
    ('squared_euclidean_distance', ops.squared_euclidean_distance,
     lambda r: (_normal(r, (3, 5)), _normal(r, (4, 5)))),
    ('manhattan_distance', ops.manhattan_distance,
     lambda r: (_normal(r, (3, 5)), _normal(r, (4, 5)))),
]


class Verifier:
    """検証スイートの実行器"""

    def __init__(self, seed: int = 0, trials: Optional[Mapping[str, int]] = None,
                 inject_failure: bool = False):
        """
        Args:
            seed: 全スイートの基準シード
            trials: スイートごとの試行回数（省略したスイートはDEFAULT_TRIALS）
            inject_failure: 許容値を負にして必ず失敗させる
        """
        self.seed = seed
        self.trials = dict(DEFAULT_TRIALS)
        self.trials.update(trials or {})
        self.inject_failure = inject_failure

    def tolerance(self, value: float) -> float:
        return INJECTED_TOLERANCE if self.inject_failure else value

    def run(self, suites: Optional[Sequence[str]] = None) -> List[SuiteResult]:
        """
        Raises:
            ConfigurationError: 未知のスイート名の場合
        """
        names = list(suites) if suites else list(SUITES)
        unknown = [name for name in names if name not in SUITES]
        if unknown:
            raise ConfigurationError(
                f"unknown suite '{unknown[0]}' (expected one of: {', '.join(SUITES)})", key='suite'
            )
        results = []
        for name in names:
            started = time.perf_counter()
            cases = getattr(self, f"suite_{name}")()
            result = SuiteResult(name, cases, time.perf_counter() - started)
            logger.info(result.summary())
            results.append(result)
        return results

    def suite_ndgrad(self) -> List[CaseResult]:
        cases = []
        for trial in range(self.trials['ndgrad']):
            name, op, make_inputs = OP_CASES[trial % len(OP_CASES)]
            rng = np.random.default_rng([self.seed, trial])
            arrays = make_inputs(rng)
            result = check_op_gradients(op, *arrays, rng=rng)
            cases.append(CaseResult('ndgrad', name, result.max_relative_error,
                                    self.tolerance(GRADIENT_TOLERANCE),
                                    {'trial': trial, 'shapes': [a.shape for a in arrays],
                                     'worst_index': result.worst_index,
                                     'analytic': result.analytic, 'numeric': result.numeric}))
        return cases

    def suite_model(self) -> List[CaseResult]:
        cases = []
        tasks = (Task.CLUSTERING, Task.CLASSIFICATION)
        # L1距離は差が0の点で微分できないため、ここではコサインとユークリッドのみ
        metrics = [DistanceMetric.COSINE, DistanceMetric.EUCLIDEAN]
        # 試行ごとにタスクと距離を交互に変え、座標は各テンソル2点だけ調べる
        for trial in range(self.trials['model']):
            task = tasks[trial % len(tasks)]
            metric = metrics[(trial // len(tasks)) % len(metrics)]
            seed = self.seed * 1000 + trial
            result = model_gradient_check(task, seed=seed, metric=metric, coords_per_tensor=2)
            cases.append(CaseResult('model', f"l_total_{task.value}_{metric.value}",
                                    result.max_relative_error,
                                    self.tolerance(GRADIENT_TOLERANCE),
                                    {'trial': trial, 'seed': seed, 'coordinates': result.checked,
                                     'worst_tensor': result.worst_tensor,
                                     'worst_index': result.worst_index}))
        return cases

    def suite_som(self) -> List[CaseResult]:
        cases = []
        metrics = list(DistanceMetric)
        for trial in range(self.trials['som']):
            rng = np.random.default_rng([self.seed, 7, trial])
            cases.append(self._bmu_case(rng, metrics[trial % len(metrics)], trial))
            cases.append(self._equivalence_case(rng, trial))
        for index, metric in enumerate(metrics):
            rng = np.random.default_rng([self.seed, 11, index])
            cases.append(self._som_gradient_case(rng, metric))
        return cases

    def _bmu_case(self, rng: np.random.Generator, metric: DistanceMetric,
                  trial: int) -> CaseResult:
        height, width = rng.integers(1, 6, size=2)
        dim = int(rng.integers(1, 7))
        batch = int(rng.integers(1, 9))
        grid = SomGrid(int(height), int(width), dim, metric, rng=rng, init_scale=1.0)
        prototypes = grid.prototypes.data
        z = rng.normal(size=(batch, dim))
        if grid.n_units > 1:
            # 同じプロトタイプを後ろのユニットに複製して同点を作る
            src, dst = np.sort(rng.choice(grid.n_units, size=2, replace=False))
            prototypes[dst] = prototypes[src]
            z[0] = prototypes[src] * (1.0 + rng.uniform(0.0, 0.1))
        fast = find_bmu(pairwise_distance(z, grid))
        oracle = exhaustive_bmu_scan(z, prototypes, metric)
        return CaseResult('som', f"bmu_oracle_{metric.value}", float(np.sum(fast != oracle)),
                          self.tolerance(0.0),
                          {'trial': trial, 'map': (int(height), int(width)), 'dim': dim,
                           'batch': batch, 'fast': fast.tolist(), 'oracle': oracle.tolist()})

    def _equivalence_case(self, rng: np.random.Generator, trial: int) -> CaseResult:
        height, width = (int(v) for v in rng.integers(1, 6, size=2))
        dim = int(rng.integers(1, 7))
        total_steps = int(rng.integers(1, 100))
        k = int(rng.integers(0, total_steps + 1))
        eta = float(rng.uniform(0.001, 0.25))
        grid = SomGrid(height, width, dim, DistanceMetric.EUCLIDEAN, rng=rng, init_scale=1.0)
        schedule = TemperatureSchedule.for_grid(height, width, total_steps)
        z = rng.normal(size=(1, dim))

        with Tape() as tape:
            loss = som_loss(z, grid, k, schedule)
            tape.backward(loss)
        batch_step = grid.prototypes.data - eta * grid.prototypes.grad
        grid.prototypes.grad = None
        sequential = classic_update(z[0], grid, 2.0 * eta, k, schedule).prototypes.data
        deviation = float(np.max(np.abs(batch_step - sequential)))
        return CaseResult('som', 'batch_sequential_equivalence', deviation,
                          self.tolerance(EQUIVALENCE_TOLERANCE),
                          {'trial': trial, 'map': (height, width), 'dim': dim, 'k': k,
                           'total_steps': total_steps, 'eta': eta})

    def _som_gradient_case(self, rng: np.random.Generator, metric: DistanceMetric) -> CaseResult:
        grid = SomGrid(3, 3, 5, metric, rng=rng, init_scale=1.0)
        z = Tensor(rng.normal(size=(4, 5)))
        schedule = TemperatureSchedule.for_grid(3, 3, total_steps=20)
        bmus = som_forward(z, grid, 5, schedule).bmu_indices

        def loss_fn() -> Tensor:
            return som_loss(z, grid, 5, schedule, bmu_indices=bmus)

        result = check_gradients(loss_fn, [z, grid.prototypes], rng=rng)
        return CaseResult('som', f"som_loss_gradient_{metric.value}", result.max_relative_error,
                          self.tolerance(GRADIENT_TOLERANCE),
                          {'metric': metric.value, 'worst_index': result.worst_index})

    def suite_schedules(self) -> List[CaseResult]:
        cases = []
        for trial in range(self.trials['schedules']):
            rng = np.random.default_rng([self.seed, 13, trial])
            total_steps = int(rng.integers(1, 100000))
            side = int(rng.integers(2, 41))
            t_schedule = TemperatureSchedule.for_grid(side, side, total_steps)
            lr_init = float(rng.uniform(1e-4, 0.1))
            lr_min = float(rng.uniform(0.0, lr_init))
            gammas = GammaSchedule.from_total_steps(float(rng.uniform(0.0, 0.1)), total_steps,
                                                    float(rng.uniform(0.0, 1.0)))
            inputs = {'trial': trial, 'total_steps': total_steps, 'side': side,
                      'lr_init': lr_init, 'lr_min': lr_min,
                      'warmup_steps': gammas.warmup_steps}
            checks = {
                'temperature_start': abs(temperature(0, t_schedule) - side / 2.0),
                'temperature_end': abs(temperature(total_steps, t_schedule) - t_schedule.t_min),
                'lr_start': abs(cosine_lr(0, total_steps, lr_init, lr_min) - lr_init),
                'lr_end': abs(cosine_lr(total_steps, total_steps, lr_init, lr_min) - lr_min),
                'gamma_start': abs(gammas(0)) if gammas.warmup_steps > 0 else 0.0,
                'gamma_warmup_end': abs(gammas(gammas.warmup_steps) - gammas.gamma_final),
            }
            if total_steps % 2 == 0:
                midpoint = cosine_lr(total_steps // 2, total_steps, lr_init, lr_min)
                checks['lr_midpoint'] = abs(midpoint - (lr_init + lr_min) / 2.0)
            for name, deviation in checks.items():
                cases.append(CaseResult('schedules', name, float(deviation),
                                        self.tolerance(SCHEDULE_TOLERANCE), dict(inputs)))
        return cases


def run_verification(suites: Optional[Sequence[str]] = None,
                     seed: int = 0,
                     trials: Optional[Mapping[str, int]] = None,
                     inject_failure: bool = False) -> List[SuiteResult]:
    """検証スイートを実行して結果を返す"""
    return Verifier(seed, trials, inject_failure).run(suites)
