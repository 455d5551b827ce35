"""ViTとSOMを同時に学習する学習ループと評価。

1ステップは次の順に進みます::

    z_cls, z_patches = encoder(x)
    L_nn  = MSE(decoder(z_patches), x)  または  CE(head(z_cls), y)
    L_som = batch SOM loss(flatten(z_patches))
    L_total = L_nn + gamma(k) * L_som
    backward → AdamW（ViTのパラメータとSOMのプロトタイプを同じオプティマイザで更新）
"""

import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from ..config import TASK_DATASETS, TrainConfig
from ..data import (
    DIGIT_DATASETS,
    BatchIterator,
    Dataset,
    DatasetCache,
    Split,
    augment_batch,
    batches,
    load_dataset,
)
from ..data.batching import BatchTransform
from ..errors import ContractError, DimensionError, NumericError
from ..metrics import (
    MetricLog,
    accuracy,
    purity,
    quantization_error_from_distances,
    topographic_error_from_distances,
)
from ..ndgrad import Parameter, Tape, Tensor
from ..objective import GammaSchedule, task_loss, total_loss
from ..som import SomGrid, TemperatureSchedule, find_bmu, pairwise_distance, som_forward
from ..utils.path import ensure_directory, resolve_data_root
from ..vit import Task, VisionTransformer, VitConfig
from .checkpoint import Checkpoint
from .optim import AdamW, cosine_lr

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = 'checkpoint.ckpt'
METRIC_LOG_NAME = 'metrics.csv'
EVAL_BATCH_SIZE = 256

MetricRecord = Dict[str, Optional[float]]


@dataclass
class StepRecord:
    """1ステップ分の損失・スケジュール値と、評価した場合はその指標"""

    step: int
    l_nn: float
    l_som: float
    l_total: float
    temperature: float
    gamma: float
    lr: float
    purity: Optional[float] = None
    accuracy: Optional[float] = None
    quantization_error: Optional[float] = None
    topographic_error: Optional[float] = None

    def update(self, metrics: MetricRecord) -> None:
        for name, value in metrics.items():
            if hasattr(self, name):
                setattr(self, name, value)

    def as_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


@dataclass
class TrainResult:
    """学習の結果"""

    checkpoint: Checkpoint
    records: List[StepRecord] = field(default_factory=list)
    checkpoint_path: Optional[Path] = None
    final_metrics: MetricRecord = field(default_factory=dict)


def evaluate_model(model: VisionTransformer,
                   grid: SomGrid,
                   dataset: Dataset,
                   batch_size: int = EVAL_BATCH_SIZE) -> MetricRecord:
    """パラメータを変更せずにデータセット全体で評価する

    クラスタリングでは純度（ラベルがある場合）・量子化誤差・位相誤差を、
    分類では精度を返します。

    Raises:
        ContractError: データセットが空、または分類でラベルが無い場合
    """
    if len(dataset) == 0:
        raise ContractError(f"cannot evaluate on an empty {dataset.name} dataset")
    task = model.config.task
    metrics: MetricRecord = {}
    chunks = [np.arange(i, min(i + batch_size, len(dataset)))
              for i in range(0, len(dataset), batch_size)]

    if task is Task.CLASSIFICATION:
        if dataset.labels is None:
            raise ContractError("classification evaluation requires labels")
        logits = np.concatenate([model.classify(model.encode(dataset.images[idx]).z_cls).data
                                 for idx in chunks])
        metrics['accuracy'] = accuracy(logits, dataset.labels)
        return metrics

    distances = np.concatenate([
        pairwise_distance(Tensor(model.encode(dataset.images[idx]).z_som.data), grid).data
        for idx in chunks
    ])
    units = find_bmu(distances)
    metrics['purity'] = purity(units, dataset.labels) if dataset.labels is not None else None
    metrics['quantization_error'] = quantization_error_from_distances(distances)
    metrics['topographic_error'] = topographic_error_from_distances(distances, grid)
    return metrics


class Trainer:
    """ViT・SOM・オプティマイザ・スケジュールをまとめて保持し、学習を進めるクラス"""

    def __init__(self, config: TrainConfig, model_config: VitConfig, total_steps: int):
        """
        Args:
            config: 学習設定
            model_config: モデル構成（config.vit_configで作る）
            total_steps: 全ステップ数K（温度・学習率・gammaのスケジュールに使う）
        """
        if model_config.task is not config.task:
            raise ContractError(
                f"model built for {model_config.task.value} cannot train "
                f"the {config.task.value} task"
            )
        self.config = config
        self.model_config = model_config
        self.total_steps = int(total_steps)
        rng = np.random.default_rng(config.seed)
        self.model = VisionTransformer(model_config, rng)
        self.grid = SomGrid(config.map_height, config.map_width, model_config.som_dim,
                            config.metric, rng=rng, init_scale=config.init_scale)
        self.temperature_schedule = TemperatureSchedule(config.resolved_t_max, config.t_min,
                                                        self.total_steps)
        self.gamma_schedule = GammaSchedule.from_total_steps(config.resolved_gamma,
                                                             self.total_steps,
                                                             config.warmup_fraction)
        self.optimizer = AdamW(self.named_parameters(), lr=config.lr_init, betas=config.betas,
                               eps=config.eps, weight_decay=config.weight_decay)
        self.iterator = BatchIterator(config.batch_size, seed=config.seed)
        self.step = 0
        self.epoch = 0
        self.position = 0
        # z_somのノルムの移動平均（プロトタイプを復号するときの大きさ）
        self.latent_norm = 0.0
        logger.info(
            f"Trainer ready: task={config.task.value}, "
            f"{self.model.num_parameters()} ViT parameters, "
            f"{config.map_height}x{config.map_width} SOM of dim {self.grid.dim}, "
            f"{self.total_steps} steps"
        )

    def named_parameters(self) -> List[Tuple[str, Parameter]]:
        """オプティマイザに渡す全パラメータ（ViTは ``model.`` 接頭辞付き）"""
        params = [(f"model.{name}", p) for name, p in self.model.named_parameters()]
        return params + self.grid.named_parameters()

    @property
    def done(self) -> bool:
        return self.step >= self.total_steps

    def train_step(self, images: np.ndarray, labels: Optional[np.ndarray]) -> StepRecord:
        """1ステップ学習する

        Raises:
            ContractError: 分類タスクでラベルが無い場合、または全ステップを終えている場合
            NumericError: 損失・勾配が有限でない場合（パラメータは更新されない）
        """
        if self.done:
            raise ContractError(f"training already finished ({self.total_steps} steps)")
        task = self.config.task
        if task is Task.CLASSIFICATION and labels is None:
            raise ContractError("classification training requires labels")
        k = self.step
        lr = cosine_lr(k, self.total_steps, self.config.lr_init, self.config.lr_min)

        self.optimizer.zero_grad()
        with Tape() as tape:
            outputs = self.model(images)
            l_nn = task_loss(outputs, images if task is Task.CLUSTERING else labels, task)
            som = som_forward(outputs.z_som, self.grid, k, self.temperature_schedule)
            terms = total_loss(l_nn, som.loss, k, self.gamma_schedule)
            tape.backward(terms.total)
        self.optimizer.step(lr)

        batch_norm = float(np.linalg.norm(outputs.z_som.data, axis=1).mean())
        self.latent_norm += (batch_norm - self.latent_norm) / (k + 1)
        self.step += 1
        return StepRecord(step=k, l_nn=terms.l_nn, l_som=terms.l_som, l_total=terms.l_total,
                          temperature=float(som.temperature), gamma=float(terms.gamma),
                          lr=float(lr))

    def evaluate(self, dataset: Dataset) -> MetricRecord:
        return evaluate_model(self.model, self.grid, dataset)

    def _transform(self, dataset: Dataset) -> Optional[BatchTransform]:
        cfg = self.config
        if cfg.task is not Task.CLASSIFICATION or not cfg.augment:
            return None
        # 数字は左右反転するとラベルの意味が変わる
        flip = cfg.flip if cfg.flip is not None else dataset.name not in DIGIT_DATASETS

        def transform(images: np.ndarray, labels: Optional[np.ndarray],
                      rng: np.random.Generator) -> np.ndarray:
            return augment_batch(images, cfg.task, rng, flip=flip)

        return transform

    def fit(self,
            train_set: Dataset,
            test_set: Optional[Dataset] = None,
            out_dir: Optional[Union[str, Path]] = None,
            metric_log: Optional[MetricLog] = None,
            until: Optional[int] = None) -> TrainResult:
        """total_steps（またはuntil）に達するまで学習する

        eval_intervalごとにtest_setで評価し、out_dirがあればチェックポイントを
        上書き保存します。数値異常で中断した場合も、最後に保存した
        チェックポイントはそのまま残ります。

        Args:
            train_set: 学習データ
            test_set: 評価データ（Noneなら評価しない）
            out_dir: チェックポイントの出力先
            metric_log: 指標を追記するCSVログ
            until: このステップで止める（途中で止めて後から再開する場合）

        Returns:
            最終チェックポイントと記録した行

        Raises:
            NumericError: 損失・勾配が有限でなくなった場合
        """
        cfg = self.config
        if train_set.image_shape != self.model_config.image_shape:
            raise DimensionError(
                f"training images {train_set.image_shape} do not match the model input "
                f"{self.model_config.image_shape}"
            )
        checkpoint_path = Path(ensure_directory(out_dir)) / CHECKPOINT_NAME if out_dir else None
        eval_set = test_set
        if test_set is not None and cfg.eval_samples is not None:
            eval_set = test_set.subset(cfg.eval_samples, seed=cfg.seed)
        transform = self._transform(train_set)
        records: List[StepRecord] = []
        metrics: MetricRecord = {}
        stop = self.total_steps if until is None else min(int(until), self.total_steps)
        logger.info(f"Training from step {self.step} (epoch {self.epoch}, batch {self.position})")

        try:
            while self.step < stop:
                for images, labels in batches(train_set, self.iterator, self.epoch, transform,
                                              prefetch=cfg.prefetch, start=self.position):
                    record = self.train_step(images, labels)
                    self.position += 1
                    evaluated = self.step % cfg.eval_interval == 0 or self.step >= stop
                    if evaluated:
                        if eval_set is not None:
                            metrics = self.evaluate(eval_set)
                            record.update(metrics)
                            logger.info(f"step {self.step}: {_format_metrics(metrics)}")
                        if checkpoint_path is not None:
                            self.checkpoint().save(checkpoint_path)
                    if evaluated or self.step % cfg.log_interval == 0 or record.step == 0:
                        logger.info(
                            f"step {record.step}/{self.total_steps} L_total={record.l_total:.6g} "
                            f"L_nn={record.l_nn:.6g} L_som={record.l_som:.6g} "
                            f"T={record.temperature:.4g} gamma={record.gamma:.4g} "
                            f"lr={record.lr:.4g}"
                        )
                        records.append(record)
                        if metric_log is not None:
                            metric_log.append(record.as_dict())
                    if self.step >= stop:
                        break
                else:
                    self.epoch += 1
                    self.position = 0
        except NumericError as e:
            kept = checkpoint_path if checkpoint_path and checkpoint_path.is_file() else None
            logger.error(f"Aborting at step {self.step}: {e} (last checkpoint: {kept})")
            raise

        logger.info(f"Training stopped after {self.step} of {self.total_steps} steps")
        return TrainResult(checkpoint=self.checkpoint(), records=records,
                           checkpoint_path=checkpoint_path, final_metrics=metrics)

    def checkpoint(self) -> Checkpoint:
        """現在の状態のスナップショット（配列はコピー）"""
        return Checkpoint(
            config=self.config,
            model_config=self.model_config,
            step=self.step,
            model_state=self.model.state_dict(),
            prototypes=self.grid.prototypes.data.copy(),
            adam=self.optimizer.state.copy(),
            schedules={
                'total_steps': self.total_steps,
                't_max': float(self.temperature_schedule.t_max),
                't_min': float(self.temperature_schedule.t_min),
                'gamma_final': float(self.gamma_schedule.gamma_final),
                'warmup_steps': int(self.gamma_schedule.warmup_steps),
                'lr_init': float(self.config.lr_init),
                'lr_min': float(self.config.lr_min),
                'latent_norm': float(self.latent_norm),
            },
            rng_state={'seed': int(self.config.seed), 'epoch': self.epoch,
                       'position': self.position},
        )

    @classmethod
    def from_checkpoint(cls, checkpoint: Checkpoint) -> 'Trainer':
        """チェックポイントから学習を再開できる状態を復元する"""
        trainer = cls(checkpoint.config, checkpoint.model_config, checkpoint.total_steps)
        trainer.model.load_state_dict(checkpoint.model_state)
        trainer.grid.prototypes.data = _checked_prototypes(checkpoint, trainer.grid)
        trainer.optimizer.load_state(checkpoint.adam)
        trainer.step = checkpoint.step
        trainer.epoch = int(checkpoint.rng_state.get('epoch', 0))
        trainer.position = int(checkpoint.rng_state.get('position', 0))
        trainer.latent_norm = checkpoint.latent_norm
        logger.info(f"Resumed trainer at step {trainer.step}")
        return trainer


def _checked_prototypes(checkpoint: Checkpoint, grid: SomGrid) -> np.ndarray:
    prototypes = np.array(checkpoint.prototypes, dtype=np.float64)
    if prototypes.shape != grid.prototypes.shape:
        raise DimensionError(
            f"checkpoint prototypes {prototypes.shape} do not match the SOM {grid.prototypes.shape}"
        )
    return prototypes


def _format_metrics(metrics: MetricRecord) -> str:
    return " ".join(f"{name}={value:.4f}" for name, value in metrics.items() if value is not None)


def restore_model(checkpoint: Checkpoint) -> Tuple[VisionTransformer, SomGrid]:
    """チェックポイントからモデルとSOMを作り直す（チェックポイントは変更しない）"""
    config = checkpoint.config
    model = VisionTransformer(checkpoint.model_config, rng=config.seed)
    model.load_state_dict(checkpoint.model_state)
    grid = SomGrid(config.map_height, config.map_width, checkpoint.model_config.som_dim,
                   config.metric, prototypes=np.array(checkpoint.prototypes, dtype=np.float64))
    return model, grid


def evaluate(checkpoint: Checkpoint, dataset: Dataset,
             batch_size: int = EVAL_BATCH_SIZE) -> MetricRecord:
    """チェックポイントをデータセットで評価する

    Raises:
        ContractError: データセットがチェックポイントのタスクに合わない場合
    """
    task = checkpoint.config.task
    if dataset.name not in TASK_DATASETS[task]:
        raise ContractError(
            f"dataset '{dataset.name}' cannot be evaluated for the {task.value} task"
        )
    if dataset.image_shape != checkpoint.model_config.image_shape:
        raise ContractError(
            f"{dataset.name} images {dataset.image_shape} do not match the checkpoint model "
            f"{checkpoint.model_config.image_shape}"
        )
    model, grid = restore_model(checkpoint)
    metrics = evaluate_model(model, grid, dataset, batch_size)
    logger.info(f"Evaluated step {checkpoint.step} on {dataset.name} {dataset.split.value}: "
                f"{_format_metrics(metrics)}")
    return metrics


def load_training_data(config: TrainConfig, root: Union[str, Path],
                       cache: Optional[DatasetCache] = None) -> Tuple[Dataset, Dataset]:
    """設定に従って学習・評価用の分割を読み込み、部分集合を取る"""
    train_set = load_dataset(config.dataset, root, Split.TRAIN, cache)
    test_set = load_dataset(config.dataset, root, Split.TEST, cache)
    if config.train_subset is not None:
        train_set = train_set.subset(config.train_subset, seed=config.seed)
    if config.test_subset is not None:
        test_set = test_set.subset(config.test_subset, seed=config.seed)
    return train_set, test_set


def train(config: TrainConfig,
          out_dir: Optional[Union[str, Path]] = None,
          data_root: Optional[Union[str, Path]] = None,
          resume: Optional[Union[str, Path, Checkpoint]] = None,
          cache: Optional[DatasetCache] = None) -> TrainResult:
    """設定に従ってデータを読み込み、学習して最終チェックポイントと記録を返す

    Args:
        config: 学習設定
        out_dir: チェックポイントと指標CSVの出力先（Noneなら書き出さない）
        data_root: データセットのルート（Noneなら設定・環境変数から決める）
        resume: 再開するチェックポイント
        cache: データセットキャッシュ

    Raises:
        DatasetNotFoundError: データセットが見つからない場合
        NumericError: 学習中に数値異常が起きた場合
    """
    checkpoint = None
    if resume is not None:
        checkpoint = resume if isinstance(resume, Checkpoint) else Checkpoint.load(resume)
        if checkpoint.config.config_hash() != config.config_hash():
            logger.warning("Resuming with the configuration stored in the checkpoint")
        config = checkpoint.config
    root = resolve_data_root(data_root, config.data_root)
    train_set, test_set = load_training_data(config, root, cache)

    if checkpoint is not None:
        trainer = Trainer.from_checkpoint(checkpoint)
    else:
        steps_per_epoch = BatchIterator(config.batch_size).num_batches(len(train_set))
        total_steps = config.resolve_total_steps(steps_per_epoch)
        model_config = config.vit_config(train_set.image_shape, train_set.num_classes)
        trainer = Trainer(config, model_config, total_steps)

    metric_log = None
    if out_dir is not None:
        metric_log = MetricLog(Path(ensure_directory(out_dir)) / METRIC_LOG_NAME,
                               append=resume is not None)
    try:
        return trainer.fit(train_set, test_set, out_dir=out_dir, metric_log=metric_log)
    finally:
        if metric_log is not None:
            metric_log.close()
