import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass
from typing import Any, Dict, Mapping, Optional, Tuple

from ..errors import ConfigurationError
from ..objective import DEFAULT_GAMMA, DEFAULT_WARMUP_FRACTION
from ..som import DEFAULT_T_MIN, DistanceMetric
from ..vit import Task, VitConfig

logger = logging.getLogger(__name__)

# タスクごとに使えるデータセット
TASK_DATASETS = {
    Task.CLUSTERING: frozenset({'mnist', 'fashion-mnist', 'usps'}),
    Task.CLASSIFICATION: frozenset({'mnist', 'fashion-mnist', 'usps', 'cifar10'}),
}

# [model] で上書きできるVitConfigのフィールド
MODEL_OVERRIDES = (
    'patch_size',
    'embed_dim',
    'mlp_dim',
    'encoder_depth',
    'decoder_depth',
    'num_heads',
    'decoder_embed_dim',
    'decoder_mlp_dim',
    'decoder_num_heads',
    'num_classes',
)


@dataclass(frozen=True)
class TrainConfig:
    """1回の学習の完全な設定"""

    task: Task = Task.CLUSTERING
    dataset: str = 'mnist'
    data_root: Optional[str] = None
    train_subset: Optional[int] = None
    test_subset: Optional[int] = None
    augment: bool = True
    flip: Optional[bool] = None
    prefetch: bool = False

    model_preset: Optional[Task] = None
    model_overrides: Tuple[Tuple[str, int], ...] = ()

    map_height: int = 24
    map_width: int = 24
    metric: DistanceMetric = DistanceMetric.COSINE
    t_max: Optional[float] = None
    t_min: float = DEFAULT_T_MIN
    init_scale: float = 0.05

    seed: int = 0
    total_steps: Optional[int] = None
    epochs: Optional[int] = None
    batch_size: int = 64
    eval_interval: int = 500
    log_interval: int = 10
    eval_samples: Optional[int] = None

    lr_init: float = 0.01
    lr_min: float = 1e-6
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.05

    gamma_final: Optional[float] = None
    warmup_fraction: float = DEFAULT_WARMUP_FRACTION

    log_level: Optional[str] = None
    log_file: Optional[str] = None
    log_format: Optional[str] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, 'task', Task.parse(self.task))
        object.__setattr__(self, 'metric', DistanceMetric.parse(self.metric))
        object.__setattr__(self, 'dataset', str(self.dataset).strip().lower())
        object.__setattr__(self, 'betas', tuple(float(b) for b in self.betas))
        object.__setattr__(self, 'model_overrides',
                           tuple((str(k), int(v)) for k, v in self.model_overrides))
        if self.model_preset is not None:
            object.__setattr__(self, 'model_preset', Task.parse(self.model_preset))
        self._validate()

    def _validate(self) -> None:
        if self.dataset not in TASK_DATASETS[self.task]:
            allowed = ", ".join(sorted(TASK_DATASETS[self.task]))
            raise ConfigurationError(
                f"dataset '{self.dataset}' is not supported for the {self.task.value} task "
                f"(expected one of: {allowed})",
                key='dataset',
            )
        positive = ('map_height', 'map_width', 'batch_size', 'eval_interval', 'log_interval')
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}",
                                         key=name)
        for name in ('total_steps', 'epochs', 'train_subset', 'test_subset', 'eval_samples'):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ConfigurationError(f"{name} must be positive, got {value}", key=name)
        if self.total_steps is None and self.epochs is None:
            raise ConfigurationError("either total_steps or epochs must be set", key='total_steps')
        for name in ('lr_init', 'eps', 't_min', 'init_scale'):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}",
                                         key=name)
        if not 0 <= self.lr_min <= self.lr_init:
            raise ConfigurationError(f"lr_min must be in [0, lr_init], got {self.lr_min}",
                                     key='lr_min')
        if self.t_max is not None and self.t_max < self.t_min:
            raise ConfigurationError(f"t_max ({self.t_max}) must be >= t_min ({self.t_min})",
                                     key='t_max')
        if len(self.betas) != 2 or not all(0 <= b < 1 for b in self.betas):
            raise ConfigurationError(f"betas must be two values in [0, 1), got {self.betas}",
                                     key='betas')
        if self.weight_decay < 0:
            raise ConfigurationError(f"weight_decay must be >= 0, got {self.weight_decay}",
                                     key='weight_decay')
        if self.gamma_final is not None and self.gamma_final < 0:
            raise ConfigurationError(f"gamma must be >= 0, got {self.gamma_final}",
                                     key='gamma_final')
        if not 0.0 <= self.warmup_fraction <= 1.0:
            raise ConfigurationError(
                f"warmup_fraction must be in [0, 1], got {self.warmup_fraction}",
                key='warmup_fraction',
            )
        for name, _ in self.model_overrides:
            if name not in MODEL_OVERRIDES:
                raise ConfigurationError(f"unknown model override '{name}'", key=name)

    @property
    def resolved_gamma(self) -> float:
        return self.gamma_final if self.gamma_final is not None else DEFAULT_GAMMA[self.task]

    @property
    def resolved_t_max(self) -> float:
        return self.t_max if self.t_max is not None else max(self.map_height, self.map_width) / 2.0

    def vit_config(self, image_shape: Tuple[int, int, int],
                   num_classes: Optional[int] = None) -> VitConfig:
        """データの形状からモデル構成を決める

        Raises:
            ConfigurationError: 正方形でない画像、または不正な上書き値の場合
        """
        channels, height, width = image_shape
        if height != width:
            raise ConfigurationError(f"images must be square, got {height}x{width}")
        preset = self.model_preset or self.task
        base = VitConfig.preset(preset, height, channels, num_classes)
        changes: Dict[str, Any] = dict(self.model_overrides)
        changes['task'] = self.task
        if self.task is Task.CLASSIFICATION:
            changes.setdefault('num_classes', base.num_classes or num_classes or 10)
        if preset is not self.task and self.task is Task.CLUSTERING:
            changes.setdefault('num_classes', None)
        return base.replace(**changes)

    def resolve_total_steps(self, steps_per_epoch: int) -> int:
        if self.total_steps is not None:
            return self.total_steps
        return max(1, int(self.epochs or 1) * steps_per_epoch)

    def replace(self, **changes: Any) -> 'TrainConfig':
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        """JSONに書ける辞書（チェックポイントに保存するスナップショット）"""
        data = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        data['task'] = self.task.value
        data['metric'] = self.metric.value
        data['model_preset'] = self.model_preset.value if self.model_preset else None
        data['betas'] = list(self.betas)
        data['model_overrides'] = [list(item) for item in self.model_overrides]
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'TrainConfig':
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigurationError(f"unknown config fields: {', '.join(unknown)}",
                                     key=unknown[0])
        values = dict(data)
        if 'betas' in values:
            values['betas'] = tuple(values['betas'])
        if 'model_overrides' in values:
            values['model_overrides'] = tuple(tuple(item) for item in values['model_overrides'])
        return cls(**values)

    def config_hash(self) -> str:
        """正規化したJSONのSHA-256"""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()
