import dataclasses
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Mapping, Optional, Union

from ..errors import ConfigurationError

logger = logging.getLogger(__name__)


class Task(str, Enum):
    """学習タスクの種類"""

    CLUSTERING = "clustering"
    CLASSIFICATION = "classification"

    @classmethod
    def parse(cls, value: Union[str, "Task"]) -> "Task":
        if isinstance(value, Task):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            choices = ", ".join(t.value for t in cls)
            raise ConfigurationError(f"unknown task '{value}' (expected one of: {choices})",
                                     key="task")


@dataclass(frozen=True)
class VitConfig:
    """小型ViTのアーキテクチャ設定。

    デコーダはMAEと同様に非対称な幅を持てます（``decoder_embed_dim`` など）。
    省略時はエンコーダと同じ幅・MLP次元・ヘッド数になります。
    """

    image_size: int
    patch_size: int
    channels: int
    embed_dim: int
    mlp_dim: int
    encoder_depth: int
    decoder_depth: int
    num_heads: int
    num_classes: Optional[int] = None
    task: Task = Task.CLUSTERING
    decoder_embed_dim: Optional[int] = None
    decoder_mlp_dim: Optional[int] = None
    decoder_num_heads: Optional[int] = None
    ln_eps: float = 1e-6

    def __post_init__(self) -> None:
        object.__setattr__(self, "task", Task.parse(self.task))
        for name in ("image_size", "patch_size", "channels", "embed_dim", "mlp_dim",
                     "encoder_depth", "num_heads"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}",
                                         key=name)
        if self.decoder_depth < 0:
            raise ConfigurationError(f"decoder_depth must be >= 0, got {self.decoder_depth}",
                                     key="decoder_depth")
        if self.image_size % self.patch_size:
            raise ConfigurationError(
                f"image size {self.image_size} is not divisible by patch size {self.patch_size}",
                key="patch_size",
            )
        if self.embed_dim % self.num_heads:
            raise ConfigurationError(
                f"embed_dim {self.embed_dim} is not divisible by num_heads {self.num_heads}",
                key="num_heads",
            )
        if self.task is Task.CLASSIFICATION and not self.num_classes:
            raise ConfigurationError("classification task requires num_classes",
                                     key="num_classes")
        if self.num_classes is not None and self.num_classes < 2:
            raise ConfigurationError(f"num_classes must be >= 2, got {self.num_classes}",
                                     key="num_classes")
        if self.ln_eps <= 0:
            raise ConfigurationError(f"ln_eps must be positive, got {self.ln_eps}", key="ln_eps")
        if self.has_decoder and self.dec_embed_dim % self.dec_num_heads:
            raise ConfigurationError(
                f"decoder_embed_dim {self.dec_embed_dim} is not divisible by "
                f"decoder_num_heads {self.dec_num_heads}",
                key="decoder_num_heads",
            )

    @property
    def grid_size(self) -> int:
        return self.image_size // self.patch_size

    @property
    def num_patches(self) -> int:
        return self.grid_size ** 2

    @property
    def patch_dim(self) -> int:
        return self.channels * self.patch_size ** 2

    @property
    def som_dim(self) -> int:
        """SOMに入力する flatten(z_patches) の次元"""
        return self.num_patches * self.embed_dim

    @property
    def image_shape(self) -> tuple:
        return (self.channels, self.image_size, self.image_size)

    @property
    def has_decoder(self) -> bool:
        return self.task is Task.CLUSTERING

    @property
    def has_head(self) -> bool:
        return self.num_classes is not None and self.task is Task.CLASSIFICATION

    @property
    def dec_embed_dim(self) -> int:
        return self.decoder_embed_dim or self.embed_dim

    @property
    def dec_mlp_dim(self) -> int:
        return self.decoder_mlp_dim or self.mlp_dim

    @property
    def dec_num_heads(self) -> int:
        return self.decoder_num_heads or self.num_heads

    @classmethod
    def clustering(cls, image_size: int = 28, channels: int = 1,
                   patch_size: int = 4) -> "VitConfig":
        """クラスタリング用の構成（埋め込み16, MLP64, 深さ4/2, 2ヘッド）"""
        return cls(image_size=image_size, patch_size=patch_size, channels=channels,
                   embed_dim=16, mlp_dim=64, encoder_depth=4, decoder_depth=2, num_heads=2,
                   task=Task.CLUSTERING, decoder_embed_dim=320, decoder_mlp_dim=1280,
                   decoder_num_heads=2)

    @classmethod
    def classification(cls, image_size: int = 32, channels: int = 3, num_classes: int = 10,
                       patch_size: int = 4) -> "VitConfig":
        """分類用の構成（埋め込み192, MLP768, 深さ12, 3ヘッド、デコーダなし）"""
        return cls(image_size=image_size, patch_size=patch_size, channels=channels,
                   embed_dim=192, mlp_dim=768, encoder_depth=12, decoder_depth=0, num_heads=3,
                   num_classes=num_classes, task=Task.CLASSIFICATION)

    @classmethod
    def preset(cls, name: Union[str, Task], image_size: int, channels: int,
               num_classes: Optional[int] = None) -> "VitConfig":
        task = Task.parse(name)
        if task is Task.CLUSTERING:
            return cls.clustering(image_size, channels)
        return cls.classification(image_size, channels, num_classes or 10)

    def replace(self, **changes: Any) -> "VitConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        data = dataclasses.asdict(self)
        data["task"] = self.task.value
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "VitConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigurationError(f"unknown model fields: {', '.join(unknown)}")
        return cls(**dict(data))


def _block_count(width: int, mlp: int) -> int:
    # LN x2, qkv, proj, fc1, fc2
    return 4 * width + (width * 3 * width + 3 * width) + (width * width + width) \
        + (width * mlp + mlp) + (mlp * width + width)


def parameter_count(config: VitConfig) -> Dict[str, int]:
    """構成から解析的にパラメータ数を数える（SOMのプロトタイプは含まない）

    Returns:
        'encoder', 'decoder', 'head', 'total' をキーとする辞書
    """
    d = config.embed_dim
    n = config.num_patches
    encoder = (config.patch_dim * d + d) + d + (n + 1) * d \
        + config.encoder_depth * _block_count(d, config.mlp_dim) + 2 * d
    decoder = 0
    if config.has_decoder:
        e = config.dec_embed_dim
        decoder = (d * e + e) + n * e + config.decoder_depth * _block_count(e, config.dec_mlp_dim) \
            + 2 * e + (e * config.patch_dim + config.patch_dim)
    head = d * config.num_classes + config.num_classes if config.has_head else 0
    return {"encoder": encoder, "decoder": decoder, "head": head,
            "total": encoder + decoder + head}
