import logging
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from ..errors import ConfigurationError, ContractError, DimensionError
from ..ndgrad import LayerNorm, Linear, Module, Parameter, Tensor, as_tensor, concat, trunc_normal
from ..ndgrad.nn import RngLike, make_rng
from .config import VitConfig
from .layers import Block
from .patches import patchify, unpatchify

logger = logging.getLogger(__name__)


@dataclass
class ModelOutput:
    """順伝播の出力。タスクに応じてx_reconかlogitsのどちらかがNoneになる"""

    z_cls: Tensor
    z_patches: Tensor
    x_recon: Optional[Tensor] = None
    logits: Optional[Tensor] = None

    @property
    def z_som(self) -> Tensor:
        """SOMへ渡す flatten(z_patches)（B, N*D）"""
        return self.z_patches.reshape(self.z_patches.shape[0], -1)


class VisionTransformer(Module):
    """CLSトークン付きの小型ViT。

    エンコーダはパッチ埋め込み・CLSトークン・学習可能な1次元位置埋め込み・
    プレノルムブロック・最終LayerNormからなります。クラスタリングタスクでは
    パッチトークンから画素パッチを再構成するデコーダを、分類タスクでは
    CLSトークン上の線形ヘッドを持ちます。
    """

    def __init__(self, config: VitConfig, rng: RngLike = None):
        rng = make_rng(rng)
        self.config = config
        d = config.embed_dim
        n = config.num_patches
        eps = config.ln_eps

        self.patch_embed = Linear(config.patch_dim, d, rng)
        self.cls_token = Parameter(trunc_normal(rng, (1, 1, d)))
        self.pos_embed = Parameter(trunc_normal(rng, (1, n + 1, d)))
        self.blocks = [Block(d, config.num_heads, config.mlp_dim, rng, eps)
                       for _ in range(config.encoder_depth)]
        self.norm = LayerNorm(d, eps)

        self.decoder_embed: Optional[Linear] = None
        self.decoder_pos_embed: Optional[Parameter] = None
        self.decoder_blocks: list = []
        self.decoder_norm: Optional[LayerNorm] = None
        self.decoder_pred: Optional[Linear] = None
        if config.has_decoder:
            e = config.dec_embed_dim
            self.decoder_embed = Linear(d, e, rng)
            self.decoder_pos_embed = Parameter(trunc_normal(rng, (1, n, e)))
            self.decoder_blocks = [Block(e, config.dec_num_heads, config.dec_mlp_dim, rng, eps)
                                   for _ in range(config.decoder_depth)]
            self.decoder_norm = LayerNorm(e, eps)
            self.decoder_pred = Linear(e, config.patch_dim, rng)

        self.head: Optional[Linear] = None
        if config.has_head:
            self.head = Linear(d, config.num_classes, rng)
        logger.debug(f"Built VisionTransformer with {self.num_parameters()} parameters")

    def _check_images(self, images: Tensor) -> None:
        expected = self.config.image_shape
        if images.ndim != 4 or tuple(images.shape[1:]) != expected:
            raise DimensionError(
                f"images of shape {images.shape} do not match model input (B, {expected[0]}, "
                f"{expected[1]}, {expected[2]})"
            )

    def encode(self, images: Any) -> ModelOutput:
        """画像バッチを符号化し z_cls と z_patches を返す

        Raises:
            DimensionError: 画像の形状が構成と一致しない場合
        """
        x = as_tensor(images)
        self._check_images(x)
        batch = x.shape[0]
        tokens = self.patch_embed(patchify(x, self.config.patch_size))
        cls = self.cls_token + np.zeros((batch, 1, self.config.embed_dim))
        h = concat([cls, tokens], axis=1) + self.pos_embed
        for block in self.blocks:
            h = block(h)
        h = self.norm(h)
        return ModelOutput(z_cls=h[:, 0], z_patches=h[:, 1:])

    def decode(self, z_patches: Any) -> Tensor:
        """パッチトークン (B, N, D) から画像 (B, C, H, W) を再構成する

        Raises:
            ContractError: デコーダを持たない構成で呼ばれた場合
        """
        if self.decoder_embed is None:
            raise ContractError("decode() requires the clustering task (model has no decoder)")
        z = as_tensor(z_patches)
        expected = (self.config.num_patches, self.config.embed_dim)
        if z.ndim != 3 or tuple(z.shape[1:]) != expected:
            raise DimensionError(f"decode expects (B, {expected[0]}, {expected[1]}), got {z.shape}")
        h = self.decoder_embed(z) + self.decoder_pos_embed
        for block in self.decoder_blocks:
            h = block(h)
        patches = self.decoder_pred(self.decoder_norm(h))
        cfg = self.config
        return unpatchify(patches, cfg.patch_size, cfg.channels, cfg.image_size)

    def classify(self, z_cls: Any) -> Tensor:
        """CLSトークンからロジットを計算する

        Raises:
            ConfigurationError: num_classesが無く分類ヘッドが存在しない場合
        """
        if self.head is None:
            raise ConfigurationError("classify() requires a classification config with num_classes",
                                     key="num_classes")
        return self.head(as_tensor(z_cls))

    def forward(self, images: Any) -> ModelOutput:
        out = self.encode(images)
        if self.decoder_embed is not None:
            out.x_recon = self.decode(out.z_patches)
        if self.head is not None:
            out.logits = self.classify(out.z_cls)
        return out
