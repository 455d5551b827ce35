"""プロトタイプの書き出しと画像タイル化。

生データは ``<stem>.bin``（M×dim のリトルエンディアンfloat64）と
``<stem>.json``（height, width, dim, metric）の組で保存します。
"""

import json
import logging
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
from PIL import Image

from ..errors import DataFormatError, ExportError, IntegrityError
from ..ndgrad import Tensor
from ..utils.path import atomic_write_bytes
from ..vit import VisionTransformer
from .grid import DistanceMetric, SomGrid

logger = logging.getLogger(__name__)

_IMAGE_SUFFIXES = {".png", ".pgm", ".ppm", ".pnm"}


def save_prototypes(grid: SomGrid, stem: Union[str, Path]) -> Tuple[Path, Path]:
    """プロトタイプを生バイナリとJSONサイドカーに保存する

    Returns:
        (バイナリのパス, サイドカーのパス)
    """
    stem = Path(stem)
    bin_path = stem.with_suffix(".bin")
    json_path = stem.with_suffix(".json")
    payload = np.ascontiguousarray(grid.prototypes.data, dtype="<f8").tobytes()
    atomic_write_bytes(bin_path, payload)
    sidecar = {"height": grid.height, "width": grid.width, "dim": grid.dim,
               "metric": grid.metric.value}
    atomic_write_bytes(json_path, (json.dumps(sidecar, indent=2, sort_keys=True) + "\n").encode())
    logger.info(f"Wrote {grid.n_units} prototypes of dim {grid.dim} to {bin_path}")
    return bin_path, json_path


def load_prototypes(stem: Union[str, Path]) -> SomGrid:
    """save_prototypesで書いたプロトタイプを読み込む

    Raises:
        DataFormatError: サイドカーが壊れている場合
        IntegrityError: バイナリの長さが M×dim×8 と一致しない場合
    """
    stem = Path(stem)
    try:
        meta = json.loads(stem.with_suffix(".json").read_text(encoding="utf-8"))
        height, width, dim = int(meta["height"]), int(meta["width"]), int(meta["dim"])
        metric = DistanceMetric.parse(meta["metric"])
    except (KeyError, TypeError, ValueError) as e:
        raise DataFormatError(f"invalid prototype sidecar {stem.with_suffix('.json')}: {e}")
    raw = stem.with_suffix(".bin").read_bytes()
    expected = height * width * dim * 8
    if len(raw) != expected:
        raise IntegrityError(f"prototype dump has {len(raw)} bytes, expected {expected}")
    prototypes = np.frombuffer(raw, dtype="<f8").reshape(height * width, dim)
    return SomGrid(height, width, dim, metric, prototypes=prototypes.astype(np.float64))


def decode_prototypes(model: VisionTransformer, grid: SomGrid,
                      latent_norm: Optional[float] = None,
                      chunk: int = 64) -> np.ndarray:
    """プロトタイプを z_patches とみなしてデコーダに通し画像 (M, C, H, W) を得る

    ``latent_norm`` を与えると各プロトタイプをそのノルムに揃えてから復号します
    （コサイン距離では向きだけが意味を持つため）。
    """
    cfg = model.config
    if not cfg.has_decoder:
        raise ExportError("prototypes can only be decoded by a model with a decoder")
    if grid.dim != cfg.som_dim:
        raise ExportError(
            f"prototype dim {grid.dim} does not match flattened patch tokens "
            f"{cfg.num_patches}x{cfg.embed_dim}={cfg.som_dim}"
        )
    prototypes = grid.prototypes.data
    if latent_norm is not None and latent_norm > 0:
        norms = np.linalg.norm(prototypes, axis=1, keepdims=True)
        prototypes = prototypes * (latent_norm / np.where(norms == 0.0, 1.0, norms))
    tokens = prototypes.reshape(grid.n_units, cfg.num_patches, cfg.embed_dim)
    images = [model.decode(Tensor(tokens[i:i + chunk])).data
              for i in range(0, grid.n_units, chunk)]
    return np.concatenate(images, axis=0)


def prototype_images(grid: SomGrid,
                     image_shape: Tuple[int, int, int],
                     model: Optional[VisionTransformer] = None,
                     latent_norm: Optional[float] = None) -> np.ndarray:
    """プロトタイプを画像として解釈できる形 (M, C, H, W) にする

    Raises:
        ExportError: 次元が画像にもパッチトークンにも対応しない場合
    """
    channels, height, width = image_shape
    if model is not None and grid.dim == model.config.som_dim:
        return decode_prototypes(model, grid, latent_norm)
    if grid.dim == channels * height * width:
        return grid.prototypes.data.reshape(grid.n_units, channels, height, width)
    raise ExportError(
        f"prototype dim {grid.dim} is neither an image of shape {image_shape} "
        f"nor a flattened patch-token grid of the model"
    )


def tile_images(images: np.ndarray, rows: int, cols: int, pad: int = 1) -> np.ndarray:
    """画像 (M, C, h, w) を rows×cols に並べた8bit配列を返す（グレーは2次元、RGBは3次元）"""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 4 or images.shape[0] != rows * cols:
        raise ExportError(f"cannot tile images of shape {images.shape} into a {rows}x{cols} grid")
    count, channels, h, w = images.shape
    if channels not in (1, 3):
        raise ExportError(f"cannot render {channels}-channel images")
    canvas = np.zeros((rows * (h + pad) + pad, cols * (w + pad) + pad, channels))
    for index in range(count):
        r, c = divmod(index, cols)
        top, left = pad + r * (h + pad), pad + c * (w + pad)
        canvas[top:top + h, left:left + w] = images[index].transpose(1, 2, 0)
    pixels = np.rint(np.clip(canvas, 0.0, 1.0) * 255.0).astype(np.uint8)
    return pixels[:, :, 0] if channels == 1 else pixels


def render_tiles(images: np.ndarray, rows: int, cols: int, path: Union[str, Path]) -> Path:
    """タイル画像をPNG/PGM/PPMで保存する（形式は拡張子で決まる）

    Raises:
        ExportError: 未対応の拡張子、またはグレー以外をPGMに書こうとした場合
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix not in _IMAGE_SUFFIXES:
        raise ExportError(f"unsupported image format '{suffix}' (use .png, .pgm or .ppm)")
    pixels = tile_images(images, rows, cols)
    if suffix == ".pgm" and pixels.ndim != 2:
        raise ExportError("PGM output requires single-channel prototypes; use .png or .ppm")
    # 2次元のuint8はL、(h, w, 3)はRGBとして解釈される
    image = Image.fromarray(pixels)
    path.parent.mkdir(parents=True, exist_ok=True)
    image.save(path, format="PNG" if suffix == ".png" else "PPM")
    logger.info(f"Rendered {rows}x{cols} prototype tiles to {path}")
    return path
