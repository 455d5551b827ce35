"""単一ファイルのチェックポイント形式。

レイアウト::

    b"VITSOMCK"                  8バイトのマジック
    uint64 (little endian)       JSONヘッダのバイト長
    JSON (UTF-8, キーはソート)   config, model, step, schedules, rng_state,
                                 adam_step, tensors, checksum
    float64 (little endian)      テンソルの生データを tensors の順に連結

テンソル名は ``model.<パラメータ名>``、``som.prototypes``、
``adam.m.<名前>``、``adam.v.<名前>`` です。
"""

import hashlib
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import numpy as np

from ..config import TrainConfig
from ..errors import CheckpointError, ConfigurationError
from ..som import PROTOTYPES_NAME
from ..utils.path import atomic_write_bytes
from ..vit import VitConfig
from .optim import AdamState

logger = logging.getLogger(__name__)

MAGIC = b"VITSOMCK"
FORMAT_VERSION = 1
_LENGTH = struct.Struct("<Q")

MODEL_PREFIX = "model."
ADAM_M_PREFIX = "adam.m."
ADAM_V_PREFIX = "adam.v."


@dataclass
class Checkpoint:
    """学習状態のスナップショット"""

    config: TrainConfig
    model_config: VitConfig
    step: int
    model_state: Dict[str, np.ndarray]
    prototypes: np.ndarray
    adam: AdamState
    # total_steps, t_max, t_min, gamma_final, warmup_steps, latent_norm
    schedules: Dict[str, Any] = field(default_factory=dict)
    # データ順序の位置（seed, epoch, position）
    rng_state: Dict[str, int] = field(default_factory=dict)

    @property
    def total_steps(self) -> int:
        return int(self.schedules["total_steps"])

    @property
    def latent_norm(self) -> float:
        return float(self.schedules.get("latent_norm", 0.0))

    def named_tensors(self) -> List[Tuple[str, np.ndarray]]:
        """保存順に並べた (名前, 配列) の列"""
        tensors = [(MODEL_PREFIX + name, value) for name, value in self.model_state.items()]
        tensors.append((PROTOTYPES_NAME, self.prototypes))
        tensors.extend((ADAM_M_PREFIX + name, value) for name, value in self.adam.m.items())
        tensors.extend((ADAM_V_PREFIX + name, value) for name, value in self.adam.v.items())
        return tensors

    def to_bytes(self) -> bytes:
        entries = []
        blobs = []
        offset = 0
        for name, value in self.named_tensors():
            blob = np.ascontiguousarray(value, dtype="<f8").tobytes()
            entries.append({"name": name, "shape": list(np.shape(value)), "offset": offset})
            blobs.append(blob)
            offset += len(blob)
        payload = b"".join(blobs)
        header = {
            "format_version": FORMAT_VERSION,
            "config": self.config.to_dict(),
            "model": self.model_config.to_dict(),
            "step": int(self.step),
            "schedules": self.schedules,
            "rng_state": self.rng_state,
            "adam_step": int(self.adam.step),
            "tensors": entries,
            "checksum": hashlib.sha256(payload).hexdigest(),
        }
        header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
        return MAGIC + _LENGTH.pack(len(header_bytes)) + header_bytes + payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "Checkpoint":
        """
        Raises:
            CheckpointError: マジック・ヘッダ・チェックサム・テンソル配置のいずれかが不正な場合
        """
        prefix = len(MAGIC) + _LENGTH.size
        if len(data) < prefix or data[:len(MAGIC)] != MAGIC:
            raise CheckpointError("not a vitsom checkpoint (bad magic)")
        (header_length,) = _LENGTH.unpack_from(data, len(MAGIC))
        if prefix + header_length > len(data):
            raise CheckpointError("checkpoint header is truncated")
        try:
            header = json.loads(data[prefix:prefix + header_length].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise CheckpointError(f"checkpoint header is not valid JSON: {e}")
        if not isinstance(header, dict):
            raise CheckpointError("checkpoint header is not a JSON object")
        if header.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {header.get('format_version')}")

        payload = data[prefix + header_length:]
        if hashlib.sha256(payload).hexdigest() != header.get("checksum"):
            raise CheckpointError("checkpoint payload checksum mismatch")

        tensors: Dict[str, np.ndarray] = {}
        expected_offset = 0
        try:
            for entry in header["tensors"]:
                shape = tuple(int(s) for s in entry["shape"])
                nbytes = int(np.prod(shape, dtype=np.int64)) * 8
                end = expected_offset + nbytes
                if int(entry["offset"]) != expected_offset or end > len(payload):
                    raise CheckpointError(f"tensor '{entry['name']}' lies outside the payload")
                raw = payload[expected_offset:expected_offset + nbytes]
                values = np.frombuffer(raw, dtype="<f8").astype(np.float64)
                tensors[entry["name"]] = values.reshape(shape)
                expected_offset += nbytes
            if expected_offset != len(payload):
                raise CheckpointError(f"{len(payload) - expected_offset} trailing payload bytes")
            config = TrainConfig.from_dict(header["config"])
            model_config = VitConfig.from_dict(header["model"])
            step = int(header["step"])
            adam_step = int(header["adam_step"])
            schedules = dict(header["schedules"])
            rng_state = {k: int(v) for k, v in header["rng_state"].items()}
        except CheckpointError:
            raise
        except ConfigurationError as e:
            raise CheckpointError(f"checkpoint holds an invalid config: {e}")
        except (KeyError, TypeError, ValueError) as e:
            raise CheckpointError(f"checkpoint header is incomplete: {e}")

        if PROTOTYPES_NAME not in tensors:
            raise CheckpointError("checkpoint has no SOM prototypes")
        model_state = {name[len(MODEL_PREFIX):]: value for name, value in tensors.items()
                       if name.startswith(MODEL_PREFIX)}
        adam = AdamState(
            m={name[len(ADAM_M_PREFIX):]: value for name, value in tensors.items()
               if name.startswith(ADAM_M_PREFIX)},
            v={name[len(ADAM_V_PREFIX):]: value for name, value in tensors.items()
               if name.startswith(ADAM_V_PREFIX)},
            step=adam_step,
        )
        return cls(config=config, model_config=model_config, step=step, model_state=model_state,
                   prototypes=tensors[PROTOTYPES_NAME], adam=adam, schedules=schedules,
                   rng_state=rng_state)

    def save(self, path: Union[str, Path]) -> Path:
        """一時ファイル経由でアトミックに書き込む"""
        path = atomic_write_bytes(path, self.to_bytes())
        logger.info(f"Saved checkpoint at step {self.step} to {path}")
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Checkpoint":
        """
        Raises:
            CheckpointError: ファイルが読めない・壊れている場合
        """
        path = Path(path)
        try:
            data = path.read_bytes()
        except OSError as e:
            raise CheckpointError(f"cannot read checkpoint {path}: {e}")
        try:
            checkpoint = cls.from_bytes(data)
        except CheckpointError as e:
            raise CheckpointError(f"{path}: {e}")
        logger.debug(f"Loaded checkpoint {path} at step {checkpoint.step}")
        return checkpoint
