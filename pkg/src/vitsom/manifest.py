"""コマンド実行の記録（manifest.json）。

重い処理の前に開始時刻と設定のハッシュを書き、終了時に終了時刻と
終了コードを追記します。出力ディレクトリの無いコマンドでは書きません。
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from .errors import ContractError
from .utils.path import atomic_write_bytes

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'manifest.json'


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec='seconds')


@dataclass
class RunManifest:
    """1回のコマンド実行の記録"""

    command: str
    argv: List[str] = field(default_factory=list)
    config_path: Optional[str] = None
    out_dir: Optional[str] = None
    config_hash: Optional[str] = None
    started: Optional[str] = None
    finished: Optional[str] = None
    exit_code: Optional[int] = None

    @property
    def path(self) -> Optional[Path]:
        return Path(self.out_dir) / MANIFEST_NAME if self.out_dir else None

    def as_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def write(self) -> Optional[Path]:
        path = self.path
        if path is None:
            return None
        text = json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n"
        atomic_write_bytes(path, text.encode('utf-8'))
        logger.debug(f"Wrote run manifest {path}")
        return path

    def begin(self, config_hash: Optional[str] = None) -> Optional[Path]:
        """開始を記録する（重い処理の前に呼ぶ）"""
        if config_hash is not None:
            self.config_hash = config_hash
        self.started = _now()
        return self.write()

    def finish(self, exit_code: int) -> Optional[Path]:
        """終了コードと終了時刻を記録する"""
        if self.started is None:
            self.started = _now()
        self.finished = _now()
        self.exit_code = exit_code
        return self.write()

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'RunManifest':
        """
        Raises:
            ContractError: manifest.jsonとして読めない場合
        """
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST_NAME
        try:
            data = json.loads(path.read_text(encoding='utf-8'))
            return cls(**data)
        except (OSError, TypeError, ValueError) as e:
            raise ContractError(f"cannot read run manifest {path}: {e}")
