import csv
import logging
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, TextIO, Union

logger = logging.getLogger(__name__)

FIELDS = (
    'step',
    'l_nn',
    'l_som',
    'l_total',
    'purity',
    'accuracy',
    'quantization_error',
    'topographic_error',
    'temperature',
    'gamma',
    'lr',
)


def format_value(value: Any) -> str:
    """CSVのセル表現。未計算は空、浮動小数点はreprで丸めずに書く"""
    if value is None:
        return ''
    if isinstance(value, float):
        return repr(value)
    return str(value)


class MetricLog:
    """学習中の指標をCSVに追記するクラス"""

    def __init__(self, path: Union[str, Path], append: bool = False):
        """
        Args:
            path: CSVファイルのパス
            append: 既存のファイルに追記するか（再開時）
        """
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        resume = append and self.path.is_file() and self.path.stat().st_size > 0
        self._file: Optional[TextIO] = open(self.path, 'a' if resume else 'w',
                                            newline='', encoding='utf-8')
        self._writer = csv.writer(self._file, lineterminator='\n')
        if not resume:
            self._writer.writerow(FIELDS)
            self._file.flush()

    def append(self, record: Mapping[str, Any]) -> None:
        """1行書き込む。FIELDSにないキーは無視する"""
        if self._file is None:
            raise ValueError(f"metric log {self.path} is closed")
        self._writer.writerow([format_value(record.get(name)) for name in FIELDS])
        self._file.flush()

    def close(self) -> None:
        if self._file is not None:
            self._file.close()
            self._file = None

    def __enter__(self) -> 'MetricLog':
        return self

    def __exit__(self, *exc_info: Any) -> None:
        self.close()


def read_metric_log(path: Union[str, Path]) -> List[Dict[str, Optional[float]]]:
    """CSVを読み、空セルをNone、それ以外をfloatにした辞書のリストを返す"""
    rows: List[Dict[str, Optional[float]]] = []
    with open(path, 'r', newline='', encoding='utf-8') as f:
        for row in csv.DictReader(f):
            rows.append({key: (float(value) if value != '' else None)
                         for key, value in row.items()})
    return rows
