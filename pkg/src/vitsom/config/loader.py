import configparser
import logging
import re
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

from ..errors import ConfigurationError
from .schema import MODEL_OVERRIDES, TrainConfig

logger = logging.getLogger(__name__)

_TRUE = ('true', 'yes', 'on', '1')
_FALSE = ('false', 'no', 'off', '0')


def _parse_bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in _TRUE:
        return True
    if lowered in _FALSE:
        return False
    raise ValueError(f"expected a boolean, got {value!r}")


def _optional(convert: Callable[[str], Any]) -> Callable[[str], Any]:
    def parse(value: str) -> Any:
        return None if value.strip() in ('', 'none', 'None') else convert(value)
    return parse


def _text(value: str) -> str:
    return value.strip()


# セクション -> 設定キー -> (TrainConfigのフィールド名, 変換関数)
SCHEMA: Dict[str, Dict[str, Tuple[str, Callable[[str], Any]]]] = {
    'run': {
        'task': ('task', _text),
        'seed': ('seed', int),
        'total_steps': ('total_steps', _optional(int)),
        'epochs': ('epochs', _optional(int)),
        'batch_size': ('batch_size', int),
        'eval_interval': ('eval_interval', int),
        'log_interval': ('log_interval', int),
        'eval_samples': ('eval_samples', _optional(int)),
    },
    'data': {
        'dataset': ('dataset', _text),
        'root': ('data_root', _optional(_text)),
        'train_subset': ('train_subset', _optional(int)),
        'test_subset': ('test_subset', _optional(int)),
        'augment': ('augment', _parse_bool),
        'flip': ('flip', _optional(_parse_bool)),
        'prefetch': ('prefetch', _parse_bool),
    },
    'model': {
        'preset': ('model_preset', _optional(_text)),
    },
    'som': {
        'height': ('map_height', int),
        'width': ('map_width', int),
        'metric': ('metric', _text),
        't_max': ('t_max', _optional(float)),
        't_min': ('t_min', float),
        'init_scale': ('init_scale', float),
    },
    'optim': {
        'lr': ('lr_init', float),
        'lr_min': ('lr_min', float),
        'beta1': ('beta1', float),
        'beta2': ('beta2', float),
        'eps': ('eps', float),
        'weight_decay': ('weight_decay', float),
    },
    'objective': {
        'gamma': ('gamma_final', _optional(float)),
        'warmup_fraction': ('warmup_fraction', float),
    },
    'log': {
        'level': ('log_level', _optional(_text)),
        'file': ('log_file', _optional(_text)),
        'format': ('log_format', _optional(_text)),
    },
}

_KEY_LINE = re.compile(r'([^=:]+)[=:]')


def _error_lineno(error: configparser.Error) -> Optional[int]:
    lineno = getattr(error, 'lineno', None)
    if lineno is None and getattr(error, 'errors', None):
        lineno = error.errors[0][0]
    return lineno


class RunConfigFile:
    """INI形式の学習設定ファイルを読み込んで提供するクラス"""

    def __init__(self, path: Union[str, Path]):
        """
        Args:
            path: 設定ファイルのパス

        Raises:
            ConfigurationError: ファイルが無い、または構文が不正な場合
        """
        self.path = Path(path)
        if not self.path.is_file():
            raise ConfigurationError(f"config file not found: {self.path}")
        self.text = self.path.read_text(encoding='utf-8')
        self.config_parser = configparser.ConfigParser(interpolation=None,
                                                       inline_comment_prefixes=('#', ';'))
        try:
            self.config_parser.read_string(self.text, source=str(self.path))
        except configparser.Error as e:
            message = str(e).splitlines()[0]
            raise ConfigurationError(f"cannot parse {self.path}: {message}", _error_lineno(e))
        self._lines = self._index_lines()
        logger.debug(f"Loaded run config from {self.path}")

    def _index_lines(self) -> Dict[Tuple[str, Optional[str]], int]:
        """セクション・キーごとの最初の出現行"""
        index: Dict[Tuple[str, Optional[str]], int] = {}
        section: Optional[str] = None
        for lineno, line in enumerate(self.text.splitlines(), 1):
            stripped = line.strip()
            if not stripped or stripped[0] in '#;':
                continue
            if stripped.startswith('[') and stripped.endswith(']'):
                section = stripped[1:-1].strip()
                index.setdefault((section, None), lineno)
                continue
            match = _KEY_LINE.match(stripped)
            if section is not None and match:
                index.setdefault((section, match.group(1).strip().lower()), lineno)
        return index

    def line_of(self, section: str, key: Optional[str] = None) -> Optional[int]:
        """セクション見出し、またはキーの行番号（1始まり）"""
        return self._lines.get((section, key.lower() if key else None))

    def get_value(self, section: str, key: str, default: Optional[str] = None) -> Optional[str]:
        """設定値を取得する

        Args:
            section: セクション名（例: "run"）
            key: キー名
            default: デフォルト値

        Returns:
            設定値。存在しない場合はデフォルト値
        """
        try:
            if not self.config_parser.has_section(section):
                return default
            return self.config_parser.get(section, key, fallback=default)
        except (configparser.Error, ValueError):
            return default

    def get_bool_value(self, section: str, key: str, default: bool = False) -> bool:
        """真偽値の設定を取得する（true/yes/on/1 を真とみなす）"""
        value = self.get_value(section, key)
        if value is None:
            return default
        return value.lower() in _TRUE

    def to_train_config(self, **overrides: Any) -> TrainConfig:
        """TrainConfigに変換する

        Args:
            **overrides: コマンドラインなどから上書きするTrainConfigのフィールド

        Raises:
            ConfigurationError: 未知のセクション・キー、不正な値、必須キーの欠落。
                メッセージは該当行の ``line N:`` で始まる
        """
        values: Dict[str, Any] = {}
        field_lines: Dict[str, Optional[int]] = {}
        model_overrides: List[Tuple[str, int]] = []

        for section in self.config_parser.sections():
            if section not in SCHEMA:
                raise ConfigurationError(f"unknown section [{section}]", self.line_of(section))
            for key in self.config_parser.options(section):
                lineno = self.line_of(section, key)
                raw = self.config_parser.get(section, key)
                if section == 'model' and key in MODEL_OVERRIDES:
                    field_name, convert = key, int
                elif key in SCHEMA[section]:
                    field_name, convert = SCHEMA[section][key]
                else:
                    raise ConfigurationError(f"unknown key '{key}' in section [{section}]",
                                             lineno, key=key)
                try:
                    value = convert(raw)
                except ValueError:
                    raise ConfigurationError(f"invalid value {raw!r} for '{key}' in [{section}]",
                                             lineno, key=key)
                if section == 'model' and key in MODEL_OVERRIDES:
                    model_overrides.append((key, value))
                else:
                    values[field_name] = value
                field_lines[field_name] = lineno

        if 'task' not in values and 'task' not in overrides:
            raise ConfigurationError("missing required key 'task' in section [run]",
                                     self.line_of('run'), key='task')
        if 'beta1' in values or 'beta2' in values:
            defaults = TrainConfig.__dataclass_fields__['betas'].default
            values['betas'] = (values.pop('beta1', defaults[0]), values.pop('beta2', defaults[1]))
            field_lines['betas'] = field_lines.get('beta1') or field_lines.get('beta2')
        if model_overrides:
            values['model_overrides'] = tuple(model_overrides)
        values.update({k: v for k, v in overrides.items() if v is not None})

        try:
            return TrainConfig(**values)
        except ConfigurationError as e:
            lineno = field_lines.get(e.key) if e.key else None
            if e.lineno is None and lineno is not None:
                raise ConfigurationError(e.message, lineno, key=e.key) from e
            raise


def load_train_config(path: Union[str, Path], **overrides: Any) -> TrainConfig:
    """設定ファイルを読み込みTrainConfigを返す"""
    return RunConfigFile(path).to_train_config(**overrides)
