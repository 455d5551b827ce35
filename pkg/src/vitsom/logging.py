"""vitsomのログ出力を設定するモジュール。

学習ループのステップ行・評価結果・データ読み込みの警告は、すべて ``vitsom``
ロガーの子ロガー（``logging.getLogger(__name__)``）から出力されます。
このモジュールはそのパッケージロガーのレベル・フォーマット・ログファイルを
まとめて管理し、``run_training`` / ``run_evaluation`` の呼び出しごと、
またはCLIのコマンドごとに設定して終了時に元へ戻します。
"""

import logging
import sys
from logging import FileHandler, StreamHandler
from pathlib import Path
from typing import Optional, Union

# 行頭の時刻で学習ログと評価ログを突き合わせられるようにする
DEFAULT_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

PACKAGE_LOGGER = 'vitsom'

LevelLike = Union[str, int]


class LogConfig:
    """``vitsom`` ロガーのハンドラとレベルを管理するクラス

    既定では標準エラー出力にWARNING以上だけを出します。学習の進捗（ステップごとの
    L_total や評価指標）はINFO、構成やチェックポイントの詳細はDEBUGです。
    """

    def __init__(self, name: str = PACKAGE_LOGGER):
        """
        Args:
            name: 管理するロガー名（通常は ``vitsom``）
        """
        self.logger = logging.getLogger(name)
        self.logger.setLevel(logging.WARNING)
        self._setup_default_handler()

    def _setup_default_handler(self) -> None:
        self.logger.handlers.clear()
        handler = StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter(DEFAULT_FORMAT))
        self.logger.addHandler(handler)
        # ルートロガーへの二重出力を防ぐ
        self.logger.propagate = False

    def set_level(self, level: LevelLike) -> None:
        """ログレベルを設定する

        Args:
            level: 'DEBUG' や 'info' などのレベル名、または logging.DEBUG などの数値

        Raises:
            AttributeError: 未知のレベル名の場合（CLIの ``--log-level`` や [log] level の誤り）
        """
        if isinstance(level, str):
            name = level.strip().upper()
            if not isinstance(getattr(logging, name, None), int):
                raise AttributeError(f"unknown log level '{level}' for {self.logger.name}")
            level = getattr(logging, name)
        self.logger.setLevel(level)

    def set_format(self, format_str: str) -> None:
        """全ハンドラのフォーマットを差し替える"""
        formatter = logging.Formatter(format_str)
        for handler in self.logger.handlers:
            handler.setFormatter(formatter)

    def add_file_handler(self,
                         filepath: Union[str, Path],
                         mode: str = 'a',
                         encoding: str = 'utf-8',
                         format_str: Optional[str] = None) -> None:
        """学習・評価のログをファイルにも書く

        Args:
            filepath: ログファイルのパス（ディレクトリは作らない）
            mode: 'a' なら再開した学習のログを追記、'w' なら上書き
            encoding: ファイルエンコーディング
            format_str: このハンドラ専用のフォーマット（省略時は既存ハンドラに合わせる）

        Raises:
            OSError: ファイルを開けない場合
        """
        handler = FileHandler(filepath, mode, encoding=encoding)
        if format_str:
            handler.setFormatter(logging.Formatter(format_str))
        elif self.logger.handlers:
            handler.setFormatter(self.logger.handlers[0].formatter)
        else:
            handler.setFormatter(logging.Formatter(DEFAULT_FORMAT))
        self.logger.addHandler(handler)
        self.logger.debug(f"Logging vitsom output to {filepath} (mode '{mode}')")

    def apply(self,
              level: Optional[LevelLike] = None,
              format_str: Optional[str] = None,
              log_file: Optional[Union[str, Path]] = None,
              file_mode: str = 'a',
              encoding: str = 'utf-8') -> 'LogConfig':
        """指定された項目だけを設定する。Noneの項目は今の設定のまま

        run_training では引数が無い項目に設定ファイルの [log] セクションの値を渡します。
        """
        if level is not None:
            self.set_level(level)
        if format_str is not None:
            self.set_format(format_str)
        if log_file is not None:
            self.add_file_handler(log_file, file_mode, encoding)
        return self

    def remove_all_handlers(self) -> None:
        """全ハンドラを閉じて外す（ログファイルはここで閉じられる）"""
        for handler in list(self.logger.handlers):
            handler.close()
        self.logger.handlers.clear()

    def reset(self) -> None:
        """標準エラー出力・WARNINGの既定状態に戻す"""
        self.remove_all_handlers()
        self._setup_default_handler()
        self.logger.setLevel(logging.WARNING)


_log_config = LogConfig()


def get_logger() -> logging.Logger:
    """``vitsom`` パッケージロガー"""
    return _log_config.logger


def get_log_config() -> LogConfig:
    return _log_config


def configure_logging(level: Optional[LevelLike] = None,
                      format_str: Optional[str] = None,
                      log_file: Optional[Union[str, Path]] = None,
                      file_mode: str = 'a',
                      encoding: str = 'utf-8') -> LogConfig:
    """CLIのグローバルオプション（``--log-level`` / ``--log-file``）からロギングを設定する

    空文字列やNoneの項目は無視します。

    Returns:
        設定済みのLogConfig
    """
    return _log_config.apply(level or None, format_str or None, log_file or None,
                             file_mode, encoding)
