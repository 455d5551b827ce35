"""vitsomパッケージの例外階層とCLI終了コードの対応表。

各例外は組み込み例外を継承しているため、呼び出し側は
``ValueError`` や ``FileNotFoundError`` として扱うこともできます。
"""

from typing import Optional


class VitSomError(Exception):
    """vitsomが送出するすべての例外の基底クラス"""


class ConfigurationError(VitSomError, ValueError):
    """設定値が不正な場合に送出される例外"""

    def __init__(self, message: str, lineno: Optional[int] = None, key: Optional[str] = None):
        """
        Args:
            message: エラーメッセージ
            lineno: 設定ファイル中の該当行（1始まり）。不明な場合はNone
            key: 問題のある設定項目名（TrainConfigのフィールド名）
        """
        self.lineno = lineno
        self.key = key
        self.message = message
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class DimensionError(VitSomError, ValueError):
    """テンソルの形状が一致しない場合に送出される例外"""


class ContractError(VitSomError, RuntimeError):
    """関数の事前条件が満たされない場合に送出される例外"""


class NumericError(VitSomError, ArithmeticError):
    """NaNや無限大などの数値異常を検出した場合に送出される例外"""


class DataFormatError(VitSomError, ValueError):
    """データファイルの形式が不正な場合に送出される例外"""


class IntegrityError(DataFormatError):
    """データファイルが途中で切れている・件数が一致しない場合に送出される例外"""


class DatasetNotFoundError(VitSomError, FileNotFoundError):
    """データセットのファイルが見つからない場合に送出される例外"""


class CheckpointError(VitSomError, ValueError):
    """チェックポイントが破損している・読み込めない場合に送出される例外"""


class ExportError(VitSomError, ValueError):
    """プロトタイプを画像として描画できない場合に送出される例外"""


# 終了コード: 0 正常, 1 検証失敗, 2 設定, 3 データ, 4 数値, 5 チェックポイント, 6 エクスポート
EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_CHECKPOINT = 5
EXIT_EXPORT = 6

# 順序に意味がある（サブクラスを先に判定する）
_EXIT_CODES = (
    (CheckpointError, EXIT_CHECKPOINT),
    (ExportError, EXIT_EXPORT),
    (NumericError, EXIT_NUMERIC),
    (DataFormatError, EXIT_DATA),
    (DatasetNotFoundError, EXIT_DATA),
    (FileNotFoundError, EXIT_DATA),
    (ConfigurationError, EXIT_CONFIG),
    (ContractError, EXIT_CONFIG),
    (DimensionError, EXIT_CONFIG),
)


def exit_code_for(exc: BaseException) -> int:
    """例外に対応するCLI終了コードを返す

    Args:
        exc: 発生した例外

    Returns:
        終了コード。対応表にない例外は1
    """
    for exc_type, code in _EXIT_CODES:
        if isinstance(exc, exc_type):
            return code
    return EXIT_VERIFY_FAILED
