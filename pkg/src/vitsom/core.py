import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

from .config import TrainConfig, load_train_config
from .data import Split, load_dataset
from .logging import LogConfig, get_logger
from .trainer import Checkpoint, TrainResult, evaluate, train
from .utils.path import resolve_data_root

logger = get_logger()


def run_training(
    config: Union[TrainConfig, str, Path],
    out_dir: Optional[Union[str, Path]] = None,
    data_root: Optional[Union[str, Path]] = None,
    seed: Optional[int] = None,
    resume: Optional[Union[str, Path, Checkpoint]] = None,
    *,
    log_level: Optional[Union[str, int]] = None,
    log_format: Optional[str] = None,
    log_file: Optional[Union[str, Path]] = None,
    log_file_mode: str = 'a',
    log_encoding: str = 'utf-8'
) -> TrainResult:
    """設定ファイル（またはTrainConfig）に従ってViT-SOMを学習する。

    Args:
        config: INI形式の設定ファイルのパス、またはTrainConfig
        out_dir: チェックポイントと指標CSVの出力先
        data_root: データセットのルート（Noneなら設定ファイル・環境変数に従う）
        seed: 設定のシードを上書きする値
        resume: 再開するチェックポイント（パスまたはCheckpoint）
        log_level: ログレベル ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL' または logging.DEBUG等)
        log_format: ログフォーマット文字列
        log_file: ログファイルのパス（Noneの場合は標準エラー出力のみ）
        log_file_mode: ログファイルのオープンモード（'a'：追記、'w'：上書き）
        log_encoding: ログファイルのエンコーディング

    Returns:
        最終チェックポイントと記録した指標

    Raises:
        ConfigurationError: 設定が不正な場合
        DatasetNotFoundError: データセットが見つからない場合
        NumericError: 学習中に数値異常が起きた場合
    """
    if not isinstance(config, TrainConfig):
        config = load_train_config(config)
    if seed is not None:
        config = config.replace(seed=seed)

    # 引数が無ければ設定ファイルの [log] を使う
    log_config = LogConfig().apply(
        log_level if log_level is not None else config.log_level,
        log_format if log_format is not None else config.log_format,
        log_file if log_file is not None else config.log_file,
        log_file_mode, log_encoding,
    )

    try:
        logger.debug("=== Starting run_training ===")
        resumed_from = f"step {resume.step}" if isinstance(resume, Checkpoint) else resume
        logger.debug(f"Parameters: out_dir={out_dir}, data_root={data_root}, seed={config.seed}, "
                     f"resume={resumed_from}, config_hash={config.config_hash()}")
        result = train(config, out_dir=out_dir, data_root=data_root, resume=resume)
        logger.debug("=== run_training completed ===")
        return result
    except Exception as e:
        logger.error(f"Error during training: {e}", exc_info=logger.isEnabledFor(logging.DEBUG))
        raise
    finally:
        # ログ設定をリセット
        log_config.reset()


def run_evaluation(
    checkpoint: Union[Checkpoint, str, Path],
    dataset: Optional[str] = None,
    data_root: Optional[Union[str, Path]] = None,
    split: Union[str, Split] = Split.TEST,
    subset: Optional[int] = None,
    *,
    log_level: Optional[Union[str, int]] = None,
    log_format: Optional[str] = None,
    log_file: Optional[Union[str, Path]] = None,
    log_file_mode: str = 'a',
    log_encoding: str = 'utf-8'
) -> Dict[str, Any]:
    """チェックポイントを評価する。

    Args:
        checkpoint: チェックポイントのパス、またはCheckpoint
        dataset: データセット名（Noneならチェックポイントの設定と同じ）
        data_root: データセットのルート
        split: 評価する分割
        subset: 評価に使う件数（Noneなら全件）
        log_level: ログレベル
        log_format: ログフォーマット文字列
        log_file: ログファイルのパス
        log_file_mode: ログファイルのオープンモード
        log_encoding: ログファイルのエンコーディング

    Returns:
        step・dataset・split と指標を含む辞書

    Raises:
        CheckpointError: チェックポイントが壊れている場合
        ContractError: データセットがチェックポイントのタスクに合わない場合
    """
    log_config = LogConfig().apply(log_level, log_format, log_file, log_file_mode, log_encoding)

    try:
        logger.debug("=== Starting run_evaluation ===")
        if not isinstance(checkpoint, Checkpoint):
            checkpoint = Checkpoint.load(checkpoint)
        config = checkpoint.config
        name = dataset or config.dataset
        root = resolve_data_root(data_root, config.data_root)
        data = load_dataset(name, root, split)
        if subset is not None:
            data = data.subset(subset, seed=config.seed)
        metrics = evaluate(checkpoint, data)
        record: Dict[str, Any] = {'step': checkpoint.step, 'dataset': data.name,
                                  'split': data.split.value, 'samples': len(data)}
        record.update(metrics)
        logger.debug("=== run_evaluation completed ===")
        return record
    except Exception as e:
        logger.error(f"Error during evaluation: {e}", exc_info=logger.isEnabledFor(logging.DEBUG))
        raise
    finally:
        log_config.reset()
