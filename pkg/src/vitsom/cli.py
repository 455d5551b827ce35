"""``vitsom`` コマンドラインツール。

サブコマンド:

- ``train``: 設定ファイルに従って学習し、チェックポイントと指標CSVを書く
- ``eval``: チェックポイントを評価して指標を表示する
- ``export-prototypes``: プロトタイプをタイル画像と生バイナリに書き出す
- ``verify``: 勾配・BMU・等価性・スケジュールの検証スイートを実行する
- ``bench-bmu``: バッチBMU探索と逐次全探索の速度を比較する
- ``baseline``: 生の画素に対する古典SOMを学習する
- ``params``: 構成ごとのパラメータ数を表示する
- ``convert-usps``: libsvm形式のUSPSをバイナリ形式に変換する

終了コードは ``errors.exit_code_for`` の対応表に従います。
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from . import __version__
from .bench import bench_bmu
from .config import TrainConfig, load_train_config
from .core import run_evaluation, run_training
from .data import IMAGE_SHAPES, LOADERS, Split, convert_usps_libsvm, load_dataset
from .errors import EXIT_OK, EXIT_VERIFY_FAILED, exit_code_for
from .logging import configure_logging, get_log_config
from .manifest import RunManifest
from .som import DistanceMetric, prototype_images, render_tiles, save_prototypes
from .trainer import Checkpoint, restore_model, train_classic_som
from .utils.path import resolve_data_root
from .verification import SUITES, run_verification
from .vit import Task, parameter_count

logger = logging.getLogger(__name__)

LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL')

Handler = Callable[[argparse.Namespace, RunManifest], int]


def map_size(value: str) -> Tuple[int, int]:
    """'24x24' 形式の格子サイズを (height, width) にする"""
    try:
        height, width = (int(part) for part in value.lower().split('x'))
    except ValueError:
        raise argparse.ArgumentTypeError(f"map size must look like 24x24, got '{value}'")
    if height < 1 or width < 1:
        raise argparse.ArgumentTypeError(f"map size must be positive, got '{value}'")
    return height, width


def format_table(record: Mapping[str, Any]) -> str:
    """指標の辞書を揃えた2列の表にする"""
    width = max((len(name) for name in record), default=0)
    lines = []
    for name, value in record.items():
        if value is None:
            text = "-"
        elif isinstance(value, float):
            text = f"{value:.6f}"
        else:
            text = str(value)
        lines.append(f"{name:<{width}}  {text}")
    return "\n".join(lines)


def metrics_line(record: Mapping[str, Any]) -> str:
    return json.dumps(dict(record), sort_keys=True, separators=(',', ':'))


def cmd_train(args: argparse.Namespace, manifest: RunManifest) -> int:
    checkpoint = Checkpoint.load(args.resume) if args.resume else None
    if args.config:
        config = load_train_config(args.config)
    elif checkpoint is not None:
        config = checkpoint.config
    else:
        raise argparse.ArgumentTypeError("train needs --config or --resume")
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    manifest.begin(checkpoint.config.config_hash() if checkpoint else config.config_hash())

    result = run_training(config, out_dir=args.out, data_root=args.dataset_root,
                          resume=checkpoint, log_level=args.log_level, log_file=args.log_file)
    record: Dict[str, Any] = {'step': result.checkpoint.step}
    record.update(result.final_metrics)
    print(format_table(record))
    if result.checkpoint_path is not None:
        print(f"checkpoint: {result.checkpoint_path}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, manifest: RunManifest) -> int:
    checkpoint = Checkpoint.load(args.checkpoint)
    manifest.begin(checkpoint.config.config_hash())
    record = run_evaluation(checkpoint, dataset=args.dataset, data_root=args.dataset_root,
                            split=args.split, subset=args.subset,
                            log_level=args.log_level, log_file=args.log_file)
    if args.json:
        print(metrics_line(record))
    else:
        print(format_table(record))
        print(f"METRICS {metrics_line(record)}")
    return EXIT_OK


def cmd_export_prototypes(args: argparse.Namespace, manifest: RunManifest) -> int:
    checkpoint = Checkpoint.load(args.checkpoint)
    manifest.begin(checkpoint.config.config_hash())
    model, grid = restore_model(checkpoint)
    out = Path(args.out)
    stem = Path(args.raw) if args.raw else out.with_suffix('')
    save_prototypes(grid, stem)
    images = prototype_images(grid, checkpoint.model_config.image_shape, model,
                              checkpoint.latent_norm)
    render_tiles(images, grid.height, grid.width, out)
    print(f"image: {out}")
    print(f"prototypes: {stem.with_suffix('.bin')}")
    return EXIT_OK


def cmd_verify(args: argparse.Namespace, manifest: RunManifest) -> int:
    manifest.begin()
    trials = {name: args.trials for name in SUITES} if args.trials else None
    results = run_verification(args.suite, seed=args.seed, trials=trials,
                               inject_failure=args.inject_failure)
    for result in results:
        print(result.summary())
    failed = next((r for r in results if not r.passed), None)
    if failed is None:
        return EXIT_OK
    case = failed.first_failure
    if case is not None:
        print(f"first failure: {case.suite}/{case.name} measured={case.measured:.3e} "
              f"tolerance={case.tolerance:.3e}")
        print(f"inputs: {json.dumps(case.inputs, sort_keys=True, default=str)}")
    logger.error(f"Verification failed in suite '{failed.name}'")
    return EXIT_VERIFY_FAILED


def cmd_bench_bmu(args: argparse.Namespace, manifest: RunManifest) -> int:
    manifest.begin()
    height, width = args.map_size
    report = bench_bmu(height, width, args.dim, args.batch, args.metric, args.seed)
    print(metrics_line(report.as_dict()) if args.json else report.format())
    return EXIT_OK


def cmd_baseline(args: argparse.Namespace, manifest: RunManifest) -> int:
    manifest.begin()
    root = resolve_data_root(args.dataset_root)
    train_set = load_dataset(args.dataset, root, Split.TRAIN)
    test_set = load_dataset(args.dataset, root, Split.TEST)
    if args.train_subset:
        train_set = train_set.subset(args.train_subset, seed=args.seed)
    if args.test_subset:
        test_set = test_set.subset(args.test_subset, seed=args.seed)
    height, width = args.map_size
    result = train_classic_som(train_set, test_set, height, width, epochs=args.epochs,
                               total_steps=args.steps, seed=args.seed)
    print(format_table({
        'dataset': args.dataset,
        'map': f"{height}x{width}",
        'steps': result.steps,
        'parameters': result.parameter_count,
        'purity': result.purity,
        'quantization_error': result.quantization_error,
        'topographic_error': result.topographic_error,
    }))
    if args.out:
        out = Path(args.out)
        save_prototypes(result.grid, out / 'prototypes')
        images = prototype_images(result.grid, train_set.image_shape)
        render_tiles(images, height, width, out / 'prototypes.png')
    return EXIT_OK


def cmd_params(args: argparse.Namespace, manifest: RunManifest) -> int:
    if args.config:
        config = load_train_config(args.config)
    else:
        height, width = args.map_size
        dataset = args.dataset or ('mnist' if args.task is Task.CLUSTERING else 'cifar10')
        config = TrainConfig(task=args.task, dataset=dataset, map_height=height,
                             map_width=width, total_steps=1)
    manifest.begin(config.config_hash())
    model_config = config.vit_config(IMAGE_SHAPES[config.dataset], 10)
    counts: Dict[str, Any] = dict(parameter_count(model_config))
    counts['som_prototypes'] = config.map_height * config.map_width * model_config.som_dim
    record: Dict[str, Any] = {'task': config.task.value, 'dataset': config.dataset,
                              'map': f"{config.map_height}x{config.map_width}"}
    record.update(counts)
    print(metrics_line(record) if args.json else format_table(record))
    return EXIT_OK


def cmd_convert_usps(args: argparse.Namespace, manifest: RunManifest) -> int:
    manifest.begin()
    count = convert_usps_libsvm(args.train, args.test, args.out)
    print(f"wrote {count} samples to {args.out}")
    return EXIT_OK


def _add_data_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dataset-root", default=None,
                        help="dataset root (falls back to [data] root and VITSOM_DATA_ROOT)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vitsom",
        description="Train and inspect a vision transformer regularized by a self-organizing map",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", choices=LOG_LEVELS, default=None, help="log level")
    parser.add_argument("--log-file", default=None, help="also write logs to this file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", default=None, help="INI run configuration")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--resume", default=None, help="checkpoint to resume from")
    _add_data_options(p)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", choices=sorted(LOADERS), default=None,
                   help="dataset to evaluate on (defaults to the training dataset)")
    p.add_argument("--split", choices=[s.value for s in Split], default=Split.TEST.value)
    p.add_argument("--subset", type=int, default=None, help="evaluate on this many samples")
    p.add_argument("--json", action="store_true", help="print a single JSON line")
    p.add_argument("--out", default=None, help="directory for the run manifest")
    _add_data_options(p)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("export-prototypes", help="render prototypes as a tiled image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="image path (.png, .pgm or .ppm)")
    p.add_argument("--raw", default=None,
                   help="stem of the raw prototype dump (defaults to the image path)")
    p.set_defaults(handler=cmd_export_prototypes)

    p = sub.add_parser("verify", help="run the oracle suites")
    p.add_argument("--suite", action="append", choices=SUITES, default=None,
                   help="suite to run (repeatable; default: all)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=None, help="trials per suite")
    p.add_argument("--inject-failure", action="store_true",
                   help="force every tolerance negative to exercise the failure path")
    p.add_argument("--out", default=None, help="directory for the run manifest")
    p.set_defaults(handler=cmd_verify)

    p = sub.add_parser("bench-bmu", help="time batch BMU search against a sequential scan")
    p.add_argument("--map-size", type=map_size, default=(40, 40))
    p.add_argument("--dim", type=int, default=784)
    p.add_argument("--batch", type=int, default=256)
    p.add_argument("--metric", choices=[m.value for m in DistanceMetric],
                   default=DistanceMetric.EUCLIDEAN.value)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.add_argument("--out", default=None, help="directory for the run manifest")
    p.set_defaults(handler=cmd_bench_bmu)

    p = sub.add_parser("baseline", help="train a classic sequential SOM on raw pixels")
    p.add_argument("--dataset", choices=sorted(LOADERS), default="mnist")
    p.add_argument("--map-size", type=map_size, default=(24, 24))
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--steps", type=int, default=None, help="number of sequential updates")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-subset", type=int, default=None)
    p.add_argument("--test-subset", type=int, default=None)
    p.add_argument("--out", default=None, help="directory for prototypes and the manifest")
    _add_data_options(p)
    p.set_defaults(handler=cmd_baseline)

    p = sub.add_parser("params", help="report parameter counts per component")
    p.add_argument("--config", default=None, help="INI run configuration")
    p.add_argument("--task", type=Task.parse, default=Task.CLUSTERING)
    p.add_argument("--dataset", choices=sorted(IMAGE_SHAPES), default=None)
    p.add_argument("--map-size", type=map_size, default=(24, 24))
    p.add_argument("--json", action="store_true")
    p.set_defaults(handler=cmd_params)

    p = sub.add_parser("convert-usps", help="convert the libsvm USPS bundle to usps.bin")
    p.add_argument("--train", required=True, help="libsvm training file")
    p.add_argument("--test", default=None, help="libsvm test file")
    p.add_argument("--out", required=True, help="output usps.bin")
    p.set_defaults(handler=cmd_convert_usps)

    return parser


def _manifest_dir(args: argparse.Namespace) -> Optional[str]:
    out = getattr(args, 'out', None)
    if out is None:
        return None
    # ファイルを出力するコマンドはその親ディレクトリに書く
    if args.command in ('export-prototypes', 'convert-usps'):
        return str(Path(out).parent)
    return str(out)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """コマンドラインのエントリーポイント

    Returns:
        終了コード
    """
    arguments: List[str] = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(arguments)
    configure_logging(level=args.log_level, log_file=args.log_file)
    manifest = RunManifest(command=args.command, argv=arguments,
                           config_path=getattr(args, 'config', None),
                           out_dir=_manifest_dir(args))
    handler: Handler = args.handler
    code = EXIT_OK
    try:
        code = handler(args, manifest)
    except KeyboardInterrupt:
        code = 130
        logger.error(f"{args.command} interrupted")
    except argparse.ArgumentTypeError as e:
        print(f"vitsom {args.command}: error: {e}", file=sys.stderr)
        code = 2
    except Exception as e:
        code = exit_code_for(e)
        logger.error(f"{args.command} failed: {e}")
        print(f"vitsom {args.command}: error: {e}", file=sys.stderr)
    finally:
        try:
            manifest.finish(code)
        except OSError as e:
            logger.warning(f"Could not write run manifest: {e}")
        get_log_config().reset()
    return code


if __name__ == "__main__":
    sys.exit(main())
