"""
Command line interface: `mvam synth|train|eval|predict|gradcheck`.
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional

from loguru import logger

from .config.config_manager import ConfigManager
from .errors import CheckpointError, ConfigError, DataError, NumericError
from .main import ABLATIONS, ExperimentRunner

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML configuration file")
    common.add_argument("--seed", type=int, help="Random seed")
    common.add_argument("--out", help="Output directory")
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override a configuration value (repeatable), e.g. training.batch_size=8",
    )

    parser = argparse.ArgumentParser(prog="mvam", description="Multi-view label alignment document classifier")
    commands = parser.add_subparsers(dest="command", required=True)

    commands.add_parser("synth", parents=[common], help="Generate a synthetic corpus")

    train = commands.add_parser("train", parents=[common], help="Train a model")
    train.add_argument("--corpus", required=True, help="JSONL corpus file")
    train.add_argument("--ablation", choices=sorted(ABLATIONS), default="none")

    evaluate = commands.add_parser("eval", parents=[common], help="Evaluate a checkpoint or a predictions file")
    evaluate.add_argument("--corpus", required=True, help="JSONL corpus file")
    source = evaluate.add_mutually_exclusive_group(required=True)
    source.add_argument("--checkpoint", help="Checkpoint file")
    source.add_argument("--predictions", help="JSONL predictions file")
    evaluate.add_argument("--split", default="test", choices=("train", "val", "test"))

    predict = commands.add_parser("predict", parents=[common], help="Write top-n predictions")
    predict.add_argument("--corpus", required=True, help="JSONL corpus file")
    predict.add_argument("--checkpoint", required=True, help="Checkpoint file")
    predict.add_argument("--top-n", type=int, default=5)
    predict.add_argument("--snippets", action="store_true", help="Include the most attended k-gram per label")
    predict.add_argument("--split", default="test", choices=("train", "val", "test"))

    gradcheck = commands.add_parser("gradcheck", parents=[common], help="Finite-difference gradient check")
    gradcheck.add_argument("--tolerance", type=float, default=1e-4)

    return parser


def _config_manager(args: argparse.Namespace) -> ConfigManager:
    overrides = list(args.overrides)
    if args.seed is not None:
        key = "synthetic.seed" if args.command == "synth" else "experiment.seed"
        overrides.append(f"{key}={args.seed}")
    manager = ConfigManager(args.config, overrides)
    manager.validate_config()
    manager.setup_logging()
    return manager


def run(args: argparse.Namespace) -> int:
    manager = _config_manager(args)
    runner = ExperimentRunner(manager)

    if args.command == "synth":
        runner.synthesize(args.out)
    elif args.command == "train":
        runner.train(args.corpus, args.out, args.ablation)
    elif args.command == "eval":
        report = runner.evaluate(args.corpus, args.checkpoint, args.predictions, args.split, args.out)
        print(report.to_record())
    elif args.command == "predict":
        out_dir = Path(args.out or manager.get("output.dir", "runs"))
        runner.predict(args.corpus, args.checkpoint, out_dir / "predictions.jsonl", args.top_n, args.snippets, args.split)
    elif args.command == "gradcheck":
        report = runner.gradcheck(args.seed or 0, args.tolerance)
        print("\n".join(report.summary_lines()))
        if not report.all_passed:
            return EXIT_NUMERIC
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_USAGE
    except (DataError, CheckpointError) as e:
        logger.error(f"Data error: {e}")
        return EXIT_DATA
    except NumericError as e:
        logger.error(f"Numeric error: {e}")
        return EXIT_NUMERIC
    except Exception as e:
        logger.exception(f"Unexpected failure: {e}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
