import argparse
import logging
import os
import sys
from typing import Any, Dict, List, Optional

from backdoor_cert import __version__
from backdoor_cert.commands import COMMANDS
from backdoor_cert.config import load_config
from backdoor_cert.errors import EXIT_INTERNAL, EXIT_OK, BackdoorCertError
from backdoor_cert.models.schemas import ErrorResponse
from backdoor_cert.utils.metrics import RunMetrics

logger = logging.getLogger(__name__)

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")

# Flag name -> RunConfig field
FLAGS = {
    "beta": ("--beta", float, "Probability a noise symbol is 0"),
    "num_classifiers": ("--num-classifiers", int, "Ensemble size N"),
    "alpha": ("--alpha", float, "Simultaneous significance level over the test set"),
    "train_size": ("--train-size", int, "Training examples T"),
    "test_size": ("--test-size", int, "Test examples"),
    "hidden": ("--hidden", int, "Hidden units"),
    "epochs": ("--epochs", int, "Gradient descent epochs"),
    "learning_rate": ("--lr", float, "Gradient descent step size"),
    "seed": ("--seed", int, "Master seed"),
    "workers": ("--workers", int, "Parallel workers"),
    "out": ("--out", str, "Output directory"),
    "chunk_size": ("--chunk-size", int, "Classifiers per training task"),
    "digits": ("--digits", str, "Two digits kept, e.g. 1,7"),
    "train_images": ("--train-images", str, "Raw IDX3 image file"),
    "train_labels": ("--train-labels", str, "Raw IDX1 label file"),
    "trigger_positions": ("--trigger-positions", str, "Comma-separated trigger feature indices"),
    "trigger_values": ("--trigger-values", str, "Comma-separated trigger symbols"),
    "trigger_target": ("--trigger-target", int, "Target label of the backdoor"),
    "trigger_poison_count": ("--trigger-poison-count", int, "Training examples poisoned"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="KEY=value configuration file")
    common.add_argument("--log-level", choices=LOG_LEVELS, help="Logging level (default: $LOG_LEVEL or INFO)")
    for field, (flag, kind, help_text) in FLAGS.items():
        common.add_argument(flag, dest=field, type=kind, default=None, help=help_text)

    parser = argparse.ArgumentParser(
        prog="backdoor_cert",
        description="Certify robustness to backdoor attacks with discrete-noise randomized smoothing",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, command in COMMANDS.items():
        subparsers.add_parser(name, parents=[common], help=command.__doc__.strip().splitlines()[0])
    return parser


def flag_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    return {field: getattr(args, field) for field in FLAGS if getattr(args, field) is not None}


def report_error(error: BaseException, exit_code: int) -> None:
    """JSON error line on stderr"""
    response = ErrorResponse(
        error={"code": str(exit_code), "type": type(error).__name__, "message": str(error)}
    )
    print(response.model_dump_json(), file=sys.stderr)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=args.log_level or os.getenv("LOG_LEVEL", "INFO").upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    metrics = RunMetrics()
    config = None
    try:
        config = load_config(args.config, overrides=flag_overrides(args))
        logger.info(f"Running {args.command} with output directory {config.out}")
        COMMANDS[args.command](config, metrics)
        return EXIT_OK
    except BackdoorCertError as e:
        logger.error(f"{args.command} failed: {e}")
        report_error(e, e.exit_code)
        return e.exit_code
    except Exception as e:
        logger.exception(f"Unexpected error in {args.command}")
        report_error(e, EXIT_INTERNAL)
        return EXIT_INTERNAL
    finally:
        if config is not None and os.path.isdir(config.out):
            metrics.write(config.out)


if __name__ == "__main__":
    sys.exit(main())
