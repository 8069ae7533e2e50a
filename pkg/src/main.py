"""Command-line entry point: train, eval, bench and covdump."""

from __future__ import annotations

import argparse
from pathlib import Path
import sys
from typing import Any, Dict, List, NoReturn, Optional

from src.config import CliConfig, Config, load_config_file
from src.errors import ConfigError, DataError, NumericalError, OutOfGridError
from src.logging_config import get_logger, setup_logging

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

# flag destination -> TrainConfig / CliConfig key
_OPTION_FLAGS = {
    "data": "data",
    "label_col": "label_col",
    "header": "header",
    "format": "format",
    "libsvm_dim": "libsvm_dim",
    "normalize": "normalize",
    "val_fraction": "val_fraction",
    "test_fraction": "test_fraction",
    "minibatch": "minibatch_size",
    "samples_train": "samples",
    "lr_net": "lr_net",
    "lr_kernel": "lr_kernel",
    "lr_variational": "lr_variational",
    "lr_mixing": "lr_mixing",
    "epochs_pretrain": "epochs_pretrain",
    "epochs_gp": "epochs_gp",
    "epochs_joint": "epochs_joint",
    "grid_size": "grid_size",
    "grid_margin": "grid_margin",
    "optimizer": "optimizer",
    "pretrain_optimizer": "pretrain_optimizer",
    "pretrain_lr": "pretrain_lr",
    "momentum": "momentum",
    "decay_every": "decay_every",
    "decay_gamma": "decay_gamma",
    "hidden": "hidden_widths",
    "feature_dim": "feature_dim",
    "gp_input_dim": "gp_input_dim",
    "predict_samples": "predict_samples",
    "patience": "patience",
    "train_fraction": "train_fraction",
    "seed": "seed",
    "threads": "threads",
}


class _Parser(argparse.ArgumentParser):
    """Argument parser that reports usage errors as configuration errors."""

    def error(self, message: str) -> NoReturn:
        raise ConfigError(message)


def _int_list(value: str) -> List[int]:
    try:
        return [int(part) for part in value.split(",") if part.strip()]
    except ValueError as exc:
        message = f"expected comma-separated integers, got {value!r}"
        raise argparse.ArgumentTypeError(message) from exc


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file of options (flags override it)")
    common.add_argument(
        "--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="Logging level"
    )
    common.add_argument("--threads", type=int, help="Worker threads for the GP layer")
    common.add_argument("--seed", type=int, help="Random seed")
    return common


def _data_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", help="Path to a CSV or libsvm data file")
    parser.add_argument("--label-col", help="Label column name or zero-based index (CSV)")
    parser.add_argument(
        "--no-header", dest="header", action="store_const", const=False, help="CSV has no header"
    )
    parser.add_argument("--format", choices=["csv", "libsvm"], help="Data file format")
    parser.add_argument("--libsvm-dim", type=int, help="Feature dimension of libsvm data")
    parser.add_argument(
        "--no-normalize",
        dest="normalize",
        action="store_const",
        const=False,
        help="Skip z-score normalization",
    )


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = _Parser(
        prog="python -m src.main",
        description="Stochastic variational deep kernel learning for classification",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    train = sub.add_parser("train", parents=[common], help="Fit a model and save a checkpoint")
    _data_flags(train)
    train.add_argument("--out", help="Output directory (default SVDKL_OUTPUT_DIR)")
    train.add_argument("--val-fraction", type=float, help="Validation share of the data")
    train.add_argument("--test-fraction", type=float, help="Test share of the data")
    train.add_argument("--minibatch", type=int, help="Minibatch size B")
    train.add_argument("--samples", dest="samples_train", type=int, help="Noise samples T per step")
    train.add_argument("--lr-net", type=float, help="Network learning rate")
    train.add_argument("--lr-kernel", type=float, help="Kernel hyperparameter learning rate")
    train.add_argument("--lr-variational", type=float, help="Variational learning rate")
    train.add_argument("--lr-mixing", type=float, help="Mixing matrix learning rate")
    train.add_argument("--epochs-pretrain", type=int, help="Network pretraining epochs")
    train.add_argument("--epochs-gp", type=int, help="GP-layer epochs on frozen features")
    train.add_argument("--epochs-joint", type=int, help="Joint training epochs")
    train.add_argument("--grid-size", type=int, help="Inducing points per grid dimension")
    train.add_argument("--grid-margin", type=float, help="Grid margin as a share of the range")
    train.add_argument("--optimizer", choices=["adam", "sgd"], help="Optimizer for GP phases")
    train.add_argument(
        "--pretrain-optimizer", choices=["adam", "sgd"], help="Pretraining optimizer"
    )
    train.add_argument("--pretrain-lr", type=float, help="Pretraining learning rate")
    train.add_argument("--momentum", type=float, help="SGD momentum")
    train.add_argument("--decay-every", type=int, help="Epochs between learning-rate decays")
    train.add_argument("--decay-gamma", type=float, help="Learning-rate decay factor")
    train.add_argument("--hidden", type=_int_list, help="Hidden widths, e.g. 64,32")
    train.add_argument("--feature-dim", type=int, help="Network output width Q")
    train.add_argument("--gp-input-dim", type=int, choices=[1, 2, 3], help="Features per GP")
    train.add_argument("--predict-samples", type=int, help="Posterior draws for prediction")
    train.add_argument("--patience", type=int, help="Early-stopping patience in epochs (0 off)")
    train.add_argument("--train-fraction", type=float, help="Share of training data to use")

    evaluate = sub.add_parser("eval", parents=[common], help="Metrics of a checkpoint")
    _data_flags(evaluate)
    evaluate.add_argument("--checkpoint", required=True, help="Checkpoint path")
    evaluate.add_argument(
        "--samples", dest="eval_samples", type=int, default=16, help="Posterior draws (0 = mean)"
    )

    bench = sub.add_parser("bench", parents=[common], help="Runtime of sampling and KL")
    bench.add_argument("--sizes", type=_int_list, default=[256, 1024, 4096, 16384])
    bench.add_argument("--dims", type=_int_list, default=[2, 3], help="Grid dimensions D")
    bench.add_argument("--repeats", type=int, default=5, help="Timed repetitions (min 5)")
    bench.add_argument("--out", help="CSV output path (default <SVDKL_OUTPUT_DIR>/bench.csv)")

    covdump = sub.add_parser("covdump", parents=[common], help="Induced covariance dump")
    _data_flags(covdump)
    covdump.add_argument("--checkpoint", required=True, help="Checkpoint path")
    covdump.add_argument("--gp", type=_int_list, default=[0], help="GP indices, e.g. 0,1")
    covdump.add_argument("--max-points", type=int, default=0, help="Subsample size (0 = all)")
    covdump.add_argument("--out", help="Output directory (default SVDKL_OUTPUT_DIR)")
    return parser


def _cli_config(args: argparse.Namespace, env: Config) -> CliConfig:
    file_values: Dict[str, Any] = {"threads": env.threads}
    file_values.update(load_config_file(args.config))
    flags = {key: getattr(args, dest) for dest, key in _OPTION_FLAGS.items() if hasattr(args, dest)}
    return CliConfig.merge(file_values, flags)


def _run(args: argparse.Namespace) -> int:
    env = Config.from_env()
    setup_logging(args.log_level or env.log_level)
    logger = get_logger(__name__)
    cli = _cli_config(args, env)
    out = Path(getattr(args, "out", None) or env.output_dir)
    logger.info(
        "Running %s with seed=%s threads=%s", args.command, cli.train.seed, cli.train.threads
    )

    if args.command == "train":
        from src.modes.train import run_train

        run_train(cli, out)
    elif args.command == "eval":
        from src.modes.evaluate import run_eval

        run_eval(cli, Path(args.checkpoint), args.eval_samples)
    elif args.command == "bench":
        from src.modes.bench import run_bench

        target = out if out.suffix == ".csv" else out / "bench.csv"
        run_bench(target, args.sizes, args.dims, args.repeats, env.dense_bench_max, cli.train.seed)
    elif args.command == "covdump":
        from src.modes.covdump import run_covdump

        run_covdump(
            cli, Path(args.checkpoint), args.gp, out, env.covdump_cap, args.max_points
        )
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """Run one command; package errors map to exit codes 1 (config), 2 (data), 3 (numerical)."""

    setup_logging()
    logger = get_logger(__name__)
    try:
        args = build_parser().parse_args(argv)
        return _run(args)
    except ConfigError as exc:
        logger.error("Configuration error: %s", exc)
        return EXIT_CONFIG
    except DataError as exc:
        logger.error("Data error: %s", exc)
        return EXIT_DATA
    except (NumericalError, OutOfGridError) as exc:
        logger.error("Numerical failure: %s", exc)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        setup_logging()
        get_logger(__name__).info("Shutdown requested. Exiting.")
