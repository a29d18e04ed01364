"""Command-line entry points.

Exit codes: 0 success, 1 usage problems, 2 unreadable or malformed data,
3 training divergence.
"""

import argparse
import json
import math
import sys
from pathlib import Path

from rbmdrop.checkpoint import load_checkpoint
from rbmdrop.errors import DataFormatError, DivergenceError
from rbmdrop.experiment import (
    ARCHITECTURES,
    FIGURES,
    ExperimentConfig,
    compare_runs,
    emit_figure_data,
    filter_grid,
    run_experiment,
)
from rbmdrop.export import export_weight_filters
from rbmdrop.regularizers import kind_from_name

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3

REGULARIZER_NAMES = ("none", "l2", "dropout", "dropconnect", "edropout")

# defaults applied after a --config file (if any) has had its say
_TRAIN_DEFAULTS = {
    "dataset": None,
    "arch": None,
    "reg": None,
    "out": None,
    "p": 0.5,
    "l2": 0.005,
    "epochs": 50,
    "batch_size": 256,
    "reps": 10,
    "seed": 42,
    "cd_steps": 1,
    "binarize": False,
    "eval_mode": "mean_field",
    "data_root": None,
}


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to this tool's exit code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="rbmdrop",
        description="Train and compare RBMs under different regularization schemes.",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    train = sub.add_parser(
        "train",
        help="train one architecture/regularizer pair over several repetitions",
    )
    train.add_argument("--dataset", help="dataset name under the data root, or a directory")
    train.add_argument("--arch", choices=sorted(ARCHITECTURES), help="named architecture")
    train.add_argument("--reg", choices=REGULARIZER_NAMES, help="regularization scheme")
    train.add_argument("--p", type=float, help="drop probability (default 0.5)")
    train.add_argument("--l2", type=float, help="weight decay coefficient (default 0.005)")
    train.add_argument("--epochs", type=int, help="training epochs (default 50)")
    train.add_argument("--batch-size", type=int, help="mini-batch size (default 256)")
    train.add_argument("--reps", type=int, help="independent repetitions (default 10)")
    train.add_argument("--seed", type=int, help="base seed; repetition r uses seed+r (default 42)")
    train.add_argument("--cd-steps", type=int, help="Gibbs steps per update (default 1)")
    train.add_argument("--out", help="output directory for run artifacts")
    train.add_argument(
        "--binarize",
        action="store_const",
        const=True,
        help="threshold pixels at 0.5 instead of keeping them continuous",
    )
    train.add_argument(
        "--eval-mode",
        choices=("mean_field", "sample"),
        help="reconstruction used for test metrics (default mean_field)",
    )
    train.add_argument("--data-root", help="directory containing named datasets")
    train.add_argument("--config", help="JSON file supplying any of the above; flags win")
    train.add_argument("--quiet", action="store_true", help="suppress progress output")

    compare = sub.add_parser(
        "compare", help="paired significance test between two finished runs"
    )
    compare.add_argument("--metric", choices=("mse", "ssim"), default="mse")
    compare.add_argument("dir_a")
    compare.add_argument("dir_b")

    figures = sub.add_parser(
        "export-figures", help="write a run's figure data as CSV files"
    )
    figures.add_argument("run_dir")
    figures.add_argument("--out-dir", help="where to put the CSVs (default RUN_DIR/figures)")

    filters = sub.add_parser(
        "export-filters", help="render a checkpoint's hidden-unit filters to PGM"
    )
    filters.add_argument("checkpoint")
    filters.add_argument("--out", help="output image (default: alongside the checkpoint)")
    filters.add_argument(
        "--shape",
        help="visible layer as HxW when it is not square (e.g. 28x28)",
    )
    filters.add_argument("--max-filters", type=int, default=100)

    return parser


def _load_config_file(path: str, parser: argparse.ArgumentParser) -> dict:
    try:
        loaded = json.loads(Path(path).read_text())
    except OSError as exc:
        parser.error(f"cannot read config {path}: {exc}")
    except json.JSONDecodeError as exc:
        parser.error(f"config {path} is not valid JSON: {exc}")
    if not isinstance(loaded, dict):
        parser.error(f"config {path} must hold a JSON object")
    unknown = set(loaded) - set(_TRAIN_DEFAULTS)
    if unknown:
        parser.error(f"config {path} has unknown keys: {', '.join(sorted(unknown))}")
    return loaded


def _resolve_train_options(args, parser) -> dict:
    from_file = _load_config_file(args.config, parser) if args.config else {}
    options = {}
    for key, fallback in _TRAIN_DEFAULTS.items():
        cli_value = getattr(args, key)
        if cli_value is not None:
            options[key] = cli_value
        elif key in from_file:
            options[key] = from_file[key]
        else:
            options[key] = fallback
    for key in ("dataset", "arch", "reg", "out"):
        if options[key] is None:
            parser.error(f"--{key} is required (flag or config file)")
    if options["arch"] not in ARCHITECTURES:
        parser.error(f"unknown architecture {options['arch']!r}")
    if options["reg"] not in REGULARIZER_NAMES:
        parser.error(f"unknown regularizer {options['reg']!r}")
    if options["eval_mode"] not in ("mean_field", "sample"):
        parser.error(f"unknown eval mode {options['eval_mode']!r}")
    return options


def _cmd_train(args, parser) -> int:
    options = _resolve_train_options(args, parser)
    try:
        kind = kind_from_name(options["reg"], p=options["p"], l2_coeff=options["l2"])
        config = ExperimentConfig(
            dataset=options["dataset"],
            arch=options["arch"],
            regularizer=kind,
            out_dir=Path(options["out"]),
            epochs=options["epochs"],
            batch_size=options["batch_size"],
            repetitions=options["reps"],
            seed=options["seed"],
            cd_steps=options["cd_steps"],
            binarize=bool(options["binarize"]),
            eval_mode=options["eval_mode"],
            data_root=options["data_root"],
        )
    except ValueError as exc:
        parser.error(str(exc))
    summary = run_experiment(config, log=None if args.quiet else print)
    mse = summary["test_mse"]
    sim = summary["test_ssim"]
    print(
        f"{config.arch}/{kind.name}: test_mse {mse['mean']:.4f} ± {mse['std']:.4f}, "
        f"test_ssim {sim['mean']:.4f} ± {sim['std']:.4f} "
        f"over {summary['repetitions']} repetition(s) -> {config.out_dir}"
    )
    return EXIT_OK


def format_comparison(report) -> str:
    test = report.test
    lines = [
        f"metric: {report.metric}",
        f"A {report.dir_a}: mean {report.mean_a:.6f} ± {report.std_a:.6f} "
        f"(n={len(report.values_a)})",
        f"B {report.dir_b}: mean {report.mean_b:.6f} ± {report.std_b:.6f} "
        f"(n={len(report.values_b)})",
        f"wilcoxon: statistic {test.statistic:g}, p {test.p_value:.6g} "
        f"({test.method}, n={test.n_effective}), "
        f"significant at 0.05: {'yes' if test.significant else 'no'}",
    ]
    return "\n".join(lines)


def _cmd_compare(args) -> int:
    report = compare_runs(args.dir_a, args.dir_b, args.metric)
    print(format_comparison(report))
    return EXIT_OK


def _cmd_export_figures(args) -> int:
    out_dir = Path(args.out_dir) if args.out_dir else None
    for which in FIGURES:
        out_path = out_dir / f"{which}.csv" if out_dir else None
        written = emit_figure_data(args.run_dir, which, out_path)
        print(written)
    return EXIT_OK


def _parse_shape(text: str):
    try:
        h, w = (int(part) for part in text.lower().split("x"))
    except ValueError:
        raise ValueError(f"--shape expects HxW, got {text!r}") from None
    if h < 1 or w < 1:
        raise ValueError("--shape dimensions must be positive")
    return h, w


def _cmd_export_filters(args, parser) -> int:
    params, _, _ = load_checkpoint(args.checkpoint)
    if args.shape:
        try:
            shape = _parse_shape(args.shape)
        except ValueError as exc:
            parser.error(str(exc))
    else:
        side = math.isqrt(params.m)
        if side * side != params.m:
            raise DataFormatError(
                f"{args.checkpoint}: visible layer of {params.m} units is not "
                f"square; pass --shape HxW"
            )
        shape = (side, side)
    out = Path(args.out) if args.out else Path(args.checkpoint).with_suffix(".pgm")
    grid = filter_grid(params.n, args.max_filters)
    count = export_weight_filters(params.weights, shape, out, grid)
    print(f"{out} ({count} filters)")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        if args.command == "train":
            return _cmd_train(args, parser)
        if args.command == "compare":
            return _cmd_compare(args)
        if args.command == "export-figures":
            return _cmd_export_figures(args)
        if args.command == "export-filters":
            return _cmd_export_filters(args, parser)
    except (DataFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
