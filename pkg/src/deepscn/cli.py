"""Command-line interface.

Subcommands: ``train``, ``eval``, ``experiment``, ``gen-data``.
Exit codes: 0 ok, 2 I/O or file-content error, 3 dimension mismatch,
4 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .builder import build, config_from_json
from .data import gen_benchmark, gen_rotated_glyphs, load_csv, save_csv
from .exceptions import (
    ConfigError,
    DimensionError,
    InvalidInputError,
    ModelFormatError,
)
from .experiments import run_experiment, spec_from_json
from .metrics import ppa, rmse
from .model import deserialize, predict, serialize

EXIT_OK = 0
EXIT_IO = 2
EXIT_DIMENSION = 3
EXIT_USAGE = 4


class _Parser(argparse.ArgumentParser):
    """argparse parser whose usage errors exit with code 4."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="deepscn",
                     description="Train, evaluate, and benchmark deep "
                                 "stochastic configuration networks.")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p_train = sub.add_parser("train", help="build a model from a config and CSV data")
    p_train.add_argument("--config", required=True, help="build configuration JSON")
    p_train.add_argument("--data", required=True, help="training data CSV")
    p_train.add_argument("--out", required=True, help="output model file")
    p_train.add_argument("--seed", type=int, default=None,
                         help="override the configured seed")
    p_train.set_defaults(func=_cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a model file on CSV data")
    p_eval.add_argument("model", help="serialized model file")
    p_eval.add_argument("--data", required=True, help="evaluation data CSV")
    p_eval.add_argument("--ppa-threshold", type=float, default=None,
                        help="report the share of |error| strictly below this")
    p_eval.set_defaults(func=_cmd_eval)

    p_exp = sub.add_parser("experiment", help="run an experiment spec")
    p_exp.add_argument("spec", help="experiment spec JSON")
    p_exp.add_argument("--out", required=True, help="output directory for CSVs")
    p_exp.set_defaults(func=_cmd_experiment)

    p_gen = sub.add_parser("gen-data", help="generate a synthetic dataset CSV")
    p_gen.add_argument("kind", choices=("benchmark", "glyphs"))
    p_gen.add_argument("--n", type=int, required=True, help="sample count")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True, help="output CSV path")
    p_gen.set_defaults(func=_cmd_gen_data)

    return parser


def _print_json(doc: dict) -> None:
    print(json.dumps(doc, sort_keys=True))


def _cmd_train(args) -> int:
    config = config_from_json(Path(args.config).read_text(encoding="utf-8"))
    if args.seed is not None:
        config = config_from_json(json.dumps(
            {**config.to_dict(), "seed": args.seed}))
    dataset = load_csv(args.data)
    result = build(dataset, config)
    Path(args.out).write_bytes(serialize(result.model))
    model = result.model
    train_rmse = rmse(predict(model, dataset.inputs), dataset.targets)
    _print_json({
        "model_path": str(args.out),
        "total_nodes": model.total_nodes,
        "nodes_per_layer": model.layer_widths,
        "final_train_rmse": train_rmse,
        "final_residual_norm": (result.final_residual_norm
                                if result.trace else 0.0),
        "stalled": result.stalled,
    })
    return EXIT_OK


def _cmd_eval(args) -> int:
    model = deserialize(Path(args.model).read_bytes())
    dataset = load_csv(args.data)
    if dataset.n_outputs != model.output_dim:
        raise DimensionError(
            f"data has {dataset.n_outputs} targets, model expects "
            f"{model.output_dim}"
        )
    pred = predict(model, dataset.inputs)
    report = {"rmse": rmse(pred, dataset.targets),
              "n_samples": dataset.n_samples}
    if args.ppa_threshold is not None:
        if model.output_dim != 1:
            print("error: ppa requires a scalar target", file=sys.stderr)
            return EXIT_USAGE
        report["ppa"] = ppa(pred, dataset.targets, args.ppa_threshold)
    _print_json(report)
    return EXIT_OK


def _cmd_experiment(args) -> int:
    spec = spec_from_json(Path(args.spec).read_text(encoding="utf-8"))
    written = run_experiment(spec, args.out)
    _print_json({
        "experiment": spec.name,
        "trials": spec.trials,
        "files": [str(p) for p in written],
    })
    return EXIT_OK


def _cmd_gen_data(args) -> int:
    if args.n < 1:
        print("error: --n must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    if args.kind == "benchmark":
        dataset = gen_benchmark(args.n, seed=args.seed)
    else:
        dataset = gen_rotated_glyphs(args.n, seed=args.seed)
    save_csv(dataset, args.out)
    _print_json({"path": str(args.out), "n_samples": dataset.n_samples,
                 "n_features": dataset.n_features,
                 "n_outputs": dataset.n_outputs})
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DimensionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIMENSION
    except (ModelFormatError, InvalidInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
