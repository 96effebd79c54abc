"""Command-line entry point: ``svmap {train,predict,cv,bench,inspect}``.

Options come from three layers: built-in defaults, an optional flat JSON
config file (``--config``; keys mirror the long flag names), and explicit
flags, later layers winning.  Exit codes: 0 success, 1 usage error, 2 data
error, 3 training failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dataset as ds
from .distributed import DistributedConfig, history_csv, history_jsonl, train_distributed
from .evaluation import cross_validate, speedup_benchmark
from .kernel import KernelSpec
from .solver import (
    ModelFormatError,
    TrainConfig,
    TrainingError,
    decision_values,
    read_model,
    write_model,
)

log = logging.getLogger("svmap")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TRAIN = 0, 1, 2, 3

DEFAULTS = {
    "input": None,
    "format": "sparse",
    "label_column": -1,
    "positive": None,
    "L": 10,
    "C": 1.0,
    "kernel": "linear",
    "gamma": 1.0,
    "kkt_tol": 1e-3,
    "conv_tol": 1e-6,
    "max_iterations": 10,
    "seed": 0,
    "workers": None,  # resolved to the CPU count
    "out": None,
    "nodes": "1,2,4,6,8,10",
    "folds": 10,
    "repeats": 5,
    "scale": False,
    "subsample": None,
    "synthetic": None,
    "final": "select",
    "warm_start": True,
    "model": None,
    "decision_values": False,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunSpec:
    subcommand: str
    options: dict

    def __getattr__(self, name):
        try:
            return self.options[name]
        except KeyError:
            raise AttributeError(name) from None

    def train_config(self) -> TrainConfig:
        return TrainConfig(C=float(self.C), kernel=KernelSpec(self.kernel, float(self.gamma)),
                           kkt_tol=float(self.kkt_tol))

    def distributed_config(self) -> DistributedConfig:
        try:
            return DistributedConfig(
                L=int(self.L),
                train=self.train_config(),
                conv_tol=float(self.conv_tol),
                max_iterations=int(self.max_iterations),
                seed=int(self.seed),
                workers=int(self.workers),
                final=self.final,
                warm_start=bool(self.warm_start),
            )
        except (TypeError, ValueError) as exc:
            raise UsageError(str(exc)) from None


def _add_data_flags(p: argparse.ArgumentParser, required_input: bool = True) -> None:
    p.add_argument("--input", help="data file" + ("" if required_input else " (optional)"))
    p.add_argument("--format", choices=["sparse", "csv"], help="input format (default sparse)")
    p.add_argument("--label-column", type=int, dest="label_column",
                   help="CSV label column, negative counts from the end (default -1)")
    p.add_argument("--positive", help="raw label mapped to +1, all others to -1")
    p.add_argument("--scale", action=argparse.BooleanOptionalAction,
                   help="min-max scale features to [0, 1] (default off)")
    p.add_argument("--subsample", type=int, help="stratified random subset of this size")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--L", type=int, dest="L", help="partition count (default 10)")
    p.add_argument("--C", type=float, dest="C", help="soft-margin cost (default 1.0)")
    p.add_argument("--kernel", choices=["linear", "rbf"], help="kernel (default linear)")
    p.add_argument("--gamma", type=float, help="rbf width, ignored for linear (default 1.0)")
    p.add_argument("--kkt-tol", type=float, dest="kkt_tol", help="solver tolerance (default 1e-3)")
    p.add_argument("--conv-tol", type=float, dest="conv_tol",
                   help="stop when the selected risk moves by at most this (default 1e-6)")
    p.add_argument("--max-iterations", type=int, dest="max_iterations",
                   help="iteration cap (default 10)")
    p.add_argument("--seed", type=int, help="seed for every random choice (default 0)")
    p.add_argument("--workers", type=int, help="map-task processes (default: CPU count)")
    p.add_argument("--final", choices=["select", "retrain"],
                   help="deployed model: best node hypothesis or retrain on global SVs")
    p.add_argument("--warm-start", action=argparse.BooleanOptionalAction, dest="warm_start",
                   help="seed node solvers with their previous coefficients (default on)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="svmap", description="Iterative map/reduce SVM training.")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train and write model + history")
    _add_data_flags(p)
    _add_train_flags(p)
    p.add_argument("--out", help="output directory")
    p.add_argument("--config", help="JSON file with default flag values")

    p = sub.add_parser("predict", help="predict labels with a saved model")
    _add_data_flags(p)
    p.add_argument("--model", help="model file written by train")
    p.add_argument("--out", help="output file (default stdout)")
    p.add_argument("--decision-values", action="store_true", dest="decision_values",
                   default=None, help="also write f(x) next to each label")
    p.add_argument("--config", help="JSON file with default flag values")

    p = sub.add_parser("cv", help="k-fold cross-validation per iteration")
    _add_data_flags(p)
    _add_train_flags(p)
    p.add_argument("--folds", type=int, help="number of folds (default 10)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--config", help="JSON file with default flag values")

    p = sub.add_parser("bench", help="speedup over partition counts")
    _add_data_flags(p, required_input=False)
    _add_train_flags(p)
    p.add_argument("--nodes", help="comma-separated L values, must include 1")
    p.add_argument("--repeats", type=int, help="runs averaged per L (default 5)")
    p.add_argument("--synthetic", type=int, help="use a synthetic dataset of this size")
    p.add_argument("--out", help="output directory")
    p.add_argument("--config", help="JSON file with default flag values")

    p = sub.add_parser("inspect", help="summarize a dataset or model")
    _add_data_flags(p, required_input=False)
    p.add_argument("--model", help="model file")
    p.add_argument("--config", help="JSON file with default flag values")

    for sp in sub.choices.values():
        for action in sp._actions:
            if action.dest != "help":
                action.default = argparse.SUPPRESS
    return parser


def resolve(argv: list[str] | None = None) -> RunSpec:
    """Parse ``argv`` and merge defaults, config file and flags."""
    parser = build_parser()
    ns = vars(parser.parse_args(argv))
    sub = ns.pop("subcommand")
    options = dict(DEFAULTS)
    config_path = ns.pop("config", None)
    if config_path is not None:
        try:
            loaded = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise UsageError(f"config file not found: {config_path}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {config_path} is not valid JSON: {exc}") from None
        if not isinstance(loaded, dict):
            raise UsageError(f"config file {config_path} must hold a JSON object")
        for key, value in loaded.items():
            name = key.lstrip("-").replace("-", "_")
            if name not in DEFAULTS:
                raise UsageError(f"unknown config key {key!r}")
            options[name] = value
    options.update(ns)
    if options["workers"] is None:
        options["workers"] = os.cpu_count() or 1
    return RunSpec(sub, options)


# ------------------------------------------------------------------ commands


def _load_dataset(spec: RunSpec, need_labels: bool = True) -> ds.Dataset:
    if spec.input is None:
        raise UsageError("--input is required")
    path = Path(spec.input)
    if not path.is_file():
        raise FileNotFoundError(f"input file not found: {path}")
    data = ds.load(path, spec.format, int(spec.label_column), spec.positive)
    if need_labels and data.labels is None:
        raise ds.DataError(
            "labels are not all -1/+1; choose the positive class with --positive"
        )
    if spec.scale:
        data = ds.minmax_scale(data)
    if spec.subsample:
        data = ds.stratified_subsample(data, int(spec.subsample), int(spec.seed))
    return data


def _out_dir(spec: RunSpec) -> Path:
    out = Path(spec.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train(spec: RunSpec) -> int:
    data = _load_dataset(spec)
    result = train_distributed(data, spec.distributed_config())
    out = _out_dir(spec)
    write_model(result.model, out / "model.txt")
    (out / "history.jsonl").write_text(history_jsonl(result.history), encoding="utf-8")
    (out / "history.csv").write_text(history_csv(result.history), encoding="utf-8")
    print(f"trained on {ds.describe(data)}: {result.iterations} iterations, "
          f"stop={result.stop_reason}, risk={result.history[-1].best_risk:.6f}, "
          f"svs={result.model.n_sv} -> {out}")
    return EXIT_OK


def cmd_predict(spec: RunSpec) -> int:
    if spec.model is None:
        raise UsageError("--model is required")
    model = read_model(spec.model)
    data = _load_dataset(spec, need_labels=False)
    X = data.X
    if data.n and X.shape[1] != model.dim:
        if spec.format == "sparse" and X.shape[1] < model.dim:
            X = np.hstack([X, np.zeros((data.n, model.dim - X.shape[1]))])
        else:
            raise ds.DataError(f"input has {X.shape[1]} features, model expects {model.dim}")
    f = decision_values(model, X) if data.n else np.zeros(0)
    lines = []
    for v in f:
        label = "+1" if v >= 0 else "-1"
        lines.append(f"{label} {float(v)!r}" if spec.decision_values else label)
    text = "".join(line + "\n" for line in lines)
    if spec.out:
        Path(spec.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_cv(spec: RunSpec) -> int:
    data = _load_dataset(spec)
    report = cross_validate(data, spec.distributed_config(), int(spec.folds))
    out = _out_dir(spec)
    (out / "cv_report.csv").write_text(report.to_csv(), encoding="utf-8")
    sys.stdout.write(report.to_csv())
    return EXIT_OK


def cmd_bench(spec: RunSpec) -> int:
    if spec.input is not None:
        data = _load_dataset(spec)
    else:
        data = ds.make_synthetic(int(spec.synthetic or 5000), seed=int(spec.seed))
    try:
        nodes = [int(v) for v in str(spec.nodes).split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--nodes must be comma-separated integers, got {spec.nodes!r}") from None
    report = speedup_benchmark(data, nodes, int(spec.repeats), spec.distributed_config())
    out = _out_dir(spec)
    (out / "speedup.csv").write_text(report.to_csv(), encoding="utf-8")
    sys.stdout.write(report.to_csv())
    return EXIT_OK


def cmd_inspect(spec: RunSpec) -> int:
    if spec.model is None and spec.input is None:
        raise UsageError("give --model and/or --input")
    if spec.model is not None:
        m = read_model(spec.model)
        print(f"model: kernel={m.kernel.kind} gamma={m.kernel.gamma} dim={m.dim} "
              f"svs={m.n_sv} bias={m.bias!r} objective={m.objective!r} converged={m.converged}")
    if spec.input is not None:
        print(f"data: {ds.describe(_load_dataset(spec, need_labels=False))}")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "predict": cmd_predict,
    "cv": cmd_cv,
    "bench": cmd_bench,
    "inspect": cmd_inspect,
}


def _configure_logging() -> None:
    level = os.environ.get("SVMAP_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    try:
        spec = resolve(argv)
        return COMMANDS[spec.subcommand](spec)
    except UsageError as exc:
        print(f"svmap: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingError as exc:
        print(f"svmap: training failed: {exc}", file=sys.stderr)
        return EXIT_TRAIN
    except (ds.DataError, ModelFormatError, FileNotFoundError, ValueError) as exc:
        print(f"svmap: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
