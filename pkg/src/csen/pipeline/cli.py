"""Command-line interface.

Subcommands: synth, train, classify, evaluate, benchmark, inspect. Every
subcommand accepts ``--config``, ``--seed``, ``--threads`` and ``--output``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric error.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from dataclasses import replace

import numpy as np
from threadpoolctl import threadpool_limits

from ..config import ExperimentConfig, load_config
from ..data import generate_synthetic, load_dataset, save_dataset
from ..dictionary import build_layout
from ..errors import CsenError, NumericError, UsageError
from ..evaluation import METHODS, benchmark_inference, fit_method, stratified_kfold, run_experiment
from .persistence import load_model, save_model
from .report import REPORT_FORMATS, render_report

log = logging.getLogger("csen")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _global_flags(p: argparse.ArgumentParser, suppress: bool = False) -> None:
    # The flags are accepted before or after the subcommand. Subcommand copies
    # default to SUPPRESS so they do not overwrite a value given up front.
    def d(value):
        return argparse.SUPPRESS if suppress else value
    p.add_argument("--config", default=d(None),
                   help="flat key-value YAML file with ExperimentConfig fields")
    p.add_argument("--seed", type=int, default=d(None),
                   help="master seed (overrides the config file)")
    p.add_argument("--threads", type=int, default=d(1),
                   help="cross-validation folds run concurrently; numeric kernels stay "
                        "single-threaded")
    p.add_argument("--output", default=d("-"), help="output path ('-' for stdout)")
    p.add_argument("-v", "--verbose", action="store_true", default=d(False))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    parser = _Parser(prog="csen", description="Convolutional sparse support estimation "
                     "classifiers on precomputed feature vectors.")
    _global_flags(parser)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--per-class", type=int, default=200)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--separation", type=float, default=6.0)
    p.add_argument("--format", choices=("csv", "binary"), default="csv")

    def data_args(p):
        p.add_argument("--data", required=True, help="dataset (CSV or packed binary)")
        p.add_argument("--data-format", choices=("csv", "binary"))

    p = sub.add_parser("train", parents=[common], help="fit one method, write a model file")
    data_args(p)
    p.add_argument("--method", choices=METHODS)

    p = sub.add_parser("classify", parents=[common], help="predict with a saved model")
    data_args(p)
    p.add_argument("--model", required=True)

    p = sub.add_parser("evaluate", parents=[common], help="stratified k-fold evaluation")
    data_args(p)
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--format", choices=REPORT_FORMATS, default="text")

    p = sub.add_parser("benchmark", parents=[common], help="inference timing per method")
    data_args(p)
    p.add_argument("--methods", default="csen1,csen2,reconnet,mlp,crc",
                   help="comma-separated methods")

    p = sub.add_parser("inspect", parents=[common],
                       help="print shapes and parameter counts of a model")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--model", help="saved model file")
    g.add_argument("--method", choices=("csen1", "csen2", "reconnet", "mlp"),
                   help="describe a freshly built network instead")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--atoms-per-class", type=int, default=625)
    p.add_argument("--input-dim", type=int, default=1024)
    return parser


def _config(args) -> ExperimentConfig:
    if args.threads < 1:
        raise UsageError("--threads must be >= 1")
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "method", None) and args.command in ("train", "evaluate"):
        cfg = replace(cfg, method=args.method)
    return cfg


def _emit(args, text: str) -> None:
    if args.output == "-":
        sys.stdout.write(text)
    else:
        try:
            with open(args.output, "w") as fh:
                fh.write(text)
        except OSError as exc:
            raise UsageError(f"cannot write {args.output}: {exc}") from None


def cmd_synth(args, cfg):
    ds = generate_synthetic(args.classes, args.per_class, args.dim, args.separation, cfg.seed)
    if args.output == "-":
        raise UsageError("synth needs --output PATH")
    save_dataset(ds, args.output, args.format)


def cmd_train(args, cfg):
    if args.output == "-":
        raise UsageError("train needs --output PATH for the model file")
    ds = load_dataset(args.data, args.data_format)
    art = fit_method(ds, cfg)
    save_model(art, args.output)
    log.info("wrote %s model to %s", cfg.method, args.output)


def cmd_classify(args, cfg):
    art = load_model(args.model)
    ds = load_dataset(args.data, args.data_format)
    pred, scores = art.predict(ds.features)
    c = scores.shape[1]
    buf_rows = [["index", "predicted", *[f"score_{i}" for i in range(c)]]]
    for i, (p, s) in enumerate(zip(pred, scores)):
        buf_rows.append([i, art.class_names[p], *(repr(float(v)) for v in s)])
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(buf_rows)
    _emit(args, buf.getvalue())


def cmd_evaluate(args, cfg):
    ds = load_dataset(args.data, args.data_format)
    report = run_experiment(ds, cfg, threads=args.threads)
    _emit(args, render_report(report, args.format))


def cmd_benchmark(args, cfg):
    ds = load_dataset(args.data, args.data_format)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise UsageError(f"unknown methods {bad}; choose from {METHODS}")
    plan = stratified_kfold(ds.labels, cfg.k_folds, cfg.seed)
    train, test = ds.subset(plan.train[0]), ds.subset(plan.test[0])
    rows = benchmark_inference(train, test, methods, cfg)
    out = [f"{'method':<10}{'seconds':>12}{'samples':>10}{'ms/sample':>12}"]
    for r in rows:
        per = 1e3 * r.seconds / r.samples if r.samples else 0.0
        out.append(f"{r.method:<10}{r.seconds:>12.4f}{r.samples:>10d}{per:>12.4f}")
    _emit(args, "\n".join(out) + "\n")


def cmd_inspect(args, cfg):
    out = []
    if args.model:
        art = load_model(args.model)
        out.append(f"method: {art.method}")
        out.append(f"classes: {', '.join(art.class_names)}")
        out.append(f"standardizer: d={art.standardizer.dim}")
        out.append(f"projection A: {art.projection.m} x {art.projection.d}")
        if art.dictionary is not None:
            d = art.dictionary
            lay = d.layout
            out.append(f"dictionary Phi: {d.Phi.shape[0]} x {d.Phi.shape[1]}")
            out.append(f"dictionary D: {d.m} x {d.n}")
            out.append(f"denoiser B: {d.B.shape[0]} x {d.B.shape[1]}")
            out.append(f"layout: {lay.c} classes x {lay.atoms_per_class} atoms, "
                       f"blocks {lay.block_rows}x{lay.block_cols}, "
                       f"plane {lay.plane_rows}x{lay.plane_cols}")
        if art.knn_X is not None:
            out.append(f"k-NN reference set: {art.knn_X.shape[0]} x {art.knn_X.shape[1]}")
        net = art.network
    else:
        if args.method == "mlp":
            from ..network import build_mlp
            net = build_mlp(args.input_dim, cfg.mlp_hidden, args.classes)
        else:
            from ..network.model import BUILDERS
            net = BUILDERS[args.method](build_layout(args.classes, args.atoms_per_class))
        out.append(f"method: {args.method}")
    if net is not None:
        out.append(f"network: {net.name}, input {net.input_shape}")
        for kind, kernel, shape, count in net.describe():
            out.append(f"  {kind:<18} kernel {kernel[0]}x{kernel[1]:<4} -> {shape}  params {count}")
        out.append(f"trainable parameters: {net.param_count():,}")
    _emit(args, "\n".join(out) + "\n")


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "classify": cmd_classify,
    "evaluate": cmd_evaluate,
    "benchmark": cmd_benchmark,
    "inspect": cmd_inspect,
}


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return 0 if not exc.code else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        with threadpool_limits(limits=1):
            COMMANDS[args.command](args, cfg)
    except CsenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return NumericError.exit_code
    return 0


def main():
    sys.exit(cli_main())
