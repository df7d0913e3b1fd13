"""Command-line interface: ``lpmkl <command> [--flags]``.

Exit codes: 0 success, 1 validation or I/O error, 2 non-convergence (the
best iterate is still written).
"""
from __future__ import annotations

import argparse
import csv
import io as _io
import logging
import math
import sys
import warnings
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import bounds, experiments, kernels
from . import io as lio
from ._jit import backend_name
from .errors import ConvergenceError, LpMklError
from .mkl import MODES, MklConfig, predict, train

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad flags; 2 is reserved for non-convergence here."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def number(text: str) -> float:
    """Parse a real; accepts ``inf`` and fractions such as ``4/3``."""
    t = text.strip().lower()
    if t in ("inf", "+inf", "infinity"):
        return math.inf
    try:
        return float(Fraction(t)) if "/" in t else float(t)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def _emit(text: str, out: str | None) -> None:
    if out:
        lio.atomic_write(out, text)
    else:
        sys.stdout.write(text)


def _csv(rows, header=None) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _require_files(paths, flag):
    for p in paths:
        if not Path(p).is_file():
            raise UsageError(f"{flag} {p}: file not found")


# ----------------------------------------------------------------- commands

def cmd_train(args) -> int:
    _require_files(args.kernels, "--kernels")
    _require_files([args.labels], "--labels")
    norm = kernels.NORMALIZERS[args.normalize]
    names = [Path(p).stem for p in args.kernels]
    stack = kernels.KernelStack([norm(lio.read_kernel(p)).renamed(nm)
                                 for p, nm in zip(args.kernels, names)])
    y = lio.read_labels(args.labels)
    if len(y) != stack.n:
        raise UsageError(f"--labels {args.labels}: {len(y)} labels but kernels have n={stack.n}")
    config = MklConfig(p=None if args.q_block is not None else args.p, q_block=args.q_block,
                       C=args.C, mode=args.mode, epsilon_svm=args.epsilon_svm,
                       epsilon_mkl=args.epsilon_mkl, max_outer=args.max_outer,
                       callback_interval=args.callback_interval)
    code = EXIT_OK
    try:
        model = train(stack, y, config)
    except ConvergenceError as exc:
        if exc.best is None:
            raise
        print(f"warning: {exc}", file=sys.stderr)
        model, code = exc.best, EXIT_NONCONVERGED
    lio.write_model(args.out, model, kernel_names=names)
    report = model.report.to_dict()
    report["config"] = config.to_dict()
    report["kernels"] = list(map(str, args.kernels))
    lio.write_json(args.report or f"{args.out}.report.json", report)
    print(f"gap {model.report.final_gap:.3e} after {model.report.outer_iterations} outer "
          f"iterations; theta = {' '.join('%.4g' % t for t in model.theta)}")
    return code


def cmd_predict(args) -> int:
    _require_files([args.model], "--model")
    model, names = lio.read_model(args.model)
    M = len(model.theta)
    if names is None:
        names = [f"#{m}" for m in range(M)]
    if len(args.kernels) != M:
        have = {Path(p).stem for p in args.kernels}
        missing = [nm for nm in names if nm not in have] or names[len(args.kernels):]
        raise UsageError(f"model uses {M} kernels but {len(args.kernels)} row files were given; "
                         f"missing test rows for kernel {missing[0]!r}")
    _require_files(args.kernels, "--kernels")
    rows = [lio.read_kernel_rows(p) for p in args.kernels]
    by_name = {Path(p).stem: r for p, (r, _) in zip(args.kernels, rows)}
    if set(by_name) == set(names):
        mats = [by_name[nm] for nm in names]
    else:
        mats = [r for r, _ in rows]
    shapes = {m.shape for m in mats}
    if len(shapes) != 1:
        raise UsageError(f"test kernel rows disagree in shape: {sorted(shapes)}")
    f = predict(model, np.stack(mats))
    labels = np.where(f >= 0, 1, -1)
    _emit(_csv(([("%.17g" % v), int(l)] for v, l in zip(f, labels)), ["decision", "label"]),
          args.out)
    return EXIT_OK


def _scenario(k, a, seed):
    return experiments.ToyConfig.with_informative(
        k, d=a.d, rho=a.rho, n_train=a.n_train, n_validate=a.n_validate, n_test=a.n_test,
        seed=seed, repetitions=a.repetitions, block_size=a.block_size)


def cmd_toygen(args) -> int:
    cfg = experiments.ToyConfig.with_informative(args.informative, d=args.d, rho=args.rho,
                                                 n_train=args.n, seed=args.seed)
    X, y = experiments.generate_toy(cfg, args.n)
    header = [f"x{j}" for j in range(cfg.d)] + ["y"]
    body = (["%.17g" % v for v in row] + [int(t)] for row, t in zip(X, y))
    _emit(_csv(body, header), args.out)
    if args.kernel_dir:
        out = Path(args.kernel_dir)
        out.mkdir(parents=True, exist_ok=True)
        stack = kernels.FeatureBlockStack.multiplicative(X, cfg.blocks())
        for m, K in enumerate(stack.values):
            lio.write_kernel(out / f"f{m:03d}.km", K, name=f"f{m:03d}")
        lio.write_labels(out / "labels.txt", y)
    return EXIT_OK


def cmd_sweep(args) -> int:
    configs = [_scenario(k, args, args.seed) for k in args.informative]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        report = experiments.run_sparsity_sweep(
            configs, ps=args.ps, Cs=args.Cs, mode=args.mode, jobs=args.jobs,
            epsilon_mkl=args.epsilon_mkl)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    _emit(report.to_csv(), args.out)
    if args.report:
        lio.atomic_write(args.report, report.manifest_json())
    return EXIT_OK


def cmd_bounds(args) -> int:
    rows = bounds.bound_table(args.M, args.n, args.p, R=args.R, delta=args.delta, L=args.L,
                              empirical_risk=args.empirical_risk, cortes=args.cortes)
    header = list(rows[0])

    def cell(v):
        if isinstance(v, float):
            return "inf" if math.isinf(v) else "%.5g" % v
        return str(v)

    _emit(_csv(([cell(r[h]) for h in header] for r in rows), header), args.out)
    return EXIT_OK


def cmd_align(args) -> int:
    _require_files(args.kernels, "--kernels")
    norm = kernels.NORMALIZERS[args.normalize]
    stack = kernels.KernelStack([norm(lio.read_kernel(p)).renamed(Path(p).stem)
                                 for p in args.kernels])
    A = kernels.alignment_matrix(stack)
    _emit(_csv(([("%.10g" % v) for v in row] for row in A),
               stack.names if args.names else None), args.out)
    return EXIT_OK


def cmd_normalize(args) -> int:
    _require_files([args.kernel], "--kernel")
    K = lio.read_kernel(args.kernel)
    lio.write_kernel(args.out, kernels.NORMALIZERS[args.method](K), name=K.name)
    return EXIT_OK


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="lpmkl", description="lp-norm multiple kernel learning",
                                 allow_abbrev=False)
    ap.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_, description=help_, allow_abbrev=False)
        p.set_defaults(func=func)
        p.add_argument("--manifest", metavar="PATH",
                       help="write the fully resolved configuration as JSON")
        return p

    p = add("train", cmd_train, "train an lp-norm MKL model")
    p.add_argument("--kernels", nargs="+", required=True, metavar="FILE")
    p.add_argument("--labels", required=True, metavar="FILE")
    p.add_argument("--out", required=True, metavar="FILE", help="model file to write")
    p.add_argument("--report", metavar="FILE", help="training report JSON (default OUT.report.json)")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--p", type=number, default=2.0, help="norm parameter, >= 1 or inf")
    group.add_argument("--q-block", type=number, default=None, help="block norm q > 2")
    p.add_argument("--C", type=number, default=1.0)
    p.add_argument("--mode", choices=MODES, default="wrapper")
    p.add_argument("--epsilon-svm", type=number, default=1e-3)
    p.add_argument("--epsilon-mkl", type=number, default=1e-3)
    p.add_argument("--max-outer", type=int, default=200)
    p.add_argument("--callback-interval", type=int, default=1)
    p.add_argument("--normalize", choices=sorted(kernels.NORMALIZERS), default="none")

    p = add("predict", cmd_predict, "decision values for new points")
    p.add_argument("--model", required=True, metavar="FILE")
    p.add_argument("--kernels", nargs="+", required=True, metavar="FILE",
                   help="one test-kernel row file (n_test x n_train) per model kernel")
    p.add_argument("--out", metavar="FILE", help="CSV output (default stdout)")

    p = add("toygen", cmd_toygen, "draw a synthetic two-Gaussian sample")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--d", type=int, default=50)
    p.add_argument("--informative", type=int, default=50, help="leading informative features")
    p.add_argument("--rho", type=number, default=1.75)
    p.add_argument("--out", metavar="FILE", help="CSV output (default stdout)")
    p.add_argument("--kernel-dir", metavar="DIR",
                   help="also write normalized per-feature kernels and labels here")

    p = add("sweep", cmd_sweep, "sparsity sweep over (p, C) on synthetic data")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--d", type=int, default=50)
    p.add_argument("--informative", type=int, nargs="+", default=[1, 10, 50],
                   help="informative feature count per scenario")
    p.add_argument("--rho", type=number, default=1.75)
    p.add_argument("--n-train", type=int, default=50)
    p.add_argument("--n-validate", type=int, default=1000)
    p.add_argument("--n-test", type=int, default=1000)
    p.add_argument("--repetitions", type=int, default=100)
    p.add_argument("--block-size", type=int, default=1)
    p.add_argument("--ps", type=number, nargs="+", default=list(experiments.DEFAULT_PS))
    p.add_argument("--Cs", type=number, nargs="+", default=list(experiments.DEFAULT_CS))
    p.add_argument("--mode", choices=MODES, default="wrapper")
    p.add_argument("--epsilon-mkl", type=number, default=1e-3)
    p.add_argument("--out", metavar="FILE", help="CSV output (default stdout)")
    p.add_argument("--report", metavar="FILE", help="JSON run manifest with per-cell results")

    p = add("bounds", cmd_bounds, "tabulate Rademacher bounds over grids of M, n and p")
    p.add_argument("--M", type=number, nargs="+", required=True)
    p.add_argument("--n", type=number, nargs="+", required=True)
    p.add_argument("--p", type=number, nargs="+", default=[1.0])
    p.add_argument("--R", type=number, default=1.0)
    p.add_argument("--delta", type=number, default=None,
                   help="also tabulate the generalization bound at this confidence")
    p.add_argument("--L", type=number, default=1.0)
    p.add_argument("--empirical-risk", type=number, default=0.0)
    p.add_argument("--cortes", action="store_true", help="add the competitor bound column")
    p.add_argument("--out", metavar="FILE", help="CSV output (default stdout)")

    p = add("align", cmd_align, "pairwise centered kernel alignment matrix")
    p.add_argument("--kernels", nargs="+", required=True, metavar="FILE")
    p.add_argument("--normalize", choices=sorted(kernels.NORMALIZERS), default="none")
    p.add_argument("--names", action="store_true", help="prepend a header of kernel names")
    p.add_argument("--out", metavar="FILE", help="CSV output (default stdout)")

    p = add("normalize", cmd_normalize, "normalize one kernel file")
    p.add_argument("--kernel", required=True, metavar="FILE")
    p.add_argument("--method", choices=sorted(kernels.NORMALIZERS), required=True)
    p.add_argument("--out", required=True, metavar="FILE")
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.manifest:
            resolved = {k: v for k, v in vars(args).items() if k != "func"}
            resolved["backend"] = backend_name()
            lio.write_json(args.manifest, resolved)
        return args.func(args)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (UsageError, LpMklError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
