"""Command-line front end: trace, at, sweep, verify."""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from . import kinkfile, oracle
from .dataset import Dataset, ParseError, augment_bias, parse_libsvm
from .dualpath import CostSchedule, PathError, TraceOptions, trace_path
from .evaluate import cost_to_tau, kkt_check, sweep
from .qoperator import QOperator
from .recover import alpha_at, primal_at


def _load_dataset(parser, path, bias):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            ds = parse_libsvm(fh)
    except OSError as exc:
        parser.error(f"cannot read {path}: {exc}")
    except ParseError as exc:
        parser.error(f"{path}: {exc}")
    return augment_bias(ds) if bias else ds


def _load_path_with_data(parser, path_file, data_file):
    try:
        kp = kinkfile.load(path_file)
    except OSError as exc:
        parser.error(f"cannot read {path_file}: {exc}")
    except kinkfile.KinkFileError as exc:
        parser.error(f"{path_file}: {exc}")
    ds = _load_dataset(parser, data_file, kp.bias_augmented)
    kp = kinkfile.attach_dataset(kp, ds)
    return kp, ds


def cmd_trace(parser, args) -> int:
    if args.lam <= 0:
        parser.error("--lambda must be positive")
    ds = _load_dataset(parser, args.data, args.bias)
    opts = TraceOptions(box_tol=args.tol)
    start = time.perf_counter()
    try:
        path = trace_path(ds, args.lam, opts)
    except PathError as exc:
        if exc.partial is not None:
            kinkfile.save(exc.partial, args.out)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    elapsed = time.perf_counter() - start
    kinkfile.save(path, args.out)
    print(f"kinks={len(path.kinks)} taus=[0,1] events={path.events_total} "
          f"time={elapsed:.3f}")
    return 0


def cmd_at(parser, args) -> int:
    if args.tau is not None:
        if args.cost_pos is not None or args.cost_neg is not None:
            parser.error("give either --tau or the --cost-pos/--cost-neg pair")
        tau = args.tau
    else:
        if args.cost_pos is None or args.cost_neg is None:
            parser.error("give either --tau or the --cost-pos/--cost-neg pair")
        try:
            tau = cost_to_tau(args.cost_pos, args.cost_neg)
        except ValueError as exc:
            parser.error(str(exc))
    if not 0.0 <= tau <= 1.0:
        parser.error(f"tau={tau} outside [0, 1]")
    try:
        path, ds = _load_path_with_data(parser, args.path, args.data)
    except kinkfile.KinkFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if not path.complete:
        print("error: kink file is incomplete; cannot recover", file=sys.stderr)
        return 1
    model = primal_at(path, ds, tau)
    lines = [f"# tau {tau:.17g}"]
    for idx in np.flatnonzero(model.w):
        lines.append(f"{idx}:{model.w[idx]:.17g}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_sweep(parser, args) -> int:
    if args.grid < 2:
        parser.error("--grid must be at least 2")
    try:
        path, train = _load_path_with_data(parser, args.path, args.data)
    except kinkfile.KinkFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if not path.complete:
        print("error: kink file is incomplete; cannot sweep", file=sys.stderr)
        return 1
    test = _load_dataset(parser, args.test, path.bias_augmented)
    taus = [k / (args.grid - 1) for k in range(args.grid)]
    metrics = sweep(path, train, test, taus)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(metrics.to_csv())
    print(f"sweep grid={args.grid} rows={len(metrics.records)} out={args.out}")
    return 0


def cmd_verify(parser, args) -> int:
    if args.lam <= 0:
        parser.error("--lambda must be positive")
    ds = _load_dataset(parser, args.data, args.bias)
    if ds.n > 500:
        parser.error(f"n={ds.n} exceeds the dense-oracle guard (500)")

    try:
        path = trace_path(ds, args.lam)
    except PathError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    q = QOperator(ds)
    sched = CostSchedule(n=ds.n, lam=args.lam)
    Q = oracle.dense_q(ds)
    rng = np.random.default_rng(args.seed)
    failures = 0

    def report(name, worst, tol):
        nonlocal failures
        ok = worst <= tol
        failures += 0 if ok else 1
        print(f"check {name}: {'PASS' if ok else 'FAIL'} "
              f"(worst {worst:.3e}, tol {tol:.0e})")

    taus = np.linspace(0.0, 1.0, args.grid)
    worst_dual = 0.0
    worst_w = 0.0
    for tau in taus:
        a_path = alpha_at(path, float(tau))
        a_ref = oracle.solve_at_tau(ds, args.lam, float(tau), Q=Q)
        d_path = oracle.dual_value(Q, args.lam, a_path)
        d_ref = oracle.dual_value(Q, args.lam, a_ref)
        worst_dual = max(worst_dual,
                         abs(d_path - d_ref) / max(abs(d_ref), 1e-12))
        w_path = primal_at(path, ds, float(tau)).w
        w_ref = oracle.primal_from_alpha(ds, args.lam, a_ref)
        worst_w = max(worst_w, float(np.abs(w_path - w_ref).max(initial=0.0)))
    report("oracle-dual-objective", worst_dual, 1e-7)
    report("oracle-primal-weights", worst_w, 1e-5)

    worst_kkt = 0.0
    for k in path.kinks:
        rep = kkt_check(q, args.lam, k.tau, sched, alpha_at(path, k.tau), tol=1e-6)
        worst_kkt = max(worst_kkt, rep.worst())
    report("kkt-at-kinks", worst_kkt, 1e-6)

    kink_taus = [k.tau for k in path.kinks] + [1.0]
    worst_mid = 0.0
    worst_cont = 0.0
    for lo, hi in zip(kink_taus[:-1], kink_taus[1:]):
        mid = 0.5 * (lo + hi)
        a_mid = alpha_at(path, mid)
        a_mean = 0.5 * (alpha_at(path, lo) + alpha_at(path, hi))
        worst_mid = max(worst_mid, float(np.abs(a_mid - a_mean).max(initial=0.0)))
    for tau in kink_taus[1:-1]:
        below = alpha_at(path, max(0.0, tau - 1e-12))
        above = alpha_at(path, min(1.0, tau + 1e-12))
        worst_cont = max(worst_cont, float(np.abs(below - above).max(initial=0.0)))
    report("segment-midpoint-linearity", worst_mid, 1e-9)
    report("kink-continuity", worst_cont, 1e-9)

    worst_feas = 0.0
    from .dualpath import upper_bounds
    for tau in rng.random(200):
        a = alpha_at(path, float(tau))
        upper = upper_bounds(sched, ds.labels, float(tau))
        worst_feas = max(worst_feas,
                         float((-a).max(initial=0.0)),
                         float((a - upper).max(initial=0.0)))
    report("box-feasibility", worst_feas, 1e-10)

    if failures:
        print(f"{failures} check(s) failed")
        return 1
    print("all checks passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quantpath",
        description="Cost-sensitive linear SVM with an exact solution path "
                    "over the quantile parameter tau.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("trace", help="train once and trace the whole path")
    p.add_argument("--data", required=True, help="training data, LIBSVM text")
    p.add_argument("--lambda", dest="lam", type=float, required=True,
                   help="regularization constant (> 0)")
    p.add_argument("--bias", action=argparse.BooleanOptionalAction, default=True,
                   help="append a constant-1 feature (default: on)")
    p.add_argument("--tol", type=float, default=None,
                   help="projected-gradient tolerance for the warm start")
    p.add_argument("--out", required=True, help="kink file to write")

    p = sub.add_parser("at", help="recover the model at one tau or cost pair")
    p.add_argument("--path", required=True, help="kink file from trace")
    p.add_argument("--data", required=True, help="the training data")
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--cost-pos", type=float, default=None,
                   help="cost of a false positive")
    p.add_argument("--cost-neg", type=float, default=None,
                   help="cost of a false negative")
    p.add_argument("--out", default=None, help="write weights here instead of stdout")

    p = sub.add_parser("sweep", help="classification rates over a tau grid")
    p.add_argument("--path", required=True)
    p.add_argument("--data", required=True, help="the training data")
    p.add_argument("--test", required=True, help="evaluation data")
    p.add_argument("--grid", type=int, required=True, help="number of tau values")
    p.add_argument("--out", required=True, help="CSV to write")

    p = sub.add_parser("verify", help="trace and cross-check against a dense solver")
    p.add_argument("--data", required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--bias", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--grid", type=int, default=21)
    p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"trace": cmd_trace, "at": cmd_at, "sweep": cmd_sweep,
                "verify": cmd_verify}
    return handlers[args.command](parser, args)


if __name__ == "__main__":
    sys.exit(main())
