"""Command-line entry point: ``heavysmd {verify,sweep,fit,plot,lowerbound}``."""
from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

import numpy as np

from . import harness, invariants, lowerbound
from .mirror import MirrorMap
from .noise import seeded_rng
from .projection import Box, pythagorean_check
from .solvers import single_step_response, smd_step_unprojected


def _int_list(s: str) -> list[int]:
    return [int(float(x)) for x in s.split(",") if x.strip()]


def cmd_verify(args) -> int:
    failed = 0
    for r in invariants.run_suite(n=args.samples, seed=args.seed):
        if not r.ok or args.verbose:
            print(f"{'PASS' if r.ok else 'FAIL'} {r.name} [{invariants.fmt_cell(r.cell)}] "
                  f"violations={r.violations}/{r.samples} worst={r.worst:.2e}")
        failed += not r.ok
    print(f"inequality suite: {'PASS' if failed == 0 else 'FAIL'} ({failed} failing cells)")

    rng = seeded_rng(args.seed, 1)
    worst = 0.0
    for kappa in (0.3, 0.5, 1.0):
        for d in (2, 8, 32):
            for p in sorted({1 + kappa, 2.0, 4.0}):
                m = MirrorMap(p, kappa)
                x = invariants.random_vectors(rng, 1000, d)
                err = np.max(np.abs(m.grad_conj(m.grad(x)) - x), axis=1) / (1 + np.max(np.abs(x), axis=1))
                worst = max(worst, float(err.max()))
    ok = worst <= 1e-6
    failed += not ok
    print(f"{'PASS' if ok else 'FAIL'} conjugate round trip, worst scaled error {worst:.2e}")

    bad = 0
    for p, kappa in ((1.5, 0.5), (2.0, 1.0), (4.0, 0.3)):
        m, box = MirrorMap(p, kappa), Box(1.0, 4)
        for _ in range(200):
            x = rng.uniform(-1, 1, 4)
            y = rng.standard_normal(4) * 3
            bad += not pythagorean_check(m, x, y, box)
    failed += bad > 0
    print(f"{'PASS' if bad == 0 else 'FAIL'} projection three-point inequality, {bad} violations")

    diff = 0.0
    for kappa in (0.3, 0.5, 1.0):
        m = MirrorMap(2.0, kappa)
        for _ in range(200):
            x, g = rng.standard_normal(5), rng.standard_normal(5) * 10 ** rng.uniform(-2, 2)
            eta = 10 ** rng.uniform(-3, 0)
            a, b = single_step_response(m, x, g, eta), smd_step_unprojected(m, x, g, eta)
            diff = max(diff, float(np.max(np.abs(a - b))))
    ok = diff <= 1e-10
    failed += not ok
    print(f"{'PASS' if ok else 'FAIL'} closed-form step, max difference {diff:.2e}")

    bad = sum(max(lowerbound.coin_pair_kls(p)) > p for p in np.linspace(0.01, 0.5, 50))
    failed += bad > 0
    print(f"{'PASS' if bad == 0 else 'FAIL'} Bernoulli KL bound, {bad} violations")
    return 1 if failed else 0


def cmd_sweep(args) -> int:
    cfg = harness.load_config(args.config, args.override)
    if args.out_dir:
        cfg = harness.replace_out_dir(cfg, args.out_dir)
    rows = harness.run_sweep(cfg, report=not args.no_report)
    errors = sum(r.status != "ok" for r in rows)
    print(f"{len(rows)} rows ({errors} errors) written to {Path(cfg.out_dir) / 'results.csv'}")
    return 1 if errors else 0


def cmd_fit(args) -> int:
    rows = harness.read_rows(args.input)
    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["series", "slope", "intercept", "r2", "points", "theory_slope"])
    status = 0
    for key, group in sorted(harness.split_series(rows, args.x).items(), key=lambda kv: str(kv[0])):
        try:
            fit = harness.fit_rate(group, args.x)
        except ValueError as exc:
            print(f"{harness._label(key)}: {exc}", file=sys.stderr)
            status = 1
            continue
        out.writerow([harness._label(key), f"{fit.slope:.6f}", f"{fit.intercept:.6f}", f"{fit.r2:.6f}",
                      fit.n_points, f"{harness.theory_slope(key[1], args.x):.6f}"])
    return status


def cmd_plot(args) -> int:
    rows = harness.read_rows(args.input)
    path = harness.emit_plot(rows, args.out, args.x)
    print(f"wrote {path}")
    return 0


def cmd_lowerbound(args) -> int:
    out = csv.writer(sys.stdout, lineterminator="\n")
    if args.game:
        out.writerow(["regime", "d", "delta", "T", "estimator", "misid_rate", "ci_low", "ci_high", "worst_vertex", "floor"])
        for T in _int_list(args.T):
            delta = args.delta if args.delta is not None else lowerbound.hard_delta(args.regime, args.kappa, args.d, max(T, 1))
            floor = _floor(args.regime, delta, args.kappa, T, args.d)
            for est in args.estimators.split(","):
                res = lowerbound.identification_game(
                    args.regime, args.d, delta, T, args.trials, est, kappa=args.kappa,
                    q=args.q, seed=args.seed, balanced=True,
                )
                out.writerow([args.regime, args.d, f"{delta:.6g}", T, est, f"{res.misid_rate:.4f}",
                              f"{res.ci_low:.4f}", f"{res.ci_high:.4f}", f"{res.worst_vertex_rate:.4f}", f"{floor:.4f}"])
        return 0
    q = args.q if args.q is not None else (1.0 if args.regime == "small" else 2.0)
    if lowerbound.regime_for(q, args.kappa) != args.regime:
        print(f"q={q} does not belong to the {args.regime} regime at kappa={args.kappa}", file=sys.stderr)
        return 2
    rows = lowerbound.minimax_gap_experiment(args.kappa, q, args.d, _int_list(args.T), args.trials, seed=args.seed)
    out.writerow(list(rows[0]))
    for r in rows:
        out.writerow([f"{v:.6g}" if isinstance(v, float) else v for v in r.values()])
    return 0


def _floor(regime: str, delta: float, kappa: float, T: int, d: int) -> float:
    if regime == "small":
        return lowerbound.floor_single_small(delta, kappa, T) if d == 1 else lowerbound.floor_multi_small(delta, kappa, T, d)
    return lowerbound.floor_single_large(delta) if d == 1 else lowerbound.floor_multi_large(delta, d)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="heavysmd", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="run the invariant suites")
    v.add_argument("--samples", type=int, default=10_000)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--verbose", action="store_true")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("sweep", help="run a sweep from a config file")
    s.add_argument("--config", required=True)
    s.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    s.add_argument("--out-dir", default=None, help=f"defaults to the config value, then ${harness.OUT_DIR_ENV}")
    s.add_argument("--no-report", action="store_true", help="skip the PNG report")
    s.set_defaults(func=cmd_sweep)

    f = sub.add_parser("fit", help="fit log-log rates per series")
    f.add_argument("--input", required=True)
    f.add_argument("--x", choices=("T", "d"), default="T")
    f.set_defaults(func=cmd_fit)

    p = sub.add_parser("plot", help="write an SVG log-log plot")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--x", choices=("T", "d"), default="T")
    p.set_defaults(func=cmd_plot)

    lb = sub.add_parser("lowerbound", help="hard-instance experiments")
    lb.add_argument("--regime", choices=("small", "large"), required=True)
    lb.add_argument("--kappa", type=float, default=0.5)
    lb.add_argument("--q", type=lambda s: math.inf if s == "inf" else float(s), default=None)
    lb.add_argument("--d", type=int, default=1)
    lb.add_argument("--T", default="100,1000,10000")
    lb.add_argument("--trials", type=int, default=100)
    lb.add_argument("--seed", type=int, default=0)
    lb.add_argument("--game", action="store_true", help="play the identification game instead")
    lb.add_argument("--delta", type=float, default=None)
    lb.add_argument("--estimators", default="smd,mle,random")
    lb.set_defaults(func=cmd_lowerbound)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
