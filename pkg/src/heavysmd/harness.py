"""Sweep configuration, orchestration, persistence, rate fitting and plots.

A sweep is the grid ``algo x kappa x q x d x T`` with ``trials`` runs per
cell, all on the synthetic heavy-tailed oracle. Every cell derives its own
seed from the root seed and its coordinates, so adding cells never changes
the streams of existing ones, and trial ``k`` of a cell always uses stream
``k`` of that seed.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from itertools import product
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .mirror import MirrorMap, r0, resolve_map  # noqa: F401  (resolve_map is part of the harness API)
from .noise import NoiseSpec, seeded_rng
from .oracles import SyntheticOracle
from .projection import Box
from .solvers import ALGOS, RunConfig, run_batch

SCHEMA_VERSION = 1
OUT_DIR_ENV = "HEAVYSMD_OUT"
COLUMNS = (
    "run_id", "experiment", "algo", "kappa", "q", "p", "d", "T", "R", "sigma", "eta",
    "seed", "trial", "final_error", "checkpoints", "wall_ms", "status", "message",
)
NOISE_MODES = ("per_coordinate", "fixed_sigma")


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_DIR_ENV, "results"))


def _floats(v) -> tuple[float, ...]:
    return tuple(float(x) for x in v)


@dataclass(frozen=True)
class SweepConfig:
    experiment: str = "sweep"
    algos: tuple[str, ...] = ("smd",)
    kappas: tuple[float, ...] = (0.5,)
    qs: tuple[float, ...] = (1.5,)
    dims: tuple[int, ...] = (10,)
    horizons: tuple[int, ...] = (100, 1000)
    trials: int = 10
    seed: int = 0
    radius: float = 1.0
    lipschitz: float = 1.0
    tail_index: float | None = None  # None: midway between 1+kappa and 2
    noise_scale: float = 0.1
    noise_mode: str = "per_coordinate"
    eta: float | str = "auto"
    clip: float | None = None
    chunk: int = 50
    workers: int = 1
    out_dir: str = field(default_factory=lambda: str(default_out_dir()))

    def __post_init__(self):
        for name in ("algos", "kappas", "qs", "dims", "horizons"):
            if len(getattr(self, name)) == 0:
                raise ValueError(f"{name} must not be empty")
        bad = set(self.algos) - set(ALGOS)
        if bad:
            raise ValueError(f"unknown algorithms {sorted(bad)}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.radius > 0:
            raise ValueError("R must be positive")
        if self.noise_mode not in NOISE_MODES:
            raise ValueError(f"noise_mode must be one of {NOISE_MODES}")
        if self.chunk < 1 or self.workers < 1:
            raise ValueError("chunk and workers must be >= 1")
        if any(t < 1 for t in self.horizons) or any(d < 1 for d in self.dims):
            raise ValueError("T and d values must be >= 1")

    def echo(self) -> dict:
        return asdict(self)


# flat key = value config files; list values are comma separated

_KEYS = {
    "experiment": ("experiment", str),
    "algos": ("algos", lambda s: tuple(_split(s))),
    "algo": ("algos", lambda s: tuple(_split(s))),
    "kappa": ("kappas", lambda s: _floats(_split(s))),
    "kappas": ("kappas", lambda s: _floats(_split(s))),
    "q": ("qs", lambda s: tuple(_parse_exponent(x) for x in _split(s))),
    "qs": ("qs", lambda s: tuple(_parse_exponent(x) for x in _split(s))),
    "d": ("dims", lambda s: tuple(int(x) for x in _split(s))),
    "dims": ("dims", lambda s: tuple(int(x) for x in _split(s))),
    "T": ("horizons", lambda s: tuple(int(float(x)) for x in _split(s))),
    "horizons": ("horizons", lambda s: tuple(int(float(x)) for x in _split(s))),
    "trials": ("trials", int),
    "seed": ("seed", int),
    "R": ("radius", float),
    "radius": ("radius", float),
    "L": ("lipschitz", float),
    "lipschitz": ("lipschitz", float),
    "tail_index": ("tail_index", lambda s: None if s in ("", "auto") else float(s)),
    "noise_scale": ("noise_scale", float),
    "noise_mode": ("noise_mode", str),
    "eta": ("eta", lambda s: "auto" if s == "auto" else float(s)),
    "clip": ("clip", lambda s: None if s in ("", "auto") else float(s)),
    "chunk": ("chunk", int),
    "workers": ("workers", int),
    "out_dir": ("out_dir", str),
}


def _split(s: str) -> list[str]:
    return [x.strip() for x in s.split(",") if x.strip()]


def _parse_exponent(s: str) -> float:
    return math.inf if s.lower() in ("inf", "infinity") else float(s)


def parse_config(text: str, overrides: Sequence[str] = ()) -> SweepConfig:
    """Build a config from ``key = value`` lines (``#`` starts a comment).

    ``overrides`` are ``key=value`` strings applied after the file.
    """
    values: dict = {}
    lines = [(f"line {i}", ln) for i, ln in enumerate(text.splitlines(), 1)]
    lines += [("override", o) for o in overrides]
    for where, line in lines:
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{where}: expected key = value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ValueError(f"{where}: unknown key {key!r}")
        name, conv = _KEYS[key]
        try:
            values[name] = conv(raw)
        except ValueError as exc:
            raise ValueError(f"{where}: bad value for {key}: {exc}") from None
    return SweepConfig(**values)


def load_config(path: str | os.PathLike, overrides: Sequence[str] = ()) -> SweepConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"), overrides)


# rows

@dataclass(frozen=True)
class ResultRow:
    run_id: str
    experiment: str
    algo: str
    kappa: float
    q: float
    p: float | None
    d: int
    T: int
    R: float
    sigma: float | None
    eta: float | None
    seed: int
    trial: int
    final_error: float | None
    checkpoints: tuple[tuple[int, float], ...]
    wall_ms: float
    status: str = "ok"
    message: str = ""

    def to_record(self) -> list[str]:
        def num(v):
            return "" if v is None else repr(float(v)) if isinstance(v, float) else str(v)

        cps = ";".join(f"{t}:{e!r}" for t, e in self.checkpoints)
        return [
            self.run_id, self.experiment, self.algo, num(self.kappa), num(self.q), num(self.p),
            str(self.d), str(self.T), num(self.R), num(self.sigma), num(self.eta), str(self.seed),
            str(self.trial), num(self.final_error), cps, f"{self.wall_ms:.3f}", self.status, self.message,
        ]

    @classmethod
    def from_record(cls, rec: dict) -> "ResultRow":
        def opt(s):
            return None if s == "" else float(s)

        cps = tuple(
            (int(t), float(e)) for t, e in (item.split(":") for item in rec["checkpoints"].split(";") if item)
        )
        return cls(
            run_id=rec["run_id"], experiment=rec["experiment"], algo=rec["algo"],
            kappa=float(rec["kappa"]), q=float(rec["q"]), p=opt(rec["p"]), d=int(rec["d"]),
            T=int(rec["T"]), R=float(rec["R"]), sigma=opt(rec["sigma"]), eta=opt(rec["eta"]),
            seed=int(rec["seed"]), trial=int(rec["trial"]), final_error=opt(rec["final_error"]),
            checkpoints=cps, wall_ms=float(rec["wall_ms"]), status=rec["status"], message=rec["message"],
        )

    def sort_key(self):
        return (self.experiment, self.algo, self.kappa, self.q, self.d, self.T, self.trial)


def read_rows(path: str | os.PathLike) -> list[ResultRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [ResultRow.from_record(r) for r in csv.DictReader(fh)]


def rows_to_csv(rows: Iterable[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow(r.to_record())
    return buf.getvalue()


# sweep execution

def cell_seed(root: int, experiment: str, algo: str, kappa: float, q: float, d: int, T: int) -> int:
    """64-bit seed of one cell: a keyed hash of the cell coordinates."""
    key = f"{experiment}|{algo}|{kappa!r}|{q!r}|{d}|{T}".encode()
    h = hashlib.blake2b(key, digest_size=8, key=int(root).to_bytes(8, "little", signed=False))
    return int.from_bytes(h.digest(), "little") >> 1


@dataclass(frozen=True)
class _Unit:
    algo: str
    kappa: float
    q: float
    d: int
    T: int
    trials: tuple[int, ...]


def cell_oracle(cfg: SweepConfig, kappa: float, q: float, d: int) -> SyntheticOracle:
    """Synthetic oracle of one cell; the target alternates sign at half the radius.

    With ``noise_mode = fixed_sigma`` the per-coordinate scale shrinks with
    ``d`` so the certified sigma does not depend on the dimension.
    """
    beta = cfg.tail_index if cfg.tail_index is not None else (3.0 + kappa) / 2.0
    scale = cfg.noise_scale
    if cfg.noise_mode == "fixed_sigma":
        growth = max(1.0, 0.0 if math.isinf(q) else (1.0 + kappa) / q)
        scale *= float(d) ** (-growth / (1.0 + kappa))
    target = 0.5 * cfg.radius * np.where(np.arange(d) % 2 == 0, 1.0, -1.0)
    return SyntheticOracle(target, cfg.lipschitz, q, NoiseSpec(beta, scale, kappa))


def _units(cfg: SweepConfig) -> list[_Unit]:
    out = []
    for algo, kappa, q, d, T in product(cfg.algos, cfg.kappas, cfg.qs, cfg.dims, cfg.horizons):
        for start in range(0, cfg.trials, cfg.chunk):
            out.append(_Unit(algo, kappa, q, d, T, tuple(range(start, min(start + cfg.chunk, cfg.trials)))))
    return out


def _run_unit(cfg: SweepConfig, u: _Unit) -> list[ResultRow]:
    seed = cell_seed(cfg.seed, cfg.experiment, u.algo, u.kappa, u.q, u.d, u.T)
    base = dict(experiment=cfg.experiment, algo=u.algo, kappa=u.kappa, q=u.q, d=u.d, T=u.T, R=cfg.radius, seed=seed)
    tag = f"{cfg.experiment}-{seed:016x}"
    p = sigma = eta = None
    try:
        m = resolve_map(u.q, u.kappa, u.d) if u.algo == "smd" else None
        p = m.p if m is not None else None
        oracle = cell_oracle(cfg, u.kappa, u.q, u.d)
        sigma = oracle.sigma
        run = RunConfig(u.algo, Box(cfg.radius, u.d), u.T, cfg.eta, seed, m, cfg.clip, u.kappa)
        traces = run_batch(run, oracle, [seeded_rng(seed, k) for k in u.trials])
    except Exception as exc:  # recorded as error rows; the sweep goes on
        msg = f"{type(exc).__name__}: {exc}"
        return [
            ResultRow(f"{tag}-{k}", p=p, sigma=sigma, eta=None, trial=k, final_error=None,
                      checkpoints=(), wall_ms=0.0, status="error", message=msg, **base)
            for k in u.trials
        ]
    return [
        ResultRow(f"{tag}-{k}", p=p, sigma=sigma, eta=tr.eta, trial=k, final_error=tr.final_error,
                  checkpoints=tr.checkpoints, wall_ms=1e3 * tr.wall_time, **base)
        for k, tr in zip(u.trials, traces)
    ]


def run_sweep(cfg: SweepConfig, write: bool = True, report: bool = True) -> list[ResultRow]:
    """Run every cell, appending rows to ``results.csv`` as units finish.

    Units are consumed in submission order, so the file is identical for any
    worker count. A manifest (``manifest.json``) and, when ``report`` is set,
    a PNG of mean error against ``T`` are written next to the CSV.
    """
    units = _units(cfg)
    rows: list[ResultRow] = []
    out = Path(cfg.out_dir)
    fh = writer = None
    lock = threading.Lock()
    if write:
        out.mkdir(parents=True, exist_ok=True)
        fh = open(out / "results.csv", "w", newline="", encoding="utf-8")
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(COLUMNS)
        fh.flush()
    try:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            for batch in pool.map(lambda u: _run_unit(cfg, u), units):
                with lock:
                    rows.extend(batch)
                    if writer is not None:
                        writer.writerows(r.to_record() for r in batch)
                        fh.flush()
    finally:
        if fh is not None:
            fh.close()
    if write:
        write_manifest(cfg, rows, out / "manifest.json")
        if report:
            write_report(rows, out / "report.png")
    return rows


def write_manifest(cfg: SweepConfig, rows: Sequence[ResultRow], path: Path) -> None:
    from . import __version__

    errors = sum(r.status != "ok" for r in rows)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "columns": list(COLUMNS),
        "code_version": __version__,
        "config": cfg.echo(),
        "root_seed": cfg.seed,
        "rows": len(rows),
        "error_rows": errors,
        "cells": len({(r.algo, r.kappa, r.q, r.d, r.T) for r in rows}),
    }
    Path(path).write_text(json.dumps(doc, indent=2, default=_json_default) + "\n", encoding="utf-8")


def _json_default(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    raise TypeError(f"cannot serialize {type(v).__name__}")


# rate fitting

@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float
    n_points: int


def mean_errors(rows: Iterable[ResultRow], x_axis: str) -> tuple[np.ndarray, np.ndarray]:
    if x_axis not in ("T", "d"):
        raise ValueError("x_axis must be 'T' or 'd'")
    groups: dict[int, list[float]] = {}
    for r in rows:
        if r.status == "ok" and r.final_error is not None:
            groups.setdefault(getattr(r, x_axis), []).append(r.final_error)
    xs = np.array(sorted(groups), dtype=float)
    ys = np.array([np.mean(groups[int(x)]) for x in xs])
    return xs, ys


def fit_rate(rows: Iterable[ResultRow], x_axis: str = "T") -> RateFit:
    """Least-squares line through ``(log x, log mean error)``."""
    xs, ys = mean_errors(rows, x_axis)
    if len(xs) < 4:
        raise ValueError(f"need at least 4 distinct {x_axis} values, got {len(xs)}")
    if np.any(ys <= 0):
        bad = xs[ys <= 0]
        raise ValueError(f"non-positive mean error at {x_axis} = {bad.tolist()}; log is undefined")
    lx, ly = np.log(xs), np.log(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    tot = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / tot if tot > 0 else 1.0
    return RateFit(float(slope), float(intercept), float(r2), len(xs))


def series_key(r: ResultRow, x_axis: str) -> tuple:
    other = ("d", r.d) if x_axis == "T" else ("T", r.T)
    return (r.algo, r.kappa, r.q, other)


def split_series(rows: Iterable[ResultRow], x_axis: str) -> dict[tuple, list[ResultRow]]:
    out: dict[tuple, list[ResultRow]] = {}
    for r in rows:
        if r.status == "ok":
            out.setdefault(series_key(r, x_axis), []).append(r)
    return out


def theory_slope(kappa: float, x_axis: str) -> float:
    e = kappa / (1.0 + kappa)
    return -e if x_axis == "T" else e


def _label(key: tuple) -> str:
    algo, kappa, q, (name, val) = key
    return f"{algo} k={kappa:g} q={q:g} {name}={val}"


# plots

def emit_plot(rows: Sequence[ResultRow], path: str | os.PathLike, x_axis: str = "T") -> Path:
    """Write a self-contained SVG log-log plot of mean error against ``x_axis``.

    One polyline per series, its least-squares fit as a solid line and the
    theoretical slope (anchored at the first series' first point) as a
    dashed reference line.
    """
    series = {k: mean_errors(v, x_axis) for k, v in sorted(split_series(rows, x_axis).items(), key=lambda kv: str(kv[0]))}
    series = {k: (x, y) for k, (x, y) in series.items() if len(x) and np.all(y > 0)}
    if not series:
        raise ValueError("no rows with positive errors to plot")
    W, H, M = 640, 440, 60
    lx = np.log10(np.concatenate([x for x, _ in series.values()]))
    ly = np.log10(np.concatenate([y for _, y in series.values()]))
    x0, x1 = lx.min() - 0.1, lx.max() + 0.1
    y0, y1 = ly.min() - 0.2, ly.max() + 0.2

    def px(v):
        return M + (v - x0) / (x1 - x0) * (W - 2 * M)

    def py(v):
        return H - M - (v - y0) / (y1 - y0) * (H - 2 * M)

    colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<line x1="{M}" y1="{H - M}" x2="{W - M}" y2="{H - M}" stroke="black"/>',
        f'<line x1="{M}" y1="{M}" x2="{M}" y2="{H - M}" stroke="black"/>',
        f'<text x="{W / 2:.1f}" y="{H - 15}" text-anchor="middle" font-size="13">log10 {x_axis}</text>',
        f'<text x="15" y="{H / 2:.1f}" text-anchor="middle" font-size="13" transform="rotate(-90 15 {H / 2:.1f})">log10 mean error</text>',
    ]
    for i, (key, (xs, ys)) in enumerate(series.items()):
        c = colors[i % len(colors)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(np.log10(xs), np.log10(ys)))
        out.append(f'<polyline class="series" fill="none" stroke="{c}" stroke-width="1.5" points="{pts}"/>')
        for a, b in zip(np.log10(xs), np.log10(ys)):
            out.append(f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="3" fill="{c}"/>')
        if len(xs) >= 2:
            s, b = np.polyfit(np.log10(xs), np.log10(ys), 1)
            a0, a1 = np.log10(xs[0]), np.log10(xs[-1])
            out.append(
                f'<line class="fit" x1="{px(a0):.2f}" y1="{py(s * a0 + b):.2f}" x2="{px(a1):.2f}" '
                f'y2="{py(s * a1 + b):.2f}" stroke="{c}" stroke-opacity="0.5"/>'
            )
        out.append(f'<text x="{W - M - 5}" y="{M + 16 * i}" text-anchor="end" font-size="11" fill="{c}">{_label(key)}</text>')
    key0, (xs, ys) = next(iter(series.items()))
    ref = theory_slope(key0[1], x_axis)
    a0, a1 = math.log10(xs[0]), math.log10(xs[-1]) if len(xs) > 1 else x1
    b0 = math.log10(ys[0])
    out.append(
        f'<line class="reference" x1="{px(a0):.2f}" y1="{py(b0):.2f}" x2="{px(a1):.2f}" '
        f'y2="{py(b0 + ref * (a1 - a0)):.2f}" stroke="black" stroke-dasharray="6,4"/>'
    )
    out.append(f'<text x="{M + 5}" y="{M - 10}" font-size="11">dashed: slope {ref:.3f}</text>')
    out.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(out) + "\n", encoding="utf-8")
    return path


def write_report(rows: Sequence[ResultRow], path: str | os.PathLike) -> Path | None:
    """Matplotlib summary: mean error against ``T`` (and ``d`` when it varies)."""
    ok = [r for r in rows if r.status == "ok" and r.final_error is not None and r.final_error > 0]
    if not ok:
        return None
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    axes_used = [a for a in ("T", "d") if len({getattr(r, a) for r in ok}) > 1] or ["T"]
    fig, axes = plt.subplots(1, len(axes_used), figsize=(5.5 * len(axes_used), 4.2), squeeze=False)
    for ax, x_axis in zip(axes[0], axes_used):
        for key, group in sorted(split_series(ok, x_axis).items(), key=lambda kv: str(kv[0])):
            xs, ys = mean_errors(group, x_axis)
            ax.loglog(xs, ys, "o-", label=_label(key))
        ax.set_xlabel(x_axis)
        ax.set_ylabel("mean error")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(fontsize=7)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def upper_bound(row: ResultRow) -> float:
    """``R0 sigma T^(-kappa/(1+kappa))`` for an SMD row."""
    if row.p is None or row.sigma is None:
        raise ValueError("row has no mirror map")
    m = MirrorMap(row.p, row.kappa)
    return r0(m, row.R, row.d) * row.sigma * row.T ** (-row.kappa / (1.0 + row.kappa))


def replace_out_dir(cfg: SweepConfig, out_dir: str | os.PathLike) -> SweepConfig:
    return replace(cfg, out_dir=str(out_dir))

