"""Minimax lower bounds as an executable identification game.

A vertex ``alpha`` of the hypercube indexes one hard objective. An
optimizer that reaches accuracy below the packing separation identifies
``alpha``; the coin-toss oracles reveal too little for that to happen
reliably, which is what the misidentification floors quantify.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import binomtest

from .mirror import r0, resolve_map
from .noise import seeded_rng
from .oracles import HardInstance, discrepancy_rho
from .projection import Box
from .solvers import BLOCK, RunConfig, run_batch

MAX_PACKING_DIM = 24
ESTIMATORS = ("smd", "mle", "random")


@dataclass(frozen=True)
class Packing:
    """Hypercube vertices with pairwise Hamming distance at least ``d/4``."""

    dim: int
    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != self.dim or v.shape[0] < 1:
            raise ValueError("vertices must be an (n, dim) array")
        if not np.all(np.abs(v) == 1.0):
            raise ValueError("vertices must have +/-1 entries")
        object.__setattr__(self, "vertices", v)

    def __len__(self) -> int:
        return self.vertices.shape[0]

    def min_distance(self) -> int:
        n = len(self)
        if n < 2:
            return self.dim
        dist = (self.vertices[:, None, :] != self.vertices[None, :, :]).sum(axis=2)
        return int(dist[np.triu_indices(n, 1)].min())


def hamming(a, b) -> int:
    return int(np.sum(np.asarray(a) != np.asarray(b)))


def greedy_packing(d: int, rng: np.random.Generator, candidates: int = 4096) -> Packing:
    """Greedy packing over randomly ordered vertices.

    A vertex is kept iff it is at Hamming distance ``>= d/4`` from all kept
    ones. For ``d <= 12`` every vertex is visited; above that a random
    subset of ``candidates`` distinct vertices is scanned.
    """
    d = int(d)
    if not 1 <= d <= MAX_PACKING_DIM:
        raise ValueError(f"d must lie in [1, {MAX_PACKING_DIM}]")
    if d == 1:
        return Packing(1, np.array([[-1.0], [1.0]]))
    n_all = 2**d
    codes = rng.permutation(n_all) if n_all <= candidates else rng.choice(n_all, size=candidates, replace=False)
    bits = ((codes[:, None] >> np.arange(d)) & 1).astype(np.int8)
    need = d / 4.0
    kept = [bits[0]]
    for b in bits[1:]:
        if np.min(np.sum(np.stack(kept) != b, axis=1)) >= need:
            kept.append(b)
    return Packing(d, 2.0 * np.stack(kept) - 1.0)


def kl_bernoulli(a: float, b: float) -> float:
    """``KL(Ber(a) || Ber(b))`` in nats."""
    if not (0.0 < a < 1.0 and 0.0 < b < 1.0):
        raise ValueError("Bernoulli parameters must lie in (0, 1)")
    return a * math.log(a / b) + (1.0 - a) * math.log((1.0 - a) / (1.0 - b))


def coin_pair_kls(bern_p: float) -> tuple[float, float]:
    """Both directed KLs between ``Ber(1 - 3p/4)`` and ``Ber(1 - p/4)``.

    These are the per-reveal laws of a small-regime coordinate under
    ``alpha_i = +1`` and ``-1``; each KL is at most ``p`` for ``p`` in (0, 1/2].
    """
    hi, lo = 1.0 - 0.75 * bern_p, 1.0 - 0.25 * bern_p
    return kl_bernoulli(hi, lo), kl_bernoulli(lo, hi)


# misidentification floors of the coin-toss games

def floor_multi_small(delta: float, kappa: float, T: int, d: int) -> float:
    """``1 - ((4 delta)^((1+kappa)/kappa) T + log 2) / (d/8)``, averaged over the packing."""
    return 1.0 - ((4.0 * delta) ** ((1.0 + kappa) / kappa) * T + math.log(2.0)) / (d / 8.0)


def floor_single_small(delta: float, kappa: float, T: int) -> float:
    """``(1/2)(1 - sqrt((4 delta)^((1+kappa)/kappa) T / 2))``, worst vertex, ``d = 1``."""
    return 0.5 * (1.0 - math.sqrt((4.0 * delta) ** ((1.0 + kappa) / kappa) * T / 2.0))


def floor_multi_large(delta: float, d: int) -> float:
    """``1 - (16 d delta^2 + log 2) / (d/8)``, averaged over the packing."""
    return 1.0 - (16.0 * d * delta**2 + math.log(2.0)) / (d / 8.0)


def floor_single_large(delta: float) -> float:
    """``1 - sqrt(8 delta^2)``, worst vertex, ``d = 1``."""
    return 1.0 - math.sqrt(8.0 * delta**2)


def hard_delta(regime: str, kappa: float, d: int, T: int) -> float:
    """The ``delta`` used to instantiate each lower bound."""
    if regime == "small":
        return min(0.125, (d / T) ** (kappa / (1.0 + kappa)) / 32.0)
    if regime == "large":
        return 0.01
    raise ValueError("regime must be 'small' or 'large'")


def lower_rate(regime: str, kappa: float, q: float, d: int, T: int, lipschitz: float = 1.0, radius: float = 1.0) -> float:
    """``RL (d/T)^(k/(1+k))`` (small) or ``RL d^(1-1/q) T^(-k/(1+k))`` (large)."""
    e = kappa / (1.0 + kappa)
    if regime == "small":
        return radius * lipschitz * (d / T) ** e
    dq = d if math.isinf(q) else d ** (1.0 - 1.0 / q)
    return radius * lipschitz * dq * T ** (-e)


def regime_for(q: float, kappa: float) -> str:
    return "small" if q <= 1.0 + kappa else "large"


def vertex_gaps(inst: HardInstance, packing: Packing, x_bar) -> np.ndarray:
    """``g_alpha(x_bar) - min g_alpha`` for every vertex of the packing."""
    return inst.with_alpha(packing.vertices).value(np.asarray(x_bar, dtype=float)) - inst.f_star


def nearest_vertex_index(x_bar, packing: Packing, inst: HardInstance) -> int:
    # np.argmin keeps the first of tied entries
    return int(np.argmin(vertex_gaps(inst, packing, x_bar)))


def nearest_vertex_estimator(x_bar, packing: Packing, inst: HardInstance) -> np.ndarray:
    """Vertex whose objective is closest to optimal at ``x_bar``; ties go to the lowest index."""
    return packing.vertices[nearest_vertex_index(x_bar, packing, inst)]


def packing_separation(inst: HardInstance, packing: Packing, box: Box) -> float:
    """Smallest pairwise discrepancy over the packing, computed coordinate-wise."""
    if len(packing) < 2:
        raise ValueError("need at least two vertices")
    best = math.inf
    v = packing.vertices
    for i in range(len(v)):
        for j in range(i + 1, len(v)):
            best = min(best, discrepancy_rho(inst.with_alpha(v[i]), inst.with_alpha(v[j]), box))
    return best


def _log_lik_margins(inst: HardInstance, rng: np.random.Generator, T: int) -> np.ndarray:
    """Per-coordinate ``loglik(+1) - loglik(-1)`` from the raw coin outcomes.

    Uniforms are drawn with the oracle's layout, so the coins match what a
    solver would have seen from the same stream.
    """
    d = inst.dim
    margin = np.zeros(d)
    a = np.asarray(inst.alpha, dtype=float)
    if inst.regime == "small":
        q_plus, q_minus = 0.75 * inst.bern_p, 0.25 * inst.bern_p
        seen, kept = np.zeros(d), np.zeros(d)
        for start in range(0, T, BLOCK):
            u = rng.random((min(BLOCK, T - start), inst.n_uniforms))
            i = np.minimum((u[:, 0] * d).astype(int), d - 1)
            keep = u[:, 1] >= 1.0 - (2.0 + a[i]) / 4.0 * inst.bern_p
            seen += np.bincount(i, minlength=d)
            kept += np.bincount(i, weights=keep, minlength=d)
        margin = kept * math.log(q_plus / q_minus) + (seen - kept) * math.log((1 - q_plus) / (1 - q_minus))
        return margin
    hi, lo = 0.5 + inst.delta, 0.5 - inst.delta
    fired, ones = 0, np.zeros(d)
    for start in range(0, T, BLOCK):
        u = rng.random((min(BLOCK, T - start), inst.n_uniforms))
        fire = u[:, 0] < 1.0 / inst.horizon
        fired += int(fire.sum())
        ones += np.sum(u[fire, 1:] < 0.5 + a * inst.delta, axis=0)
    if inst.delta == 0:
        return margin
    return (2.0 * ones - fired) * math.log(hi / lo)


@dataclass(frozen=True)
class GameResult:
    misid_rate: float
    ci_low: float
    ci_high: float
    trials: int
    packing_size: int
    vertex_rates: np.ndarray  # per packing vertex; nan where never drawn

    @property
    def worst_vertex_rate(self) -> float:
        return float(np.nanmax(self.vertex_rates))


def identification_game(
    regime: str,
    d: int,
    delta: float,
    T: int,
    trials: int,
    algorithm: str = "smd",
    *,
    kappa: float = 0.5,
    q: float | None = None,
    lipschitz: float = 1.0,
    radius: float = 1.0,
    seed: int = 0,
    packing: Packing | None = None,
    balanced: bool = False,
) -> GameResult:
    """Play the identification game and report the misidentification rate.

    Each trial draws ``alpha`` from the packing (uniformly, or cycling over
    the vertices when ``balanced``), gives ``algorithm`` ``T`` queries to the
    matching hard oracle and estimates ``alpha``:

    ``smd``     nearest vertex to SMD's averaged iterate,
    ``mle``     maximum likelihood over the packing from the raw coin outcomes,
    ``random``  a uniform guess.

    With ``T = 0`` no data exist and every estimator falls back to its
    data-free choice.
    """
    if algorithm not in ESTIMATORS:
        raise ValueError(f"algorithm must be one of {ESTIMATORS}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if T < 0:
        raise ValueError("T must be >= 0")
    if q is None:
        q = 1.0 if regime == "small" else 2.0
    if packing is None:
        packing = greedy_packing(d, seeded_rng(seed, 0))
    if packing.dim != d:
        raise ValueError("packing dimension does not match d")
    n_v = len(packing)
    if balanced:
        idx = np.arange(trials) % n_v
    else:
        idx = seeded_rng(seed, 1).integers(n_v, size=trials)
    alphas = packing.vertices[idx]
    template = HardInstance(
        packing.vertices[0], regime, delta, kappa, lipschitz, radius, q, horizon=max(T, 1)
    )
    rngs = [seeded_rng(seed, 2 + k) for k in range(trials)]

    if algorithm == "random":
        guess = np.array([r.integers(n_v) for r in rngs])
    elif algorithm == "mle":
        guess = np.empty(trials, dtype=int)
        for k in range(trials):
            margin = _log_lik_margins(template.with_alpha(alphas[k]), rngs[k], T)
            guess[k] = int(np.argmax(packing.vertices @ margin))
    else:
        box = Box(radius, d)
        if T == 0:
            x_bars = np.zeros((trials, d))
        else:
            cfg = RunConfig("smd", box, T, mirror=resolve_map(q, kappa, d))
            traces = run_batch(cfg, template.with_alpha(alphas), rngs)
            x_bars = np.stack([t.x_bar for t in traces])
        guess = np.array([nearest_vertex_index(x, packing, template) for x in x_bars])

    wrong = guess != idx
    k = int(wrong.sum())
    ci = binomtest(k, trials).proportion_ci(confidence_level=0.95)
    counts = np.bincount(idx, minlength=n_v)
    errs = np.bincount(idx, weights=wrong, minlength=n_v)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_vertex = np.where(counts > 0, errs / np.maximum(counts, 1), np.nan)
    return GameResult(k / trials, float(ci.low), float(ci.high), trials, n_v, per_vertex)


def minimax_gap_experiment(
    kappa: float,
    q: float,
    d: int,
    T_grid: Sequence[int],
    trials: int,
    *,
    lipschitz: float = 1.0,
    radius: float = 1.0,
    seed: int = 0,
) -> list[dict]:
    """Mean SMD error on the matched hard family, scaled by the lower-bound rate.

    For each ``T`` the family and ``delta`` follow the lower-bound
    construction, ``alpha`` is drawn uniformly from the hypercube per trial,
    and the table reports the error relative to the lower-bound rate and to
    the mirror-descent upper bound ``R0 L T^(-kappa/(1+kappa))``.
    """
    regime = regime_for(q, kappa)
    m = resolve_map(q, kappa, d)
    box = Box(radius, d)
    rows = []
    for j, T in enumerate(T_grid):
        T = int(T)
        delta = hard_delta(regime, kappa, d, T)
        alphas = 2.0 * seeded_rng(seed, 10_000 + j).integers(0, 2, size=(trials, d)) - 1.0
        inst = HardInstance(alphas, regime, delta, kappa, lipschitz, radius, q, horizon=T)
        rngs = [seeded_rng(seed, 20_000 + j * trials + k) for k in range(trials)]
        traces = run_batch(RunConfig("smd", box, T, mirror=m), inst, rngs)
        err = np.array([t.final_error for t in traces])
        rate = lower_rate(regime, kappa, q, d, T, lipschitz, radius)
        upper = r0(m, radius, d) * lipschitz * T ** (-kappa / (1.0 + kappa))
        rows.append(
            {
                "T": T,
                "regime": regime,
                "delta": delta,
                "p": m.p,
                "mean_error": float(err.mean()),
                "rate": rate,
                "ratio": float(err.mean()) / rate,
                "upper_bound": upper,
            }
        )
    return rows
