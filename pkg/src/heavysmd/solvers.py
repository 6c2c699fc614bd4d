"""Stochastic mirror descent and Euclidean baselines.

All three methods share one engine that advances a batch of independent
runs in lock-step. Each run owns its generator and draws its oracle
uniforms in fixed-size blocks, so a run's trace does not depend on which
other runs share its batch.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .mirror import MirrorMap, r0
from .norms import as_vec
from .projection import Box, ProjectionError, project_dual

ALGOS = ("smd", "sgd", "clipped_sgd")
BLOCK = 2048  # oracle uniforms drawn per generator call


@dataclass(frozen=True)
class RunConfig:
    algo: str
    box: Box
    horizon: int
    eta: float | str = "auto"
    seed: int = 0
    mirror: MirrorMap | None = None
    clip: float | None = None
    kappa: float | None = None

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise ValueError(f"algo must be one of {ALGOS}")
        if self.horizon < 1:
            raise ValueError("T must be >= 1")
        if self.algo == "smd" and self.mirror is None:
            raise ValueError("smd needs a mirror map")
        if self.eta != "auto" and not float(self.eta) > 0:
            raise ValueError("eta must be positive or 'auto'")
        if self.clip is not None and not self.clip > 0:
            raise ValueError("clip threshold must be positive")

    @property
    def moment_kappa(self) -> float:
        if self.kappa is not None:
            return self.kappa
        if self.mirror is not None:
            return self.mirror.kappa
        raise ValueError("kappa is needed to resolve the step size")


@dataclass(frozen=True)
class Trace:
    x_bar: np.ndarray
    checkpoints: tuple[tuple[int, float], ...]
    wall_time: float
    eta: float
    iterates: np.ndarray | None = None

    @property
    def final_error(self) -> float:
        return self.checkpoints[-1][1]


def step_size_auto(r0: float, sigma: float, kappa: float, T: int) -> float:
    """``R0^(1/kappa) / sigma * T^(-1/(1+kappa))``."""
    if min(r0, sigma, kappa, T) <= 0:
        raise ValueError("all inputs must be positive")
    return r0 ** (1.0 / kappa) / sigma * T ** (-1.0 / (1.0 + kappa))


def resolve_eta(cfg: RunConfig, sigma: float) -> float:
    if cfg.eta != "auto":
        return float(cfg.eta)
    kappa = cfg.moment_kappa
    if cfg.algo == "smd":
        return step_size_auto(r0(cfg.mirror, cfg.box.radius, cfg.box.dim), sigma, kappa, cfg.horizon)
    # baselines: Euclidean radius of the box over sigma, same horizon exponent
    return cfg.box.radius * math.sqrt(cfg.box.dim) / sigma * cfg.horizon ** (-1.0 / (1.0 + kappa))


def resolve_clip(cfg: RunConfig, sigma: float) -> float:
    if cfg.clip is not None:
        return cfg.clip
    return sigma * cfg.horizon ** (1.0 / (1.0 + cfg.moment_kappa))


def checkpoint_times(T: int) -> list[int]:
    ts, t = [], 1
    while t < T:
        ts.append(t)
        t *= 2
    ts.append(T)
    return ts


def smd_update(m: MirrorMap, x, g, eta: float, radius: float) -> np.ndarray:
    """Mirror step followed by the Bregman projection onto the box."""
    theta = m.grad(x) - eta * np.asarray(g)
    y = m.grad_conj(theta)
    inside = np.max(np.abs(y), axis=-1) <= radius
    if np.all(inside):
        return y
    x_new = project_dual(m, theta, radius)
    if np.ndim(y) == 1:
        return x_new
    return np.where(inside[:, None], y, x_new)


def sgd_update(x, g, eta: float, radius: float) -> np.ndarray:
    return np.clip(x - eta * np.asarray(g), -radius, radius)


def clip_gradient(g, tau: float) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    norm = np.linalg.norm(g, axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.minimum(1.0, np.where(norm > 0, tau / norm, 1.0))
    return g * factor


def run_batch(cfg: RunConfig, oracle, rngs: Sequence[np.random.Generator], record: bool = False) -> list[Trace]:
    """Run one independent trajectory per generator; returns one trace each."""
    d = cfg.box.dim
    if oracle.dim != d:
        raise ValueError(f"oracle dimension {oracle.dim} does not match the box ({d})")
    n, T, R = len(rngs), cfg.horizon, cfg.box.radius
    sigma = oracle.sigma
    eta = resolve_eta(cfg, sigma)
    tau = resolve_clip(cfg, sigma) if cfg.algo == "clipped_sgd" else None
    marks = set(checkpoint_times(T))
    errors: list[tuple[int, np.ndarray]] = []
    x = np.zeros((n, d))
    total = np.zeros((n, d))
    its = np.empty((T + 1, n, d)) if record else None
    k = oracle.n_uniforms
    start = time.perf_counter()
    for block in range(0, T, BLOCK):
        m = min(BLOCK, T - block)
        u = np.stack([rng.random((m, k)) for rng in rngs], axis=1)
        for j in range(m):
            t = block + j
            if record:
                its[t] = x
            total += x
            if t + 1 in marks:
                errors.append((t + 1, np.asarray(oracle.error(total / (t + 1)), dtype=float)))
            _, g = oracle.respond(x, u[j])
            if cfg.algo == "smd":
                try:
                    x = smd_update(cfg.mirror, x, g, eta, R)
                except ProjectionError as exc:
                    exc.step = t
                    raise
            elif cfg.algo == "sgd":
                x = sgd_update(x, g, eta, R)
            else:
                x = sgd_update(x, clip_gradient(g, tau), eta, R)
    if record:
        its[T] = x
    wall = (time.perf_counter() - start) / max(n, 1)
    x_bar = total / T
    return [
        Trace(
            x_bar=x_bar[i].copy(),
            checkpoints=tuple((t, float(e[i])) for t, e in errors),
            wall_time=wall,
            eta=eta,
            iterates=None if its is None else its[:, i].copy(),
        )
        for i in range(n)
    ]


def _run_one(cfg: RunConfig, oracle, rng, algo: str, record: bool) -> Trace:
    if cfg.algo != algo:
        raise ValueError(f"config algo is {cfg.algo!r}, expected {algo!r}")
    return run_batch(cfg, oracle, [rng], record=record)[0]


def smd_run(cfg: RunConfig, oracle, rng: np.random.Generator, record: bool = False) -> Trace:
    """Stochastic mirror descent from ``x0 = 0`` (the minimizer of ``U_p``)."""
    return _run_one(cfg, oracle, rng, "smd", record)


def sgd_run(cfg: RunConfig, oracle, rng: np.random.Generator, record: bool = False) -> Trace:
    return _run_one(cfg, oracle, rng, "sgd", record)


def clipped_sgd_run(cfg: RunConfig, oracle, rng: np.random.Generator, record: bool = False) -> Trace:
    """SGD on ``g * min(1, tau / ||g||_2)``; ``tau`` defaults to ``sigma T^(1/(1+kappa))``."""
    return _run_one(cfg, oracle, rng, "clipped_sgd", record)


def smd_step_unprojected(m: MirrorMap, x, g, eta: float) -> np.ndarray:
    """``grad psi*(grad psi(x) - eta g)`` for any map."""
    return m.grad_conj(m.grad(as_vec(x)) - eta * np.asarray(g))


def single_step_response(m: MirrorMap, x, g, eta: float) -> np.ndarray:
    """Unprojected step of the ``p = 2`` map in closed form.

    With ``z = x ||x||^(1/kappa - 1) - eta g / 10^(1/kappa)`` the image is
    ``z / ||z||^(1-kappa)``, so its norm grows like ``||g||^kappa``.
    """
    if m.p != 2.0:
        raise ValueError("the closed form holds for the p = 2 map only")
    x = as_vec(x)
    g = np.asarray(g, dtype=float)
    k = m.kappa
    nx = np.linalg.norm(x, axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        lifted = np.where(nx > 0, x * nx ** (1.0 / k - 1.0), 0.0)
    z = lifted - eta / 10.0 ** (1.0 / k) * g
    nz = np.linalg.norm(z, axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(nz > 0, z / nz ** (1.0 - k), 0.0)
