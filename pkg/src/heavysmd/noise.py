"""Symmetrized Pareto noise with finite (1+kappa)-th moment and infinite variance.

A draw is ``X = +/- s * U^(-1/beta)`` with ``U`` uniform on (0, 1] and an
independent fair sign, so ``|X| >= s`` and

    E|X|^m = beta * s^m / (beta - m)    for m < beta.

All randomness is taken from ``Generator.random`` so that block draws and
one-at-a-time draws consume a stream identically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mirror import check_kappa
from .norms import check_exponent


def seeded_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Generator for stream ``stream`` of root seed ``seed``.

    Streams are split with ``SeedSequence(seed, spawn_key=(stream,))``, so
    distinct stream ids are statistically independent and adding streams
    never changes existing ones.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(stream),))))


@dataclass(frozen=True)
class NoiseSpec:
    tail_index: float
    scale: float
    kappa: float

    def __post_init__(self):
        check_kappa(self.kappa)
        if not 1.0 + self.kappa < self.tail_index < 2.0:
            raise ValueError(
                f"tail index must lie in (1+kappa, 2) = ({1 + self.kappa}, 2), got {self.tail_index}"
            )
        if self.scale < 0:
            raise ValueError("noise scale must be nonnegative")

    def abs_moment(self, m: float) -> float:
        """``E|X|^m``; infinite for ``m >= beta``."""
        if m >= self.tail_index:
            return math.inf
        return self.tail_index * self.scale**m / (self.tail_index - m)


def pareto_from_uniforms(spec: NoiseSpec, u_mag, u_sign) -> np.ndarray:
    """Map two uniform [0, 1) arrays to symmetric Pareto draws."""
    mag = spec.scale * (1.0 - np.asarray(u_mag)) ** (-1.0 / spec.tail_index)
    return np.where(np.asarray(u_sign) < 0.5, -mag, mag)


def sample_sym_pareto(spec: NoiseSpec, rng: np.random.Generator, size=None):
    shape = () if size is None else (size if isinstance(size, tuple) else (size,))
    u = rng.random((2,) + shape)
    out = pareto_from_uniforms(spec, u[0], u[1])
    return float(out) if size is None else out


def moment_bound(spec: NoiseSpec, q: float, dim: int, lipschitz: float) -> float:
    """Certified ``sigma`` with ``E||v + xi||_q^(1+kappa) <= sigma^(1+kappa)``.

    Valid for any ``||v||_q <= lipschitz`` and ``xi`` with i.i.d. coordinates
    drawn from ``spec``. Uses ``(a+b)^m <= 2^(m-1)(a^m + b^m)`` and
    ``E||xi||_q^m <= d^max(1, m/q) E|X|^m`` with ``m = 1 + kappa``.
    """
    q = check_exponent(q)
    if lipschitz < 0:
        raise ValueError("Lipschitz constant must be nonnegative")
    m = 1.0 + spec.kappa
    if m >= spec.tail_index:
        raise ValueError("the (1+kappa)-th moment is infinite for this tail index")
    ratio = 0.0 if math.isinf(q) else m / q
    noise = float(dim) ** max(1.0, ratio) * spec.abs_moment(m)
    total = 2.0**spec.kappa * (lipschitz**m + noise)
    return total ** (1.0 / m)


def hill_estimator(samples, tail_fraction: float = 0.01) -> float:
    """Hill estimate of the tail index from the largest ``|samples|``."""
    a = np.sort(np.abs(np.asarray(samples, dtype=float)))[::-1]
    k = max(2, int(len(a) * tail_fraction))
    if k >= len(a):
        raise ValueError("not enough samples for the requested tail fraction")
    logs = np.log(a[:k]) - np.log(a[k])
    return float(1.0 / np.mean(logs))


def median_of_means(values, groups: int = 30, axis: int = 0):
    """Median over ``groups`` contiguous block means; robust under heavy tails."""
    v = np.asarray(values, dtype=float)
    v = np.moveaxis(v, axis, 0)
    n = (v.shape[0] // groups) * groups
    if n == 0:
        raise ValueError("fewer samples than groups")
    blocks = v[:n].reshape((groups, n // groups) + v.shape[1:]).mean(axis=1)
    return np.median(blocks, axis=0)
