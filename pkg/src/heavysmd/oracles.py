"""Stochastic first-order oracles.

Every oracle consumes a fixed number of uniforms per query
(``n_uniforms``) and maps them to a response with :meth:`respond`, which
works on a batch of query points. ``query`` is the one-point convenience
wrapper. Splitting randomness from the response lets the solvers draw all
randomness for many steps at once without changing any stream.

Subgradients at kinks select the zero element (``sgn(0) = 0``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .mirror import DualVec
from .noise import NoiseSpec, moment_bound, pareto_from_uniforms
from .norms import _scaled_vpow, as_vec, check_exponent, dual_exponent, p_norm
from .projection import Box


class OracleResponse(NamedTuple):
    f_hat: float
    g_hat: DualVec


class Oracle:
    """Shared plumbing; subclasses define ``dim``, ``n_uniforms``, ``value``,
    ``subgradient``, ``f_star``, ``sigma`` and ``respond``."""

    dim: int
    n_uniforms: int

    def query(self, x, rng: np.random.Generator) -> OracleResponse:
        x = as_vec(x)
        u = rng.random((1, self.n_uniforms))
        f, g = self.respond(x[None, :], u)
        return OracleResponse(float(f[0]), DualVec(g[0]))

    def error(self, x) -> np.ndarray | float:
        """``f(x) - min f`` with the deterministic objective."""
        return self.value(x) - self.f_star


@dataclass(frozen=True)
class SyntheticOracle(Oracle):
    """``f(x) = L ||x - target||_{q*}`` with additive symmetric Pareto noise.

    ``f`` is L-Lipschitz in the ``q*``-norm and every selected subgradient
    has ``q``-norm exactly ``L`` away from the target.
    """

    target: np.ndarray
    lipschitz: float
    q: float
    noise: NoiseSpec

    def __post_init__(self):
        object.__setattr__(self, "target", as_vec(self.target, "target"))
        check_exponent(self.q)

    @property
    def dim(self) -> int:
        return self.target.shape[-1]

    @property
    def n_uniforms(self) -> int:
        return 2 * self.dim + 2

    @property
    def q_star(self) -> float:
        return dual_exponent(self.q)

    @property
    def f_star(self) -> float:
        return 0.0

    @property
    def sigma(self) -> float:
        return moment_bound(self.noise, self.q, self.dim, self.lipschitz)

    def value(self, x):
        return self.lipschitz * p_norm(np.asarray(x) - self.target, self.q_star)

    def subgradient(self, x) -> np.ndarray:
        z = np.atleast_2d(np.asarray(x, dtype=float) - self.target)
        qs = self.q_star
        if math.isinf(qs):
            g = np.zeros_like(z)
            j = np.argmax(np.abs(z), axis=1)
            rows = np.arange(z.shape[0])
            g[rows, j] = np.sign(z[rows, j])
        elif qs == 1.0:
            g = np.sign(z)
        else:
            g = _scaled_vpow(z, qs, 1.0 - qs)
        g = self.lipschitz * g
        return g[0] if np.ndim(x) == 1 else g

    def respond(self, x, u):
        x = np.atleast_2d(x)
        d = self.dim
        xi = pareto_from_uniforms(self.noise, u[:, :d], u[:, d : 2 * d])
        zeta = pareto_from_uniforms(self.noise, u[:, 2 * d], u[:, 2 * d + 1])
        return self.value(x) + zeta, self.subgradient(x) + xi


def synthetic_oracle(target, lipschitz, q, spec: NoiseSpec, x, rng) -> OracleResponse:
    return SyntheticOracle(np.asarray(target, dtype=float), lipschitz, q, spec).query(x, rng)


REGIMES = ("small", "large")


@dataclass(frozen=True)
class HardInstance(Oracle):
    """One member ``g_alpha`` of the adversarial families and its coin-toss oracle.

    ``regime="small"`` is the family for ``q <= 1+kappa``: the oracle reveals
    one uniformly chosen coordinate, and only when a rare coin with failure
    probability ``(2+alpha_i)/4 * bern_p`` fires. ``regime="large"`` is the
    family for ``q > 1+kappa``: with probability ``1/T`` all coordinates are
    revealed through ``Ber(1/2 + alpha_i delta)`` coins.

    ``alpha`` may also be a batch ``(n, d)`` whose rows pair with the rows of
    a batched query, so runs against different vertices share one batch.
    """

    alpha: np.ndarray
    regime: str
    delta: float
    kappa: float
    lipschitz: float = 1.0
    radius: float = 1.0
    q: float = 1.0
    horizon: int | None = None

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float)
        if a.ndim not in (1, 2) or a.size == 0 or not np.all(np.abs(a) == 1.0):
            raise ValueError("alpha must be a vector (or a batch of rows) of +/-1")
        object.__setattr__(self, "alpha", a)
        if self.regime not in REGIMES:
            raise ValueError(f"regime must be one of {REGIMES}")
        limit = 1 / 8 if self.regime == "small" else 1 / 100
        if not 0.0 <= self.delta <= limit:
            raise ValueError(f"delta must lie in (0, {limit}] for the {self.regime} regime")
        if not 0.0 < self.kappa <= 1.0:
            raise ValueError("kappa must lie in (0, 1]")
        if self.regime == "large" and (self.horizon is None or self.horizon < 1):
            raise ValueError("the large regime needs a horizon T >= 1")
        check_exponent(self.q)

    def with_alpha(self, alpha) -> "HardInstance":
        return replace(self, alpha=np.asarray(alpha, dtype=float))

    @property
    def dim(self) -> int:
        return self.alpha.shape[-1]

    @property
    def n_uniforms(self) -> int:
        return 2 if self.regime == "small" else 1 + self.dim

    @property
    def bern_p(self) -> float:
        return (4.0 * self.delta) ** ((self.kappa + 1.0) / self.kappa)

    @property
    def big_lambda(self) -> float:
        return 0.5 * self.bern_p ** (-1.0 / (1.0 + self.kappa))

    @property
    def prefactor(self) -> float:
        """``L / (T^(kappa/(1+kappa)) d^(1/q))`` of the large family."""
        dq = 1.0 if math.isinf(self.q) else self.dim ** (1.0 / self.q)
        return self.lipschitz / (self.horizon ** (self.kappa / (1.0 + self.kappa)) * dq)

    @property
    def sigma(self) -> float:
        return self.lipschitz

    @property
    def minimizer(self) -> np.ndarray:
        return -self.radius * self.alpha

    @property
    def f_star(self) -> float:
        if self.regime == "small":
            return 0.0
        return self.prefactor * self.dim * self.radius * (1.0 - 2.0 * self.delta)

    def coordinate_values(self, x) -> np.ndarray:
        """Per-coordinate terms of ``g_alpha``; they sum to :meth:`value`."""
        x = np.asarray(x, dtype=float)
        a, R = self.alpha, self.radius
        plus, minus = np.abs(x + R), np.abs(x - R)
        if self.regime == "small":
            w = (2.0 + a) / 4.0 * self.delta
            return self.lipschitz / self.dim * w * ((1.0 + a) * plus + (1.0 - a) * minus)
        return self.prefactor * ((0.5 + a * self.delta) * plus + (0.5 - a * self.delta) * minus)

    def value(self, x):
        return np.sum(self.coordinate_values(x), axis=-1)

    def subgradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        a, R = self.alpha, self.radius
        sp, sm = np.sign(x + R), np.sign(x - R)
        if self.regime == "small":
            w = (2.0 + a) / 4.0 * 2.0 * self.delta
            return self.lipschitz / self.dim * w * _h_slope(a, sp, sm)
        return self.prefactor * ((0.5 + a * self.delta) * sp + (0.5 - a * self.delta) * sm)

    def respond(self, x, u):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        u = np.atleast_2d(u)
        n, d = x.shape
        R = self.radius
        rows = np.arange(n)
        if self.regime == "small":
            i = np.minimum((u[:, 0] * d).astype(int), d - 1)
            a = self.alpha[i] if self.alpha.ndim == 1 else self.alpha[rows, i]
            keep = u[:, 1] >= 1.0 - (2.0 + a) / 4.0 * self.bern_p  # the (1 - b) factor
            xi = x[rows, i]
            amp = np.where(keep, self.lipschitz * self.big_lambda, 0.0)
            f = amp * 0.5 * ((1.0 + a) * np.abs(xi + R) + (1.0 - a) * np.abs(xi - R))
            g = np.zeros_like(x)
            g[rows, i] = amp * _h_slope(a, np.sign(xi + R), np.sign(xi - R))
            return f, g
        fire = u[:, 0] < 1.0 / self.horizon
        b = u[:, 1:] < 0.5 + self.alpha * self.delta
        dq = 1.0 if math.isinf(self.q) else d ** (1.0 / self.q)
        amp = np.where(fire, self.lipschitz * self.horizon ** (1.0 / (1.0 + self.kappa)) / dq, 0.0)
        plus, minus = np.abs(x + R), np.abs(x - R)
        f = amp * np.sum(np.where(b, plus, minus), axis=1)
        g = amp[:, None] * np.where(b, np.sign(x + R), np.sign(x - R))
        return f, g


def _h_slope(a, sign_plus, sign_minus):
    # derivative of h(a, x) = ((1+a)|x+R| + (1-a)|x-R|) / 2
    return 0.5 * ((1.0 + a) * sign_plus + (1.0 - a) * sign_minus)


def g_alpha_value_small(inst: HardInstance, x):
    if inst.regime != "small":
        raise ValueError("instance is not in the small regime")
    return inst.value(x)


def g_alpha_value_large(inst: HardInstance, x):
    if inst.regime != "large":
        raise ValueError("instance is not in the large regime")
    return inst.value(x)


def oracle_small(inst: HardInstance, x, rng) -> OracleResponse:
    if inst.regime != "small":
        raise ValueError("instance is not in the small regime")
    return inst.query(x, rng)


def oracle_large(inst: HardInstance, x, rng) -> OracleResponse:
    if inst.regime != "large":
        raise ValueError("instance is not in the large regime")
    return inst.query(x, rng)


def _box_min(f, box: Box, grid: int) -> float:
    if hasattr(f, "coordinate_values"):
        # separable and piecewise linear with kinks only at +/-R: a grid
        # containing both endpoints minimizes each coordinate exactly
        t = np.linspace(-box.radius, box.radius, 2 * grid + 1)
        pts = np.broadcast_to(t[:, None], (t.size, box.dim))
        return float(np.sum(np.min(f.coordinate_values(pts), axis=0)))
    if box.dim > 3:
        raise ValueError("grid minimization is limited to d <= 3")
    t = np.linspace(-box.radius, box.radius, grid + 1)
    pts = np.stack(np.meshgrid(*([t] * box.dim), indexing="ij"), axis=-1).reshape(-1, box.dim)
    return float(np.min(f.value(pts)))


class _Sum:
    def __init__(self, a, b):
        self.a, self.b = a, b

    def value(self, x):
        return self.a.value(x) + self.b.value(x)

    def coordinate_values(self, x):
        return self.a.coordinate_values(x) + self.b.coordinate_values(x)


def discrepancy_rho(f_a, f_b, box: Box, grid: int = 200) -> float:
    """``inf_box [f_a + f_b] - min f_a - min f_b``.

    Objects exposing ``coordinate_values`` are minimized coordinate by
    coordinate (exact for the hard families); anything else with a vectorized
    ``value`` is minimized on a grid, for ``d <= 3``.
    """
    both = hasattr(f_a, "coordinate_values") and hasattr(f_b, "coordinate_values")
    s = _Sum(f_a, f_b)
    if not both:
        s = type("_Val", (), {"value": staticmethod(s.value)})()
    return _box_min(s, box, grid) - _box_min(f_a, box, grid) - _box_min(f_b, box, grid)
