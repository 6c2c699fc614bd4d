"""Randomized checks of the inequalities behind the convergence analysis.

Each check draws a batch of random instances for one parameter cell and
returns the margin ``rhs - lhs`` of every instance. A violation is a margin
below ``-SLACK * scale``, where ``scale`` is the largest magnitude among the
terms compared; the terms are differences of nearly equal numbers, so an
absolute slack would test rounding rather than the inequality.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .mirror import k_p, phi_grad, phi_star_grad, phi_star_value, phi_value
from .norms import _scaled_vpow, dual_exponent, inner, norm_power, p_norm, vpow

SLACK = 1e-9
KAPPAS = (0.3, 0.5, 1.0)
DIMS = (2, 8, 32)


@dataclass(frozen=True)
class CheckResult:
    name: str
    cell: dict
    samples: int
    violations: int
    worst: float  # most negative scaled margin

    @property
    def ok(self) -> bool:
        return self.violations == 0


def random_vectors(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    """Gaussian directions with magnitudes spread over four decades and some exact zeros."""
    v = rng.standard_normal((n, d)) * 10.0 ** rng.uniform(-2, 2, size=(n, 1))
    v[rng.random((n, d)) < 0.1] = 0.0
    return v


def _margins(lhs, rhs, *terms) -> tuple[np.ndarray, np.ndarray]:
    scale = np.maximum.reduce([np.abs(np.asarray(t, dtype=float)) for t in (lhs, rhs) + terms])
    return np.asarray(rhs - lhs, dtype=float), np.maximum(scale, 1e-300)


def _nonzero_rows(x: np.ndarray) -> np.ndarray:
    # the h construction needs x != 0; patch all-zero rows instead of dropping them
    x[~np.any(x != 0, axis=1), 0] = 1.0
    return x


# each check takes (rng, n, **cell) and returns (margin, scale)

def smoothness_phi(rng, n, p, kappa, d):
    """phi(y) <= phi(x) + <grad phi(x), y-x> + K_p/(1+k) ||x-y||_p^(1+k)."""
    x, y = random_vectors(rng, n, d), random_vectors(rng, n, d)
    fx, fy = phi_value(p, kappa, x), phi_value(p, kappa, y)
    lin = inner(phi_grad(p, kappa, x), y - x)
    quad = k_p(p, kappa) / (1 + kappa) * norm_power(x - y, p, 1 + kappa)
    return _margins(fy, fx + lin + quad, fx, lin, quad)


def convexity_phi_star(rng, n, p, kappa, d):
    """phi*(y) >= phi*(x) + <grad phi*(x), y-x> + K_p^(-1/k) k/(1+k) ||x-y||_{p*}^((1+k)/k)."""
    x, y = random_vectors(rng, n, d), random_vectors(rng, n, d)
    ps, r = dual_exponent(p), (1 + kappa) / kappa
    fx, fy = phi_star_value(p, kappa, x), phi_star_value(p, kappa, y)
    lin = inner(phi_star_grad(p, kappa, x), y - x)
    curv = k_p(p, kappa) ** (-1 / kappa) * kappa / (1 + kappa) * norm_power(x - y, ps, r)
    return _margins(fx + lin + curv, fy, fx, lin, curv)


def conjugate_norm(rng, n, p, kappa, d):
    """Fenchel-Young equality at the maximizer: <y, x> - phi(x) = phi*(y) for y = grad phi(x)."""
    x = random_vectors(rng, n, d)
    y = phi_grad(p, kappa, x)
    lhs = inner(y, x) - phi_value(p, kappa, x)
    rhs = phi_star_value(p, kappa, y)
    # an equality: both orientations must hold
    m1, s = _margins(lhs, rhs, inner(y, x))
    m2, _ = _margins(rhs, lhs, inner(y, x))
    return np.minimum(m1, m2), s


def _h_of(x, y, p):
    coef = inner(vpow(x, p), y) / norm_power(x, p, p)
    return coef[:, None] * x


def projection_identity(rng, n, p, kappa, d):
    """<vpow(x), y> = <vpow(x), h> and ||h||_p <= ||y||_p."""
    x, y = _nonzero_rows(random_vectors(rng, n, d)), random_vectors(rng, n, d)
    h = _h_of(x, y, p)
    a, b = inner(vpow(x, p), y), inner(vpow(x, p), h)
    m_eq = -np.abs(a - b)
    s_eq = np.maximum(np.abs(a), np.abs(b)) + np.sum(np.abs(vpow(x, p) * y), axis=1)
    m_norm, s_norm = _margins(p_norm(h, p), p_norm(y, p))
    # report the worse of the two parts per instance
    ratio_eq, ratio_norm = m_eq / np.maximum(s_eq, 1e-300), m_norm / s_norm
    return np.minimum(ratio_eq, ratio_norm), np.ones_like(ratio_eq)


def orthogonality(rng, n, p, r, d):
    """<grad (1/r)||.||_p^r (x+h), y-h> = 0."""
    x, y = _nonzero_rows(random_vectors(rng, n, d)), random_vectors(rng, n, d)
    h = _h_of(x, y, p)
    g = _scaled_vpow(x + h, p, r - p)
    val = inner(g, y - h)
    scale = np.sum(np.abs(g * (y - h)), axis=1) + np.sum(np.abs(g * y), axis=1)
    return -np.abs(val), np.maximum(scale, 1e-300)


def smoothness_along_x(rng, n, p, kappa, d):
    """||x+h||^(1+k) - ||x||^(1+k) - (1+k)||x||^(1+k-p)<vpow(x), h> <= 2||h||^(1+k)."""
    x, y = _nonzero_rows(random_vectors(rng, n, d)), random_vectors(rng, n, d)
    h = _h_of(x, y, p)
    a = norm_power(x + h, p, 1 + kappa)
    b = norm_power(x, p, 1 + kappa)
    lin = (1 + kappa) * inner(_scaled_vpow(x, p, 1 + kappa - p), h)
    rhs = 2.0 * norm_power(h, p, 1 + kappa)
    return _margins(a - b - lin, rhs, a, b, lin)


def power_smoothness_small_p(rng, n, p, d):
    """For p in (1, 2]: ||x+y||_p^p - ||x||_p^p - p<vpow(x), y> <= 2||y||_p^p."""
    x, y = random_vectors(rng, n, d), random_vectors(rng, n, d)
    a, b = norm_power(x + y, p, p), norm_power(x, p, p)
    lin = p * inner(vpow(x, p), y)
    return _margins(a - b - lin, 2.0 * norm_power(y, p, p), a, b, lin)


def square_smoothness_large_p(rng, n, p, d):
    """For p > 2: ||x+y||_p^2 - ||x||_p^2 - 2||x||^(2-p)<vpow(x), y> <= (p-1)||y||_p^2."""
    x, y = random_vectors(rng, n, d), random_vectors(rng, n, d)
    a, b = norm_power(x + y, p, 2), norm_power(x, p, 2)
    lin = 2.0 * inner(_scaled_vpow(x, p, 2 - p), y)
    return _margins(a - b - lin, (p - 1) * norm_power(y, p, 2), a, b, lin)


def scalar_smoothness(rng, n, kappa):
    """|x+y|^(1+k) - |x|^(1+k) - (1+k)|x|^k sgn(x) y <= 2^(1-k)|y|^(1+k)."""
    x, y = random_vectors(rng, n, 1)[:, 0], random_vectors(rng, n, 1)[:, 0]
    # add a dense grid that includes the sign changes and y = -x
    g = np.linspace(-3, 3, 121)
    gx, gy = np.meshgrid(g, g)
    x, y = np.concatenate([x, gx.ravel()]), np.concatenate([y, gy.ravel()])
    a, b = np.abs(x + y) ** (1 + kappa), np.abs(x) ** (1 + kappa)
    lin = (1 + kappa) * np.abs(x) ** kappa * np.sign(x) * y
    return _margins(a - b - lin, 2 ** (1 - kappa) * np.abs(y) ** (1 + kappa), a, b, lin)


def subadditive_power(rng, n, kappa):
    """(x+y)^k <= x^k + y^k and x^k + y^k <= 2^(1-k)(x+y)^k for x, y >= 0."""
    x, y = np.abs(random_vectors(rng, n, 1)[:, 0]), np.abs(random_vectors(rng, n, 1)[:, 0])
    g = np.linspace(0, 4, 81)
    gx, gy = np.meshgrid(g, g)
    x, y = np.concatenate([x, gx.ravel()]), np.concatenate([y, gy.ravel()])
    s, xk, yk = (x + y) ** kappa, x**kappa, y**kappa
    m1, sc1 = _margins(s, xk + yk, xk, yk)
    m2, sc2 = _margins(xk + yk, 2 ** (1 - kappa) * s, xk, yk)
    return np.minimum(m1 / sc1, m2 / sc2), np.ones_like(m1)


def _map_cells() -> Iterator[dict]:
    for kappa in KAPPAS:
        for p in (1 + kappa, 2.0, 4.0):
            for d in DIMS:
                yield {"p": p, "kappa": kappa, "d": d}


def _orth_cells() -> Iterator[dict]:
    for kappa in (0.3, 1.0):
        for p in (1 + kappa, 3.0, 6.0):
            for r in (1 + kappa, 3.0, 6.0):
                for d in DIMS:
                    yield {"p": p, "r": r, "d": d}


CHECKS: dict[str, tuple[Callable, Callable[[], Iterator[dict]]]] = {
    "smoothness_phi": (smoothness_phi, _map_cells),
    "convexity_phi_star": (convexity_phi_star, _map_cells),
    "conjugate_norm": (conjugate_norm, _map_cells),
    "projection_identity": (projection_identity, _map_cells),
    "orthogonality": (orthogonality, _orth_cells),
    "smoothness_along_x": (smoothness_along_x, _map_cells),
    "power_smoothness_small_p": (
        power_smoothness_small_p,
        lambda: ({"p": p, "d": d} for p in (1.1, 1.3, 1.5, 2.0) for d in DIMS),
    ),
    "square_smoothness_large_p": (
        square_smoothness_large_p,
        lambda: ({"p": p, "d": d} for p in (2.5, 4.0, 8.0) for d in DIMS),
    ),
    "scalar_smoothness": (scalar_smoothness, lambda: ({"kappa": k} for k in (0.1,) + KAPPAS)),
    "subadditive_power": (subadditive_power, lambda: ({"kappa": k} for k in (0.1,) + KAPPAS)),
}


def run_check(name: str, rng: np.random.Generator, n: int, **cell) -> CheckResult:
    fn, _ = CHECKS[name]
    margin, scale = fn(rng, n, **cell)
    rel = margin / scale
    bad = rel < -SLACK
    worst = float(np.min(rel)) if rel.size else 0.0
    return CheckResult(name, cell, int(rel.size), int(bad.sum()), worst)


def run_suite(n: int = 10_000, seed: int = 0, names=None) -> list[CheckResult]:
    """Run every check on every cell of its grid with ``n`` instances each."""
    out = []
    for k, name in enumerate(names or CHECKS):
        _, cells = CHECKS[name]
        rng = np.random.default_rng([seed, k])
        for cell in cells():
            out.append(run_check(name, rng, n, **cell))
    return out


def fmt_cell(cell: dict) -> str:
    return ",".join(f"{k}={v:g}" if isinstance(v, float) else f"{k}={v}" for k, v in cell.items())

