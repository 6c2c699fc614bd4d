"""Bregman projection of a point onto the box ``||x||_inf <= R``.

For ``psi = U_p`` the projection of ``y`` minimizes ``psi(x) - <theta, x>``
over the box with ``theta = grad psi(y)``. Writing ``N = ||x||_{p*}`` for the
norm of the minimizer, the KKT conditions give every coordinate explicitly,

    x_i(N) = sgn(theta_i) * min(R, (|theta_i| / (c N^a))^(p-1)),
    a = (1+kappa)/kappa - p*,

so only the scalar fixed point ``N = ||x(N)||_{p*}`` has to be solved. It is
unique because ``N -> ||x(N)|| - N`` is strictly decreasing, and when
``p = 1 + kappa`` (``a = 0``) no solve is needed at all.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mirror import DualVec, MirrorMap
from .norms import as_vec, inner

MAX_NEWTON = 100


class ProjectionError(RuntimeError):
    """Raised when the scalar fixed point fails to converge."""

    def __init__(self, message: str, gap: float, step: int | None = None):
        super().__init__(f"{message} (objective gap {gap:.3e})")
        self.gap = gap
        self.step = step


@dataclass(frozen=True)
class Box:
    """The set ``{x : ||x||_inf <= radius}`` in ``dim`` dimensions."""

    radius: float
    dim: int

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("box radius must be positive")
        if int(self.dim) < 1:
            raise ValueError("box dimension must be >= 1")

    def contains(self, x, tol: float = 0.0) -> np.ndarray | bool:
        return np.max(np.abs(x), axis=-1) <= self.radius + tol

    def clamp(self, x) -> np.ndarray:
        return np.clip(x, -self.radius, self.radius)


def project_dual(m: MirrorMap, theta, radius: float) -> np.ndarray:
    """Minimize ``psi(x) - <theta, x>`` over the box of the given radius.

    ``theta`` may be a single dual vector or a batch ``(n, d)``.
    """
    theta = np.asarray(theta, dtype=float)
    single = theta.ndim == 1
    th = np.atleast_2d(theta)
    u = np.abs(th) / m.scale
    w = u ** (m.p - 1.0)  # free coordinate magnitude when N^a == 1
    a = m.r - m.p_star
    sgn = np.sign(th)
    if abs(a) < 1e-13:
        x = sgn * np.minimum(radius, w)
        return x[0] if single else x

    b = a * (m.p - 1.0)
    ps = m.p_star
    nz = np.any(w > 0, axis=1)
    s = np.zeros(th.shape[0])
    if np.any(nz):
        s[nz] = _solve_log_norm(w[nz], b, ps, radius)
    x = sgn * np.minimum(radius, w * np.exp(-b * s)[:, None])
    x[~nz] = 0.0
    return x[0] if single else x


def _solve_log_norm(w: np.ndarray, b: float, ps: float, radius: float) -> np.ndarray:
    # Solve G(s) = log||min(R, w e^{-bs})||_{p*} - s = 0 row-wise; G' in [-1-b, -1].
    def g_and_slope(s):
        free = w * np.exp(-b * s)[:, None]
        x = np.minimum(radius, free)
        mx = np.max(x, axis=1)
        rel = (x / mx[:, None]) ** ps
        tot = np.sum(rel, axis=1)
        frac = np.sum(np.where(free < radius, rel, 0.0), axis=1) / tot
        return np.log(mx) + np.log(tot) / ps - s, -b * frac - 1.0

    # at the unconstrained solution the clamp can only shrink the norm, so G <= 0
    wmax = np.max(w, axis=1)
    s0 = (np.log(wmax) + np.log(np.sum((w / wmax[:, None]) ** ps, axis=1)) / ps) / (1.0 + b)
    g0, _ = g_and_slope(s0)
    lo = s0 + g0
    hi = s0 + g0 / (1.0 + b)
    s = hi.copy()
    for _ in range(MAX_NEWTON):
        g, slope = g_and_slope(s)
        lo = np.where(g > 0, np.maximum(lo, s), lo)
        hi = np.where(g < 0, np.minimum(hi, s), hi)
        step = s - g / slope
        bad = (step <= lo) | (step >= hi)
        new = np.where(bad, 0.5 * (lo + hi), step)
        done = (np.abs(g) <= 1e-15) | (hi - lo <= 4e-16 * np.maximum(1.0, np.abs(s)))
        if np.all(done):
            return s
        s = np.where(done, s, new)
    g, _ = g_and_slope(s)
    raise ProjectionError("norm fixed point did not converge", float(np.max(np.abs(g))))


def projected_gradient_norm(m: MirrorMap, x, theta, radius: float) -> float:
    """Norm of the box-projected gradient of ``psi(x) - <theta, x>``."""
    grad = m.grad(x) - theta
    step = np.clip(x - grad, -radius, radius) - x
    return float(np.max(np.abs(step)))


def bregman_project(m: MirrorMap, y, box: Box) -> np.ndarray:
    """``argmin_{x in box} D_psi(x, y)``; points already inside are returned as is."""
    y = as_vec(y, "y")
    if y.shape[-1] != box.dim:
        raise ValueError(f"expected dimension {box.dim}, got {y.shape[-1]}")
    inside = np.atleast_1d(box.contains(y))
    if np.all(inside):
        return y.copy()
    x = project_dual(m, m.grad(y), box.radius)
    if y.ndim == 1:
        return x
    return np.where(inside[:, None], y, x)


def pythagorean_check(m: MirrorMap, x, y, box: Box, slack: float = 1e-8) -> bool:
    """Check ``D(x, y_hat) + D(y_hat, y) <= D(x, y)`` for feasible ``x``.

    The slack is relative to ``max(1, D(x, y))``.
    """
    x = as_vec(x)
    if not np.all(box.contains(x, 1e-12)):
        raise ValueError("x must lie in the box")
    y_hat = bregman_project(m, y, box)
    lhs = m.bregman(x, y_hat) + m.bregman(y_hat, y)
    rhs = m.bregman(x, y)
    return bool(np.all(lhs <= rhs + slack * np.maximum(1.0, rhs)))


def optimality_gap(m: MirrorMap, x_hat, y, x) -> np.ndarray | float:
    """``<grad psi(x_hat) - grad psi(y), x_hat - x>``; nonpositive at the projection."""
    return inner(m.grad(x_hat) - m.grad(y), np.asarray(x_hat) - np.asarray(x))

