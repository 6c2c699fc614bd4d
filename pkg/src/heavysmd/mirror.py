"""Uniformly convex p-norm mirror maps.

The potential is

    psi(x) = K_p^(1/kappa) * kappa/(1+kappa) * ||x||_{p*}^((1+kappa)/kappa),
    K_p    = 10 * max(1, (p-1)^((1+kappa)/2)),

which is (1, (1+kappa)/kappa)-uniformly convex with respect to the
``p*``-norm. Its gradient is inverted in closed form by the gradient of the
conjugate, ``(1/K_p) ||y||_p^(1+kappa-p) vpow(y, p)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NewType

import numpy as np

from .norms import _scaled_vpow, as_vec, check_exponent, dual_exponent, inner, norm_power

# Static marker for gradient-space vectors; at runtime both are ndarrays.
DualVec = NewType("DualVec", np.ndarray)

KAPPA_MIN = 0.1


def check_kappa(kappa: float) -> float:
    kappa = float(kappa)
    if not KAPPA_MIN <= kappa <= 1.0:
        raise ValueError(f"kappa must lie in [{KAPPA_MIN}, 1], got {kappa}")
    return kappa


def k_p(p: float, kappa: float) -> float:
    """Smoothness constant ``10 max{1, (p-1)^((1+kappa)/2)}``."""
    p = check_exponent(p, finite=True)
    if not 0.0 < kappa <= 1.0:
        raise ValueError(f"kappa must lie in (0, 1], got {kappa}")
    if p < 1.0 + kappa:
        raise ValueError(f"p={p} is below 1+kappa={1 + kappa}")
    return 10.0 * max(1.0, (p - 1.0) ** ((1.0 + kappa) / 2.0))


@dataclass(frozen=True)
class MirrorMap:
    """The map ``U_p`` for a norm exponent ``p`` and moment exponent ``kappa``."""

    p: float
    kappa: float

    def __post_init__(self):
        check_kappa(self.kappa)
        p = check_exponent(self.p, finite=True)
        if p < 1.0 + self.kappa - 1e-12:
            raise ValueError(f"p={p} is below 1+kappa={1 + self.kappa}")

    @property
    def p_star(self) -> float:
        return dual_exponent(self.p)

    @property
    def K(self) -> float:
        return k_p(max(self.p, 1.0 + self.kappa), self.kappa)

    @property
    def scale(self) -> float:
        return self.K ** (1.0 / self.kappa)

    @property
    def r(self) -> float:
        """Uniform-convexity exponent (1+kappa)/kappa."""
        return (1.0 + self.kappa) / self.kappa

    def value(self, x) -> np.ndarray | float:
        return self.scale * (self.kappa / (1.0 + self.kappa)) * norm_power(x, self.p_star, self.r)

    def grad(self, x) -> DualVec:
        x = as_vec(x)
        return DualVec(self.scale * _scaled_vpow(x, self.p_star, self.r - self.p_star))

    def grad_conj(self, y: DualVec) -> np.ndarray:
        y = as_vec(y, "y")
        return _scaled_vpow(y, self.p, 1.0 + self.kappa - self.p) / self.K

    def conj_value(self, y: DualVec) -> np.ndarray | float:
        return norm_power(y, self.p, 1.0 + self.kappa) / (self.K * (1.0 + self.kappa))

    def bregman(self, x, y) -> np.ndarray | float:
        """``psi(x) - psi(y) - <grad psi(y), x - y>``."""
        x, y = as_vec(x), as_vec(y, "y")
        out = self.value(x) - self.value(y) - inner(self.grad(y), x - y)
        return np.maximum(out, 0.0) if np.ndim(out) else max(float(out), 0.0)


def psi_value(m: MirrorMap, x) -> np.ndarray | float:
    return m.value(x)


def grad_psi(m: MirrorMap, x) -> DualVec:
    return m.grad(x)


def grad_psi_star(m: MirrorMap, y: DualVec) -> np.ndarray:
    return m.grad_conj(y)


def bregman(m: MirrorMap, x, y) -> np.ndarray | float:
    return m.bregman(x, y)


def conj_norm_value(r: float, p: float, y) -> np.ndarray | float:
    """Conjugate of ``(1/r)||.||_p^r``: ``(r-1)/r ||y||_{p*}^(r/(r-1))``."""
    if r <= 1.0:
        raise ValueError(f"r must be > 1, got {r}")
    return (r - 1.0) / r * norm_power(y, dual_exponent(p), r / (r - 1.0))


def r0(m: MirrorMap, box_radius: float, dim: int) -> float:
    """Initial-distance constant for the box ``||x||_inf <= R`` started at 0.

    ``R0^((1+kappa)/kappa) = (1+kappa)/kappa * sup_box psi``; the sup of a
    monotone norm power over the box is attained at the corner.
    """
    if box_radius <= 0:
        raise ValueError("box_radius must be positive")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    corner = np.full(int(dim), float(box_radius))
    return float((m.r * m.value(corner)) ** (1.0 / m.r))


# The conjugate pair phi/phi* underlying U_p, used by the inequality suites.

def phi_value(p: float, kappa: float, x):
    return norm_power(x, p, 1.0 + kappa) / (1.0 + kappa)


def phi_grad(p: float, kappa: float, x):
    return _scaled_vpow(as_vec(x), p, 1.0 + kappa - p)


def phi_star_value(p: float, kappa: float, y):
    return kappa / (1.0 + kappa) * norm_power(y, dual_exponent(p), (1.0 + kappa) / kappa)


def phi_star_grad(p: float, kappa: float, y):
    ps = dual_exponent(p)
    return _scaled_vpow(as_vec(y), ps, (1.0 + kappa) / kappa - ps)


def log_dim_exponent(d: int) -> float:
    """``1 + ln d``, the exponent preferred for large dual norms."""
    return 1.0 + math.log(d)


def resolve_map(q: float, kappa: float, d: int) -> MirrorMap:
    """Pick the map exponent for gradients bounded in the ``q``-norm.

    ``p = 1 + kappa`` when ``q <= 1 + kappa``. Otherwise ``p = q``, unless
    ``q > ln d``, where ``1 + ln d`` gives the smaller dimension factor and is
    used whenever it is below ``q``. The result is clamped to ``p >= 1 + kappa``
    (``1 + ln d`` falls below that for very small ``d``).
    """
    q = check_exponent(q)
    kappa = check_kappa(kappa)
    if int(d) < 1:
        raise ValueError("d must be >= 1")
    floor = 1.0 + kappa
    if q <= floor:
        return MirrorMap(floor, kappa)
    log_p = log_dim_exponent(int(d))
    if math.isinf(q):
        p = log_p
    elif q > math.log(d):
        p = min(q, log_p)
    else:
        p = q
    return MirrorMap(max(p, floor), kappa)
