"""p-norms, dual exponents and the signed-power map.

Every function accepts a single vector of shape ``(d,)`` or a batch of
shape ``(n, d)``; reductions always run over the last axis.

The exponent ``p = inf`` is spelled ``math.inf``. Only :func:`p_norm` and
:func:`dual_exponent` accept it.
"""
from __future__ import annotations

import math

import numpy as np

INF = math.inf


def as_vec(x, name: str = "x") -> np.ndarray:
    """Convert ``x`` to a float array, rejecting empty or non-finite input."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0 or arr.shape[-1] == 0:
        raise ValueError(f"{name} must have at least one coordinate")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def check_exponent(p: float, *, finite: bool = False, strict: bool = False) -> float:
    p = float(p)
    if math.isnan(p) or p < 1.0:
        raise ValueError(f"exponent must be >= 1, got {p}")
    if finite and math.isinf(p):
        raise ValueError("exponent must be finite here")
    if strict and p <= 1.0:
        raise ValueError(f"exponent must be > 1, got {p}")
    return p


def dual_exponent(p: float) -> float:
    """Return ``p*`` with ``1/p + 1/p* = 1`` (``1 <-> inf``)."""
    p = check_exponent(p)
    if p == 1.0:
        return INF
    if math.isinf(p):
        return 1.0
    return p / (p - 1.0)


def _safe_pow_sum(a: np.ndarray, p: float) -> tuple[np.ndarray, np.ndarray]:
    # returns (m, s) with sum(a**p) == m**p * s and s in [1, d]
    m = np.max(a, axis=-1)
    safe = np.where(m > 0, m, 1.0)
    s = np.sum((a / safe[..., None]) ** p, axis=-1)
    return m, s


def p_norm(x, p: float) -> np.ndarray | float:
    """(sum |x_i|^p)^(1/p), or max |x_i| when ``p`` is infinite."""
    p = check_exponent(p)
    a = np.abs(as_vec(x))
    if math.isinf(p):
        out = np.max(a, axis=-1)
    elif p == 1.0:
        out = np.sum(a, axis=-1)
    else:
        m, s = _safe_pow_sum(a, p)
        out = m * s ** (1.0 / p)
    return out if np.ndim(out) else float(out)


def norm_power(x, p: float, r: float) -> np.ndarray | float:
    """``||x||_p ** r`` evaluated with a max-shift so large ``r`` cannot overflow
    an intermediate sum.

    Zero vectors give 0 for ``r > 0``.
    """
    p = check_exponent(p)
    a = np.abs(as_vec(x))
    if math.isinf(p):
        m = np.max(a, axis=-1)
        out = m**r
    else:
        m, s = _safe_pow_sum(a, p)
        with np.errstate(divide="ignore"):
            out = np.where(m > 0, np.exp(r * np.log(np.where(m > 0, m, 1.0)) + (r / p) * np.log(s)), 0.0)
    return out if np.ndim(out) else float(out)


def vpow(x, p: float) -> np.ndarray:
    """Signed power ``sgn(x_i) |x_i|^(p-1)``, coordinate-wise."""
    p = check_exponent(p, finite=True, strict=True)
    x = as_vec(x)
    return np.sign(x) * np.abs(x) ** (p - 1.0)


def grad_norm_power(x, p: float, r: float) -> np.ndarray:
    """Gradient of ``||x||_p^r``: ``r ||x||_p^(r-p) vpow(x, p)``, and 0 at 0."""
    p = check_exponent(p, finite=True, strict=True)
    if r <= 1.0:
        raise ValueError(f"r must be > 1, got {r}")
    x = as_vec(x)
    return r * _scaled_vpow(x, p, r - p)


def _scaled_vpow(x: np.ndarray, p: float, e: float) -> np.ndarray:
    # ||x||_p^e * vpow(x, p), computed relative to max|x| and 0 at x = 0
    a = np.abs(x)
    m, s = _safe_pow_sum(a, p)
    safe = np.where(m > 0, m, 1.0)
    # ||x||^e * |x_i|^(p-1) = m^(e+p-1) * s^(e/p) * (|x_i|/m)^(p-1)
    scale = np.where(m > 0, np.exp((e + p - 1.0) * np.log(safe) + (e / p) * np.log(np.where(m > 0, s, 1.0))), 0.0)
    return np.sign(x) * (a / safe[..., None]) ** (p - 1.0) * scale[..., None]


def inner(x, y) -> np.ndarray | float:
    out = np.sum(np.asarray(x) * np.asarray(y), axis=-1)
    return out if np.ndim(out) else float(out)
