import math

import numpy as np
import pytest

from heavysmd.lowerbound import hamming
from heavysmd.noise import NoiseSpec, median_of_means, seeded_rng
from heavysmd.norms import p_norm
from heavysmd.oracles import (
    HardInstance, SyntheticOracle, discrepancy_rho, g_alpha_value_large, g_alpha_value_small, oracle_large,
    oracle_small, synthetic_oracle,
)
from heavysmd.projection import Box


def _small(alpha, delta=0.1, kappa=0.5, L=1.0, R=1.0, q=1.0):
    return HardInstance(np.asarray(alpha, float), "small", delta, kappa, L, R, q)


def _large(alpha, delta=0.01, kappa=0.5, L=1.0, R=1.0, q=2.0, T=10):
    return HardInstance(np.asarray(alpha, float), "large", delta, kappa, L, R, q, T)


def _mean_response(inst, x, n, seed=0):
    u = seeded_rng(seed).random((n, inst.n_uniforms))
    f, g = inst.respond(np.broadcast_to(x, (n, inst.dim)), u)
    return f, g


def _chunked_moments(inst, x, n, seed=0, chunk=10**6):
    """Mean and standard error of f and g over ``n`` responses at ``x``."""
    rng = seeded_rng(seed)
    s1f = s2f = 0.0
    s1g, s2g = np.zeros(inst.dim), np.zeros(inst.dim)
    for _ in range(n // chunk):
        f, g = inst.respond(np.broadcast_to(x, (chunk, inst.dim)), rng.random((chunk, inst.n_uniforms)))
        s1f, s2f = s1f + f.sum(), s2f + (f**2).sum()
        s1g, s2g = s1g + g.sum(axis=0), s2g + (g**2).sum(axis=0)
    mf, mg = s1f / n, s1g / n
    return mf, np.sqrt((s2f / n - mf**2) / n), mg, np.sqrt((s2g / n - mg**2) / n)


def test_small_value_examples():
    inst = _small([1.0], delta=0.1, L=2.0, R=0.5)
    assert g_alpha_value_small(inst, [-0.5]) == 0.0
    assert g_alpha_value_small(inst, [0.5]) == pytest.approx(3 * 2.0 * 0.1 * 0.5)
    inst = _small([1.0, -1.0, 1.0])
    x = np.array([0.2, -0.4, 0.9])
    # flipping alpha and x maps h to itself but the weight (2+a)/4 to (2-a)/4
    a = inst.alpha
    np.testing.assert_allclose(
        inst.with_alpha(-a).coordinate_values(-x), inst.coordinate_values(x) * (2 - a) / (2 + a)
    )
    np.testing.assert_allclose(inst.minimizer, [-1, 1, -1])


def test_small_derived_constants():
    for delta in (1e-3, 0.05, 1 / 8):
        inst = _small([1.0], delta=delta)
        assert 0 < inst.bern_p <= 0.5
        assert inst.bern_p * inst.big_lambda == pytest.approx(2 * delta)


def test_large_value_examples():
    inst = _large([1.0], delta=0.01, T=100)
    assert g_alpha_value_large(inst, [-1.0]) == pytest.approx(inst.prefactor * 0.49 * 2)
    assert inst.error([-1.0]) == pytest.approx(0.0, abs=1e-15)
    flip = _large([-1.0], delta=0.01, T=100)
    assert flip.value([0.4]) == pytest.approx(inst.value([-0.4]))
    a, b = _large([1.0, -1.0], delta=0.0), _large([-1.0, 1.0], delta=0.0)
    assert a.value([0.3, 0.7]) == pytest.approx(b.value([0.3, 0.7]))


@pytest.mark.parametrize(
    "kwargs",
    [dict(alpha=[0.5]), dict(delta=0.2), dict(delta=-0.1), dict(kappa=0.0)],
)
def test_small_rejects_invalid(kwargs):
    args = dict(alpha=[1.0], delta=0.1, kappa=0.5)
    args.update(kwargs)
    with pytest.raises(ValueError):
        _small(**args)


def test_large_requires_horizon_and_delta():
    with pytest.raises(ValueError):
        HardInstance(np.ones(2), "large", 0.01, 0.5)
    with pytest.raises(ValueError):
        _large([1.0], delta=0.05)


def test_regime_specific_wrappers_reject_other_regime():
    with pytest.raises(ValueError):
        g_alpha_value_small(_large([1.0]), [0.0])
    with pytest.raises(ValueError):
        oracle_large(_small([1.0]), [0.0], seeded_rng(0))


def test_zero_branches():
    inst = _small([1.0, -1.0])
    f, g = inst.respond(np.zeros((1, 2)), np.array([[0.3, 0.0]]))  # coin says b = 1
    assert f[0] == 0 and np.all(g == 0)
    inst = _large([1.0, -1.0], T=10)
    f, g = inst.respond(np.zeros((1, 2)), np.array([[0.5, 0.1, 0.1]]))  # gate closed
    assert f[0] == 0 and np.all(g == 0)


@pytest.mark.parametrize("alpha", [[1.0, -1.0, 1.0], [-1.0, -1.0, 1.0]])
def test_small_oracle_unbiased(alpha):
    inst = _small(alpha, delta=1 / 8)
    rng = np.random.default_rng(1)
    for k in range(5):
        x = rng.uniform(-0.9, 0.9, 3)
        # bounded rare-event responses: plain means, not median of means
        mf, _, mg, _ = _chunked_moments(inst, x, 10**7, seed=k)
        assert mf == pytest.approx(inst.value(x), rel=0.01)
        np.testing.assert_allclose(mg, inst.subgradient(x), rtol=0.01)


def test_large_oracle_unbiased():
    inst = _large([1.0, -1.0], T=10)
    rng = np.random.default_rng(2)
    for k in range(5):
        x = rng.uniform(-0.9, 0.9, 2)
        mf, _, mg, se = _chunked_moments(inst, x, 10**7, seed=k)
        assert mf == pytest.approx(inst.value(x), rel=0.01)
        # the gradient mean is 2 delta of the response amplitude, so a 1%
        # relative check would need ~1e9 draws; use a 4 standard error band
        assert np.all(np.abs(mg - inst.subgradient(x)) <= 4 * se)


@pytest.mark.parametrize("q", [1.0, 1.5])
def test_small_oracle_moment_bound(q):
    inst = _small([1.0, -1.0, 1.0, -1.0], delta=1 / 8, q=q)
    _, g = _mean_response(inst, np.zeros(4), 10**6)
    assert np.mean(p_norm(g, q) ** 1.5) <= 1.0 * 1.02


@pytest.mark.parametrize("q", [2.0, 4.0, math.inf])
def test_large_oracle_moment_bound(q):
    inst = _large([1.0, -1.0, 1.0], q=q, T=20)
    _, g = _mean_response(inst, np.full(3, 0.3), 10**6)
    assert np.mean(p_norm(g, q) ** 1.5) <= 1.0 * 1.02


def test_query_wrappers_are_deterministic():
    inst = _small([1.0, -1.0])
    a = oracle_small(inst, [0.1, 0.2], seeded_rng(4))
    b = inst.query([0.1, 0.2], seeded_rng(4))
    assert a.f_hat == b.f_hat and np.array_equal(a.g_hat, b.g_hat)


def test_batched_alpha_pairs_rows():
    alphas = np.array([[1.0, -1.0], [-1.0, 1.0]])
    batch = _small(alphas)
    x = np.array([[0.2, 0.3], [0.2, 0.3]])
    u = np.array([[0.1, 0.99], [0.1, 0.99]])
    f, g = batch.respond(x, u)
    for i in range(2):
        fi, gi = _small(alphas[i]).respond(x[i : i + 1], u[i : i + 1])
        assert f[i] == fi[0] and np.array_equal(g[i], gi[0])


def _synthetic(q=1.5, scale=0.1, d=3):
    return SyntheticOracle(np.array([0.5, -0.5, 0.0][:d]), 1.0, q, NoiseSpec(1.9, scale, 0.5))


def test_synthetic_at_target_without_noise():
    orc = _synthetic(scale=0.0)
    r = synthetic_oracle(orc.target, 1.0, 1.5, orc.noise, orc.target, seeded_rng(0))
    assert r.f_hat == 0.0 and np.all(r.g_hat == 0)


@pytest.mark.parametrize("q", [1.0, 1.5, 2.0, math.inf])
def test_synthetic_unbiased_and_lipschitz(rng, q):
    orc = _synthetic(q=q)
    for k in range(5):
        x = rng.uniform(-1, 1, 3)
        f, g = _mean_response(orc, x, 10**6, seed=k)
        assert median_of_means(f - orc.value(x), 50) == pytest.approx(0.0, abs=0.01 * max(orc.value(x), 0.1))
        np.testing.assert_allclose(median_of_means(g, 50), orc.subgradient(x), atol=0.01)
        assert p_norm(orc.subgradient(x), q) <= 1.0 + 1e-12
    x, y = rng.uniform(-1, 1, (2, 1000, 3))
    assert np.all(np.abs(orc.value(x) - orc.value(y)) <= p_norm(x - y, orc.q_star) + 1e-12)
    assert orc.lipschitz <= orc.sigma


@pytest.mark.parametrize("q", [1.0, 1.5, 2.0, math.inf])
def test_synthetic_moment_certified(q):
    orc = _synthetic(q=q, scale=0.3)
    _, g = _mean_response(orc, np.array([0.9, 0.9, -0.9]), 10**6, seed=7)
    assert np.mean(p_norm(g, q) ** 1.5) <= orc.sigma**1.5 * 1.02


def test_hard_instances_are_lipschitz(rng):
    for inst in (_small([1.0, -1.0, 1.0]), _large([1.0, -1.0, 1.0], q=2.0)):
        x, y = rng.uniform(-1, 1, (2, 1000, 3))
        qs = 1 / (1 - 1 / inst.q) if inst.q > 1 else math.inf
        assert np.all(np.abs(inst.value(x) - inst.value(y)) <= inst.lipschitz * p_norm(x - y, qs) + 1e-12)


def test_discrepancy_of_identical_objectives():
    inst = _small([1.0, -1.0])
    assert discrepancy_rho(inst, inst, Box(1.0, 2)) == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("d", [1, 2, 4, 8])
def test_small_family_discrepancy_is_exact(d):
    rng = np.random.default_rng(d)
    for _ in range(10):
        a, b = rng.choice([-1.0, 1.0], (2, d))
        if np.array_equal(a, b):
            continue
        fa, fb = _small(a, delta=0.1, L=2.0, R=0.5), _small(b, delta=0.1, L=2.0, R=0.5)
        rho = discrepancy_rho(fa, fb, Box(0.5, d))
        assert rho == pytest.approx(0.5 * 2.0 * 0.1 / d * hamming(a, b), rel=1e-12)


def test_grid_path_for_plain_objectives():
    class Quad:
        def __init__(self, c):
            self.c = np.asarray(c)

        def value(self, x):
            return np.sum((np.asarray(x) - self.c) ** 2, axis=-1)

    rho = discrepancy_rho(Quad([0.5, 0.5]), Quad([-0.5, -0.5]), Box(1.0, 2))
    assert rho == pytest.approx(1.0, abs=1e-3)
    with pytest.raises(ValueError):
        discrepancy_rho(Quad(np.zeros(4)), Quad(np.zeros(4)), Box(1.0, 4))
