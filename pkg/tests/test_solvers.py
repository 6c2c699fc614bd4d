import math

import numpy as np
import pytest

from heavysmd import solvers
from heavysmd.mirror import MirrorMap, r0
from heavysmd.noise import NoiseSpec, seeded_rng
from heavysmd.oracles import Oracle, SyntheticOracle
from heavysmd.projection import Box, ProjectionError
from heavysmd.solvers import (
    RunConfig, checkpoint_times, clip_gradient, clipped_sgd_run, resolve_eta, run_batch, sgd_run,
    single_step_response, smd_run, smd_step_unprojected, step_size_auto,
)


class LinearOracle(Oracle):
    """Noiseless ``f(x) = <c, x>`` on the box; minimum ``-R ||c||_1``."""

    n_uniforms = 0

    def __init__(self, c, radius=1.0):
        self.c = np.asarray(c, dtype=float)
        self.radius = radius

    @property
    def dim(self):
        return self.c.size

    @property
    def sigma(self):
        return float(np.linalg.norm(self.c))

    @property
    def f_star(self):
        return -self.radius * float(np.abs(self.c).sum())

    def value(self, x):
        return np.asarray(x) @ self.c

    def respond(self, x, u):
        x = np.atleast_2d(x)
        return self.value(x), np.broadcast_to(self.c, x.shape).copy()


def _synthetic(d=3, q=2.0, scale=0.1, kappa=0.5):
    target = 0.5 * np.where(np.arange(d) % 2 == 0, 1.0, -1.0)
    # the noise needs a tail index in (1+kappa, 2); kappa = 1 runs reuse 0.5
    return SyntheticOracle(target, 1.0, q, NoiseSpec(1.9, scale, min(kappa, 0.5)))


@pytest.mark.parametrize(
    "args, expected",
    [((1, 1, 1, 100), 0.1), ((1, 2, 1, 100), 0.05), ((1, 1, 0.5, 10**6), 1e-4)],
)
def test_step_size_examples(args, expected):
    assert step_size_auto(*args) == pytest.approx(expected)


def test_step_size_rejects_nonpositive():
    with pytest.raises(ValueError):
        step_size_auto(1.0, 0.0, 0.5, 10)


@pytest.mark.parametrize(
    "kwargs",
    [dict(algo="adam"), dict(horizon=0), dict(mirror=None), dict(eta=-1.0), dict(algo="clipped_sgd", clip=0.0)],
)
def test_run_config_validation(kwargs):
    args = dict(algo="smd", box=Box(1.0, 2), horizon=10, mirror=MirrorMap(2.0, 0.5))
    args.update(kwargs)
    with pytest.raises(ValueError):
        RunConfig(**args)


def test_checkpoint_times():
    assert checkpoint_times(1) == [1]
    assert checkpoint_times(8) == [1, 2, 4, 8]
    assert checkpoint_times(10) == [1, 2, 4, 8, 10]


def test_auto_eta_uses_r0():
    m, box = MirrorMap(1.5, 0.5), Box(1.0, 4)
    cfg = RunConfig("smd", box, 1000, mirror=m)
    assert resolve_eta(cfg, 2.0) == pytest.approx(r0(m, 1.0, 4) ** 2 / 2.0 * 1000 ** (-1 / 1.5))


def test_single_query_run_returns_start():
    cfg = RunConfig("smd", Box(1.0, 3), 1, eta=0.1, mirror=MirrorMap(2.0, 0.5))
    tr = smd_run(cfg, LinearOracle(np.zeros(3)), seeded_rng(0))
    np.testing.assert_array_equal(tr.x_bar, np.zeros(3))
    assert tr.checkpoints == ((1, 0.0),)


def test_zero_gradient_is_stationary():
    for algo, mirror in (("smd", MirrorMap(1.5, 0.5)), ("sgd", None), ("clipped_sgd", None)):
        cfg = RunConfig(algo, Box(1.0, 3), 50, eta=0.3, mirror=mirror, kappa=0.5)
        tr = run_batch(cfg, LinearOracle(np.zeros(3)), [seeded_rng(0)], record=True)[0]
        assert np.all(tr.iterates == 0)


@pytest.mark.parametrize("kappa", [0.3, 0.5, 1.0])
def test_closed_form_matches_run_steps(kappa):
    # a large box keeps the projection inactive
    orc = _synthetic(d=4, q=2.0, kappa=kappa)
    m = MirrorMap(2.0, kappa)
    cfg = RunConfig("smd", Box(1e6, 4), 300, eta=0.05, mirror=m)
    tr = smd_run(cfg, orc, seeded_rng(2), record=True)
    u = seeded_rng(2).random((300, orc.n_uniforms))
    for t in range(300):
        _, g = orc.respond(tr.iterates[t][None], u[t][None])
        expected = single_step_response(m, tr.iterates[t], g[0], 0.05)
        np.testing.assert_allclose(tr.iterates[t + 1], expected, atol=1e-10, rtol=0)


def test_closed_form_agrees_with_generic_path(rng):
    for kappa in (0.3, 0.5, 1.0):
        m = MirrorMap(2.0, kappa)
        x = rng.standard_normal((10**4, 5))
        g = rng.standard_normal((10**4, 5)) * 10 ** rng.uniform(-2, 2, (10**4, 1))
        a, b = single_step_response(m, x, g, 0.1), smd_step_unprojected(m, x, g, 0.1)
        assert np.max(np.abs(a - b)) <= 1e-10


def test_closed_form_requires_p2():
    with pytest.raises(ValueError):
        single_step_response(MirrorMap(1.5, 0.5), [1.0], [1.0], 0.1)


def test_single_step_identity_and_linear_case(rng):
    x, g = rng.standard_normal(4), rng.standard_normal(4)
    np.testing.assert_allclose(single_step_response(MirrorMap(2.0, 0.5), x, np.zeros(4), 0.3), x, rtol=1e-14)
    np.testing.assert_allclose(single_step_response(MirrorMap(2.0, 1.0), x, g, 0.3), x - 0.03 * g, rtol=1e-14)


@pytest.mark.parametrize("kappa", [0.3, 0.5, 1.0])
def test_response_grows_like_gradient_to_the_kappa(kappa):
    # a start near the origin puts the whole range in the asymptotic regime
    m, x = MirrorMap(2.0, kappa), np.array([3e-3, -2e-3, 1e-3])
    direction = np.array([1.0, 2.0, -2.0]) / 3
    mags = np.logspace(2, 8, 25)
    resp = [np.linalg.norm(single_step_response(m, x, c * direction, 1.0)) for c in mags]
    slope = np.polyfit(np.log(mags), np.log(resp), 1)[0]
    assert slope == pytest.approx(kappa, abs=0.01)


def test_sgd_grows_linearly_in_gradient():
    cfg = RunConfig("sgd", Box(1e12, 2), 2, eta=0.1, kappa=0.5)
    sizes = [1e2, 1e4, 1e6]
    steps = []
    for s in sizes:
        tr = sgd_run(cfg, LinearOracle([s, 0.0], radius=1e12), seeded_rng(0), record=True)
        steps.append(np.linalg.norm(tr.iterates[1]))
    assert np.polyfit(np.log(sizes), np.log(steps), 1)[0] == pytest.approx(1.0)


def test_sgd_equals_quadratic_smd_with_rescaled_step():
    orc = _synthetic(d=3, q=2.0)
    m = MirrorMap(2.0, 1.0)
    a = smd_run(RunConfig("smd", Box(1.0, 3), 500, eta=0.4, mirror=m), orc, seeded_rng(5), record=True)
    b = sgd_run(RunConfig("sgd", Box(1.0, 3), 500, eta=0.04, kappa=0.5), orc, seeded_rng(5), record=True)
    np.testing.assert_allclose(a.iterates, b.iterates, atol=1e-10, rtol=0)


def test_clip_gradient_examples():
    np.testing.assert_allclose(clip_gradient([3.0, 4.0], 10.0), [3.0, 4.0])
    np.testing.assert_allclose(clip_gradient([3.0, 4.0], 2.5), [1.5, 2.0])
    np.testing.assert_array_equal(clip_gradient([0.0, 0.0], 1.0), [0.0, 0.0])


def test_unbounded_clip_equals_sgd():
    orc = _synthetic(d=3)
    a = sgd_run(RunConfig("sgd", Box(1.0, 3), 400, eta=0.01, kappa=0.5), orc, seeded_rng(1), record=True)
    b = clipped_sgd_run(RunConfig("clipped_sgd", Box(1.0, 3), 400, eta=0.01, clip=math.inf, kappa=0.5), orc,
                        seeded_rng(1), record=True)
    np.testing.assert_array_equal(a.iterates, b.iterates)


def test_wrappers_check_algo():
    cfg = RunConfig("sgd", Box(1.0, 3), 5, kappa=0.5)
    with pytest.raises(ValueError):
        smd_run(cfg, _synthetic(), seeded_rng(0))


@pytest.mark.parametrize("algo", solvers.ALGOS)
def test_feasible_and_deterministic(algo):
    orc = _synthetic(d=4, q=1.5, scale=1.0)
    mirror = MirrorMap(1.5, 0.5) if algo == "smd" else None
    cfg = RunConfig(algo, Box(0.8, 4), 700, mirror=mirror, kappa=0.5)
    a = run_batch(cfg, orc, [seeded_rng(3)], record=True)[0]
    b = run_batch(cfg, orc, [seeded_rng(3)], record=True)[0]
    assert np.max(np.abs(a.iterates)) <= 0.8 + 1e-10
    assert np.max(np.abs(a.x_bar)) <= 0.8 + 1e-10
    np.testing.assert_array_equal(a.iterates, b.iterates)
    assert a.checkpoints == b.checkpoints
    ts = [t for t, _ in a.checkpoints]
    assert ts == sorted(set(ts)) and ts[-1] == 700
    np.testing.assert_allclose(a.x_bar, a.iterates[:-1].mean(axis=0), atol=1e-13)


def test_batch_composition_does_not_change_a_run():
    orc = _synthetic(d=2)
    cfg = RunConfig("smd", Box(1.0, 2), 5000, mirror=MirrorMap(2.0, 0.5))
    batch = run_batch(cfg, orc, [seeded_rng(0, k) for k in range(4)])
    for k in (0, 3):
        alone = run_batch(cfg, orc, [seeded_rng(0, k)])[0]
        np.testing.assert_array_equal(alone.x_bar, batch[k].x_bar)
        assert alone.checkpoints == batch[k].checkpoints


def test_noiseless_linear_error_decreases():
    orc = LinearOracle([1.0, -2.0, 0.5])
    errs = []
    for T in (10, 100, 1000, 10000):
        cfg = RunConfig("smd", Box(1.0, 3), T, mirror=MirrorMap(1.5, 0.5))
        errs.append(smd_run(cfg, orc, seeded_rng(0)).final_error)
    assert all(a > b for a, b in zip(errs, errs[1:]))


def test_projection_failure_reports_step(monkeypatch):
    def boom(*args, **kwargs):
        raise ProjectionError("forced", 1.0)

    monkeypatch.setattr(solvers, "project_dual", boom)
    cfg = RunConfig("smd", Box(1e-3, 2), 10, eta=10.0, mirror=MirrorMap(2.0, 0.5))
    with pytest.raises(ProjectionError) as info:
        smd_run(cfg, LinearOracle([1.0, 1.0], radius=1e-3), seeded_rng(0))
    assert info.value.step == 0


def test_dimension_mismatch_rejected():
    cfg = RunConfig("smd", Box(1.0, 2), 10, mirror=MirrorMap(2.0, 0.5))
    with pytest.raises(ValueError):
        smd_run(cfg, _synthetic(d=3), seeded_rng(0))
