import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bregprox import core
from bregprox.errors import BasePointOutsideU, EmptySet, NonconvexInput, NonPositiveLambda, PointOutsideSumDomain
from bregprox.grid import Grid1D, SampledFunction, convexity_defect, use_oracle
from bregprox.kernels import KERNEL_NAMES, kernel
from bregprox.oracle import brute_envelope

from conftest import point, sampled

E = kernel("energy")
BS = kernel("boltzmann_shannon")


@pytest.fixture(scope="module")
def g4():
    return Grid1D.uniform(-4.0, 4.0, 2001)


def huber(y):
    return np.where(np.abs(y) <= 1, y * y / 2, np.abs(y) - 0.5)


def test_envelope_examples(g4):
    bk = kernel("burg_energy")
    f = point(Grid1D.for_kernel(bk, 0, 6, 601), 1.0)
    assert core.envelope_at(f, bk, 1.0, [2.0])[0] == pytest.approx(math.log(2), abs=1e-12)
    assert core.envelope_at(point(g4, 1.0), kernel("cubic"), 1.0, [1.0])[0] == 0.0
    absf = sampled(g4, np.abs)
    assert core.envelope_at(absf, E, 1.0, [2.0])[0] == pytest.approx(1.5, abs=1e-12)
    env = core.envelope(absf, E, 1.0)
    assert np.max(np.abs(env.values - huber(g4.nodes))) <= g4.h


def test_envelope_via_conjugate_examples(g4):
    bk = kernel("burg_energy")
    f = point(Grid1D.for_kernel(bk, 0, 6, 601), 1.0)
    assert core.envelope_via_conjugate(f, bk, 1.0, Grid1D([1.0, 2.0]))(2.0) == pytest.approx(math.log(2), abs=1e-6)
    env = core.envelope_via_conjugate(sampled(g4, np.abs), E, 1.0)
    assert np.max(np.abs(env.values - huber(g4.nodes))) <= g4.h
    for name in KERNEL_NAMES:
        k = kernel(name)
        grid = Grid1D.for_kernel(k, 0, 5, 501) if math.isfinite(k.domain[0]) else g4
        z = core.envelope_via_conjugate(sampled(grid, np.zeros_like), k, 1.0)
        m = k.in_U(grid.nodes)
        assert np.max(np.abs(z.values[m])) <= 1e-9 * (1 + np.max(np.abs(k.phi(grid.nodes[m]))))


def test_right_envelope_differs_from_left():
    bk = kernel("boltzmann_shannon")
    g = Grid1D.for_kernel(bk, 0, 4, 401)
    f = point(g, 1.0)
    left = core.envelope_at(f, bk, 1.0, [2.0])[0]
    right = core.envelope_at(f, bk, 1.0, [2.0], side="right")[0]
    # D(1, 2) on the left, D(2, 1) on the right
    assert left == pytest.approx(1 - math.log(2), abs=1e-12)
    assert right == pytest.approx(2 * math.log(2) - 1, abs=1e-12)


def test_prox_examples(g4):
    for name in KERNEL_NAMES:
        k = kernel(name)
        grid = Grid1D.for_kernel(k, 0, 5, 501) if math.isfinite(k.domain[0]) else g4
        ps = core.prox(point(grid, 2.0), k, 0.7, 3.0)
        assert ps.intervals == [(2.0, 2.0)] and ps.is_singleton
    assert core.prox(sampled(g4, np.abs), E, 1.0, 2.0).intervals == [(1.0, 1.0)]
    two = core.prox(core.indicator(g4, [-1.0, 1.0]), E, 1.0, 0.0)
    assert two.intervals == [(-1.0, -1.0), (1.0, 1.0)] and not two.is_singleton
    d = two.to_dict()
    assert set(d) == {"y", "lambda", "min_value", "intervals"}


def test_prox_errors(g4):
    with pytest.raises(BasePointOutsideU):
        core.prox(point(Grid1D.uniform(0, 2, 21), 1.0), BS, 1.0, -1.0)
    with pytest.raises(NonPositiveLambda):
        core.prox(point(g4, 1.0), E, 0.0, 1.0)
    with pytest.raises(NonPositiveLambda):
        core.envelope(point(g4, 1.0), E, -1.0)


def test_prox_hull_examples(g4):
    pair = core.indicator(g4, [-1.0, 1.0])
    assert core.prox_hull(pair, E, 1.0)(0.0) == pytest.approx(0.5, abs=1e-12)
    absf = sampled(g4, np.abs)
    assert np.allclose(core.prox_hull(absf, E, 1.0).values, absf.values, atol=1e-12)
    assert core.prox_hull(point(g4, 1.0), kernel("cubic"), 1.0)(1.0) == 0.0


def test_envelope_hull_sandwich_and_hull_envelope(g4):
    f = sampled(g4, lambda x: np.minimum(np.abs(x), np.abs(x - 2) + 0.3))
    env = core.envelope(f, E, 1.0)
    hull = core.prox_hull(f, E, 1.0)
    assert np.all(env.values <= hull.values + 1e-9)
    assert np.all(hull.values <= f.values + 1e-9)
    env_h = core.envelope(hull, E, 1.0)
    assert np.max(np.abs(env_h.values - env.values)) <= 2e-9


def test_threshold_examples():
    g = Grid1D.uniform(-10, 10, 2001)
    t = core.prox_bound_threshold(sampled(g, lambda x: -(x**2)), E)
    assert t.lower_certified == pytest.approx(0.5, rel=0.05)
    assert t.lower_certified <= t.upper_witness and t.grid_caveat
    assert math.isinf(core.prox_bound_threshold(sampled(g, np.abs), E).upper_witness)
    for name in KERNEL_NAMES:
        k = kernel(name)
        grid = Grid1D.for_kernel(k, 0, 5, 501) if math.isfinite(k.domain[0]) else g
        t = core.prox_bound_threshold(point(grid, 1.0), k)
        assert math.isinf(t.lower_certified) and math.isinf(t.upper_witness)
    assert core.prox_bound_threshold(sampled(g, np.abs), E).to_dict()["upper_witness"] == "inf"


def test_anisotropic_examples(g4):
    bk = kernel("burg_energy")
    g = Grid1D.for_kernel(bk, 0, 6, 601)
    env = core.anisotropic_envelope(point(g, 1.0), bk, Grid1D.uniform(1.5, 5, 36))
    x = env.x
    assert np.allclose(env.values, bk.phi(x - 1), atol=1e-12)
    q = core.anisotropic_envelope(sampled(g4, lambda x: x * x / 2), E)
    m = np.abs(g4.nodes) <= 2
    assert np.max(np.abs(q.values[m] - g4.nodes[m] ** 2 / 4)) <= g4.h
    absf = sampled(g4, np.abs)
    assert core.anisotropic_prox(absf, E, 0.0) == 0.0
    assert core.anisotropic_envelope(absf, E)(0.0) == 0.0
    with pytest.raises(PointOutsideSumDomain):
        core.anisotropic_prox(point(g, 1.0), bk, 0.5)


def test_anisotropic_envelope_convex_for_convex_input(g4):
    f = sampled(g4, lambda x: np.abs(x - 1) + 0.2 * x * x)
    assert convexity_defect(core.anisotropic_envelope(f, E))[0]


def test_projection_examples():
    g = Grid1D.uniform(0.2, 4, 381)
    assert core.bregman_project((g, [(1.0, 2.0)]), BS, 1.0, 3.0).intervals == [(2.0, 2.0)]
    ge = Grid1D.uniform(-3, 3, 61)
    assert core.bregman_project((ge, [-1.0, 1.0]), E, 1.0, 0.0).intervals == [(-1.0, -1.0), (1.0, 1.0)]
    assert core.bregman_project((ge, [(1.0, 2.0)]), E, 1.0, 1.5).intervals == [(1.5, 1.5)]
    with pytest.raises(EmptySet):
        core.bregman_project((ge, [(10.0, 11.0)]), E, 1.0, 0.0)
    with pytest.raises(EmptySet):
        core.bregman_project((Grid1D.uniform(-3, 3, 61), [(-2.0, -1.0)]), BS, 1.0, 1.0)


@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
def test_prox_via_anisotropic(g4, lam):
    assert core.prox_via_anisotropic_check(sampled(g4, np.abs), E, lam).passed
    assert core.prox_via_anisotropic_check(point(g4, 1.0), E, lam).passed
    bg = Grid1D.for_kernel(BS, 0, 6, 1501)
    assert core.prox_via_anisotropic_check(sampled(bg, lambda x: x * x / 2), BS, lam, np.linspace(0.2, 4, 21)).passed


def test_prox_via_anisotropic_rejects_nonconvex(g4):
    with pytest.raises(NonconvexInput):
        core.prox_via_anisotropic_check(sampled(g4, lambda x: -np.abs(x)), E, 1.0)


def test_envelope_gradient_examples(g4):
    assert core.envelope_gradient_check(point(g4, 1.0), E, 1.0).passed
    cg = Grid1D.uniform(-1, 5, 6001)
    rep = core.envelope_gradient_check(point(cg, 1.0), kernel("cubic"), 1.0, probes=[2.0])
    assert rep.passed and rep.sup_error <= 10 * cg.h
    skip = core.envelope_gradient_check(core.indicator(g4, [-1.0, 1.0]), E, 1.0, probes=[0.0, 2.0])
    assert skip.metadata["skipped"] == 1


def test_oracle_mode_envelope_agrees(g4):
    f = sampled(g4, lambda x: np.minimum(np.abs(x), np.abs(x - 2) + 0.3))
    fast = core.envelope_via_conjugate(f, E, 1.0)
    with use_oracle():
        slow = core.envelope_via_conjugate(f, E, 1.0)
    assert np.allclose(fast.values, slow.values, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(
    c=st.floats(-2, 2),
    a=st.floats(0.1, 3),
    lam1=st.floats(0.05, 2),
    factor=st.floats(1.1, 5),
    name=st.sampled_from(["energy", "boltzmann_shannon"]),
)
def test_envelope_monotone_in_lambda_and_below_f(c, a, lam1, factor, name):
    k = kernel(name)
    grid = Grid1D.uniform(-3, 3, 241) if name == "energy" else Grid1D.for_kernel(k, 0, 4, 241)
    f = sampled(grid, lambda x: a * np.abs(x - c))
    e1 = core.envelope(f, k, lam1)
    e2 = core.envelope(f, k, lam1 * factor)
    m = k.in_U(grid.nodes)
    assert np.all(e2.values[m] <= e1.values[m] + 1e-12)
    assert np.all(e1.values[m] <= f.values[m] + 1e-12)
    ref = brute_envelope(f, k, lam1, grid.nodes[m])
    assert np.allclose(ref, e1.values[m], atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), name=st.sampled_from(["energy", "boltzmann_shannon", "cubic"]))
def test_prox_composed_with_conj_grad_is_monotone(seed, name):
    # selections of prox o grad phi* are monotone: u < v gives min prox(u) <= min prox(v)
    rng = np.random.default_rng(seed)
    k = kernel(name)
    grid = Grid1D.for_kernel(k, 0, 4, 201) if name == "boltzmann_shannon" else Grid1D.uniform(-3, 3, 201)
    a, b, c = rng.normal(size=3)
    f = sampled(grid, lambda x: a * np.abs(x - c) + 0.3 * b * np.sin(3 * x))
    u = np.sort(rng.uniform(-2, 2, 12))
    hulls = [core.prox(f, k, 1.0, k.conj_grad(ui)).hull for ui in u]
    assert all(h0[0] <= h1[0] and h0[1] <= h1[1] for h0, h1 in zip(hulls, hulls[1:]))
