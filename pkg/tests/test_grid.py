import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bregprox.errors import ImproperFunction, ZeroNotInGrid
from bregprox.grid import (
    Grid1D,
    PLConvex,
    SampledFunction,
    conjugate_at,
    convexity_defect,
    epi_scale,
    inf_convolution,
    legendre_transform,
    lower_convex_envelope,
    use_oracle,
)
from bregprox.oracle import brute_conjugate, brute_infconv
from bregprox.verification import random_piecewise

from conftest import point, sampled


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid1D([1.0])
    with pytest.raises(ValueError):
        Grid1D([0.0, 0.0, 1.0])
    with pytest.raises(ValueError):
        Grid1D([0.0, np.inf])
    g = Grid1D.uniform(-1, 1, 5)
    assert g.h == 0.5 and g.n == 5
    assert Grid1D.merged(g, [0.3]).n == 6


def test_sampled_function_invariants():
    g = Grid1D.uniform(0, 1, 3)
    with pytest.raises(ImproperFunction):
        SampledFunction(g, [np.inf] * 3)
    with pytest.raises(ImproperFunction):
        SampledFunction(g, [0.0, -np.inf, 1.0])
    with pytest.raises(ImproperFunction):
        SampledFunction(g, [0.0, np.nan, 1.0])
    f = SampledFunction(g, [0.0, np.inf, 1.0])
    assert f(0.25) == math.inf and f(0.0) == 0.0 and f(2.0) == math.inf


def test_csv_and_json_roundtrip(tmp_path):
    g = Grid1D.uniform(-1, 1, 11)
    f = SampledFunction(g, np.where(g.nodes > 0.5, np.inf, g.nodes / 3), "f")
    path = tmp_path / "f.csv"
    f.to_csv(path)
    back = SampledFunction.from_csv(path)
    assert np.array_equal(back.values, f.values) and np.array_equal(back.x, f.x)
    again = SampledFunction.from_json(f.to_json())
    assert np.array_equal(again.values, f.values)
    assert path.read_text().splitlines()[0] == "x,value"


def test_conjugate_examples():
    g = Grid1D.uniform(-2, 2, 801)
    f = sampled(g, lambda x: x * x / 2)
    conj = legendre_transform(f, g)
    assert np.max(np.abs(conj.values - g.nodes**2 / 2)) <= g.h**2 / 2 + 1e-15
    p = point(g, 1.0)
    s = np.linspace(-3, 3, 13)
    assert np.array_equal(conjugate_at(p, s), s)
    a = sampled(Grid1D.uniform(-5, 5, 1001), np.abs)
    assert conjugate_at(a, [2.0])[0] == 5.0


def test_lower_envelope_examples():
    g = Grid1D.uniform(-2, 2, 401)
    f = sampled(g, lambda x: np.abs(x * x - 1))
    hull, env = lower_convex_envelope(f)
    assert env(0.0) == pytest.approx(0.0, abs=1e-12)
    assert env(1.5) == pytest.approx(1.25, abs=1e-12)
    q = sampled(g, lambda x: x * x)
    assert np.allclose(lower_convex_envelope(q)[1].values, q.values, rtol=0, atol=1e-14)
    assert np.all(np.diff(hull.slopes) >= 0)


def test_infconv_examples():
    g = Grid1D.uniform(-4, 4, 801)
    quad = sampled(g, lambda x: x * x / 2)
    out = inf_convolution(quad, quad)
    m = np.abs(g.nodes) <= 2
    assert np.max(np.abs(out.values[m] - g.nodes[m] ** 2 / 4)) <= g.h
    absf = sampled(g, np.abs)
    unit = inf_convolution(point(g, 0.0), absf, method="direct")
    assert np.allclose(unit.values, absf.values, atol=1e-14)
    shifted = inf_convolution(point(g, 1.0), absf, method="direct")
    inside = g.nodes >= g.lo + 1
    assert np.allclose(shifted.values[inside], np.abs(g.nodes[inside] - 1), atol=1e-12)


def test_epi_scale():
    g = Grid1D.uniform(-2, 2, 401)
    f = sampled(g, lambda x: x * x / 2)
    z = epi_scale(f, 0.0)
    assert z(0.0) == 0.0 and np.sum(z.finite) == 1
    two = epi_scale(f, 2.0)
    # off-node samples x/2 carry linear-interpolation error t*h^2/8
    assert np.max(np.abs(two.values - g.nodes**2 / 4)) <= 2 * g.h**2 / 8 + 1e-15
    assert np.allclose(epi_scale(f, 1.0).values, f.values)
    with pytest.raises(ZeroNotInGrid):
        epi_scale(f, 0.0, Grid1D.uniform(1, 2, 5))


def test_plconvex_exact_infconv():
    a = PLConvex(np.array([-1.0, 0.0, 1.0]), np.array([1.0, 0.0, 1.0]))
    b = PLConvex(np.array([0.0, 2.0]), np.array([0.0, 1.0]))
    c = a.inf_convolve(b)
    g = Grid1D.uniform(-1, 3, 401)
    ref = brute_infconv(a.evaluate(g), b.evaluate(Grid1D.uniform(0, 2, 201)), g)
    m = ref.finite
    assert np.allclose(c(g.nodes)[m], ref.values[m], atol=1e-9)


def test_convexity_defect_reports_witness():
    g = Grid1D.uniform(-1, 1, 201)
    ok, w, worst = convexity_defect(sampled(g, lambda x: -(x**2)))
    assert not ok and w is not None and worst < 0
    assert convexity_defect(sampled(g, np.abs))[0]
    gap = SampledFunction(g, np.where(np.abs(g.nodes) < 0.1, np.inf, 0.0))
    assert not convexity_defect(gap)[0]


grids = st.integers(min_value=20, max_value=200).map(lambda n: Grid1D.uniform(-2.0, 2.0, n))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), grid=grids)
def test_fast_conjugate_matches_brute(seed, grid):
    f = random_piecewise(np.random.default_rng(seed), grid)
    fast = legendre_transform(f)
    slow = brute_conjugate(f, fast.grid)
    assert np.max(np.abs(fast.values - slow.values)) <= 1e-9 * (1 + np.max(np.abs(slow.values)))
    assert convexity_defect(fast)[0]
    with use_oracle():
        assert np.array_equal(legendre_transform(f, fast.grid).values, slow.values)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_order_reversal_and_biconjugation(seed):
    rng = np.random.default_rng(seed)
    grid = Grid1D.uniform(-2.0, 2.0, 121)
    f = random_piecewise(rng, grid)
    bump = np.where(f.finite, f.values + rng.uniform(0, 1, grid.n), np.inf)
    g = f.with_values(bump)
    s = np.linspace(-5, 5, 41)
    assert np.all(conjugate_at(g, s) <= conjugate_at(f, s) + 1e-12)
    _, env = lower_convex_envelope(f)
    bic = legendre_transform(legendre_transform(f), grid)
    m = env.finite
    assert np.allclose(bic.values[m], env.values[m], atol=1e-9 * (1 + np.max(np.abs(env.values[m]))))
    assert np.all(env.values[m] <= f.values[m] + 1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_infconv_conjugate_path_matches_direct_on_convex_data(seed):
    rng = np.random.default_rng(seed)
    grid = Grid1D.uniform(-2.0, 2.0, 81)
    a, b = rng.uniform(0.1, 2, 2)
    c = rng.uniform(-1, 1)
    f = sampled(grid, lambda x: a * x * x + c * x)
    g = sampled(grid, lambda x: b * np.abs(x - c))
    out = Grid1D.uniform(-2.0, 2.0, 81)
    fast = inf_convolution(f, g, out, method="conjugate")
    slow = inf_convolution(f, g, out, method="direct")
    assert np.all(fast.values <= slow.values + 1e-9)
    assert convexity_defect(fast)[0]
