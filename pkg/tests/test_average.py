import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bregprox import average as avg
from bregprox import core
from bregprox.errors import (
    AssumptionWarning,
    EmptyCommonDomain,
    NonconvexInputForAnisotropicForm,
    NonPositiveLambda,
    ThresholdViolated,
)
from bregprox.grid import Grid1D, SampledFunction
from bregprox.kernels import kernel

from conftest import point, sampled

E = kernel("energy")
BS = kernel("boltzmann_shannon")


@pytest.fixture(scope="module")
def g4():
    return Grid1D.uniform(-4.0, 4.0, 2001)


@pytest.fixture(scope="module")
def quad_pair():
    g = Grid1D.uniform(-8.0, 8.0, 4001)
    return sampled(g, lambda x: x * x, "x^2"), sampled(g, np.zeros_like, "0")


def test_quadratic_pair_value(quad_pair):
    f1, f2 = quad_pair
    P = avg.proximal_average(avg.AverageSpec(f1, f2, 0.5, 1.0, E))
    assert P(2.0) == pytest.approx(1.0, abs=1e-3)


def test_cubic_counterexample_value():
    g = Grid1D.uniform(-2.0, 2.0, 401)
    spec = avg.AverageSpec(point(g, 1.0), sampled(g, np.zeros_like), 0.5, 1.0, kernel("cubic"))
    assert avg.proximal_average(spec)(0.5) == pytest.approx(0.375, abs=1e-12)


def test_alpha_one_and_equal_inputs_give_hull(g4):
    f = sampled(g4, lambda x: np.minimum(np.abs(x), np.abs(x - 2) + 0.3))
    hull = core.prox_hull(f, E, 1.0)
    other = sampled(g4, lambda x: (x + 1) ** 2)
    P1 = avg.proximal_average(avg.AverageSpec(f, other, 1.0, 1.0, E))
    assert np.max(np.abs(P1.values - hull.values)) <= 1e-9
    Pf = avg.proximal_average(avg.AverageSpec(f, f, 0.4, 1.0, E))
    assert np.max(np.abs(Pf.values - hull.values)) <= 1e-9


def test_domain_is_weighted_sum(g4):
    spec = avg.AverageSpec(core.indicator(g4, [0.0]), core.indicator(g4, [2.0]), 0.5, 1.0, E)
    assert avg.domain_of_average(spec) == (1.0, 1.0)
    P = avg.proximal_average(spec)
    assert np.sum(P.finite) == 1 and P(1.0) == pytest.approx(0.5, abs=1e-12)
    rep = avg.verify_prox_identity(spec, [-2.0, 0.0, 3.0], P)
    assert rep.passed and rep.sup_error == 0.0


def test_prox_identity_examples(g4):
    spec = avg.AverageSpec(sampled(g4, np.abs), sampled(g4, np.zeros_like), 0.5, 1.0, E)
    P = avg.proximal_average(spec)
    assert core.prox(P, E, 1.0, 2.0).hull == pytest.approx((1.5, 1.5), abs=2 * g4.h)
    assert avg.verify_prox_identity(spec, [2.0], P).passed
    pair = core.indicator(g4, [-1.0, 1.0])
    spec2 = avg.AverageSpec(pair, pair, 0.5, 1.0, E)
    P2 = avg.proximal_average(spec2)
    assert core.prox(P2, E, 1.0, 0.0).hull == (-1.0, 1.0)
    assert avg.verify_prox_identity(spec2, [0.0], P2).passed


def test_envelope_identity_examples(g4):
    spec = avg.AverageSpec(sampled(g4, lambda x: np.abs(x - 1)), sampled(g4, lambda x: (x + 1) ** 2), 0.3, 1.0, E)
    assert avg.verify_envelope_identity(spec).passed
    assert avg.verify_envelope_identity(spec.with_(alpha=1.0)).passed
    bg = Grid1D.for_kernel(BS, 0, 6, 1501)
    ind = avg.AverageSpec(core.indicator(bg, [(0.0, 1.0)]), core.indicator(bg, [(2.0, 3.0)]), 0.5, 1.0, BS)
    assert avg.verify_envelope_identity(ind).passed


def test_duality_examples(quad_pair, g4):
    f1, f2 = quad_pair
    rep = avg.verify_duality(avg.AverageSpec(f1, f2, 0.5, 1.0, E))
    assert rep.passed and rep.metadata["anisotropic_error"] != "skipped"
    absp = avg.AverageSpec(sampled(g4, lambda x: np.abs(x - 1)), sampled(g4, lambda x: np.abs(x + 1)), 0.5, 1.0, E)
    assert avg.verify_duality(absp).passed
    assert avg.verify_duality(absp.with_(alpha=0.0)).passed


def test_anisotropic_duality_requires_convex_inputs(g4):
    f = sampled(g4, lambda x: np.minimum(np.abs(x), np.abs(x - 2) + 0.3))
    spec = avg.AverageSpec(f, sampled(g4, np.abs), 0.5, 1.0, E)
    assert avg.verify_duality(spec).metadata["anisotropic_error"] == "skipped"
    with pytest.raises(NonconvexInputForAnisotropicForm):
        avg.verify_duality(spec, anisotropic="always")


def test_scaled_form_agrees(g4):
    spec = avg.AverageSpec(sampled(g4, lambda x: np.abs(x - 1)), sampled(g4, lambda x: (x + 1) ** 2), 0.3, 0.7, E)
    a = avg.proximal_average(spec)
    b = avg.proximal_average(spec, method="scaled")
    m = a.finite
    assert np.array_equal(m, b.finite)
    assert np.max(np.abs(a.values[m] - b.values[m]) / (1 + np.abs(a.values[m]))) <= 1e-9


def test_validation_errors(g4):
    f = sampled(g4, np.abs)
    with pytest.raises(ValueError):
        avg.proximal_average(avg.AverageSpec(f, f, 1.5, 1.0, E))
    with pytest.raises(NonPositiveLambda):
        avg.proximal_average(avg.AverageSpec(f, f, 0.5, 0.0, E))
    neg = sampled(Grid1D.uniform(-3, -1, 21), np.abs)
    with pytest.raises(EmptyCommonDomain):
        avg.proximal_average(avg.AverageSpec(neg, neg, 0.5, 1.0, BS))
    concave = sampled(g4, lambda x: -(x**2))
    with pytest.raises(ThresholdViolated):
        avg.proximal_average(avg.AverageSpec(concave, f, 0.5, 1.0, E))
    assert avg.proximal_average(avg.AverageSpec(concave, f, 0.5, 0.4, E)).finite.any()


def test_burg_kernel_warns():
    bk = kernel("burg_energy")
    g = Grid1D.for_kernel(bk, 0, 4, 401)
    with pytest.warns(AssumptionWarning):
        avg.proximal_average(avg.AverageSpec(point(g, 1.0), point(g, 2.0), 0.5, 1.0, bk))


def test_convexity_certificate_energy(g4):
    spec = avg.AverageSpec(sampled(g4, np.abs), sampled(g4, lambda x: x * x), 0.5, 1.0, E)
    cert = avg.convexity_certificate(avg.proximal_average(spec), E, spec)
    assert cert.passed and cert.p_itself.passed
    assert [r.name for r in cert.reports] == ["convexity(lam*P+phi)", "convexity(P)", "convexity_consistency"]


def test_sweep_writes_dataset(tmp_path, g4):
    spec = avg.AverageSpec(sampled(g4, lambda x: np.abs(x - 1)), sampled(g4, lambda x: np.abs(x + 1)), 0.5, 1.0, E)
    res = avg.sweep(spec, [0.5], [0.01, 0.1, 1.0, 10.0], workers=2)
    assert res.passed
    res.write(tmp_path)
    assert (tmp_path / "P_a0.5_l0.01.csv").exists()
    data = json.loads((tmp_path / "report.json").read_text())
    assert all(d["pass"] for d in data)
    P = res.averages[(0.5, 0.01)]
    m = (np.abs(P.x) <= 3) & P.finite
    target = 0.5 * np.abs(P.x - 1) + 0.5 * np.abs(P.x + 1)
    assert np.max(np.abs(P.values[m] - target[m])) <= 0.05
    serial = avg.sweep(spec, [0.5], [0.01, 0.1, 1.0, 10.0], workers=1)
    for key, val in serial.averages.items():
        assert np.array_equal(val.values, res.averages[key].values)


@settings(max_examples=15, deadline=None)
@given(
    alpha=st.floats(0.0, 1.0),
    lam=st.floats(0.2, 3.0),
    c1=st.floats(-1.5, 1.5),
    c2=st.floats(-1.5, 1.5),
)
def test_average_properties(alpha, lam, c1, c2):
    g = Grid1D.uniform(-3.0, 3.0, 301)
    spec = avg.AverageSpec(sampled(g, lambda x: np.abs(x - c1)), sampled(g, lambda x: (x - c2) ** 2), alpha, lam, E)
    P = avg.proximal_average(spec)
    cert = avg.convexity_certificate(P, E, spec)
    assert cert.passed and cert.p_itself.passed
    # sandwich between the epi-average and the arithmetic average
    lower = avg.epi_average(spec)(P.x)
    upper = avg.arithmetic_average(spec, P.grid)
    slack = 5 * g.h * spec.slope_bound()
    m = P.finite
    assert np.all(P.values[m] <= upper[m] + slack)
    assert np.all(P.values[m] >= lower[m] - slack)
