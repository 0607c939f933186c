"""The ``verify`` suite: every identity the library relies on, run for one kernel."""
from __future__ import annotations

import math
import os
import warnings
from typing import Callable, Dict, List

import numpy as np

from . import average as avg
from . import core
from .errors import AssumptionWarning
from .grid import (
    Grid1D,
    SampledFunction,
    convexity_defect,
    inf_convolution,
    legendre_transform,
    lower_convex_envelope,
)
from .kernels import (
    LegendreKernel,
    bregman_distance,
    kernel,
    symmetrized_convexity_probe,
    symmetrized_distance,
)
from .oracle import brute_conjugate, brute_envelope
from .reports import VerificationReport, report_from_errors

SUITES = ("kernels", "grid", "core", "average")

# known outcome of the randomized S_phi midpoint test
EXPECTED_S_CONVEX = {"energy": True, "boltzmann_shannon": True, "cubic": False}


def default_seed() -> int:
    return int(os.environ.get("BREGMAN_SEED", "42"))


def working_grid(k: LegendreKernel, n: int = 2001) -> Grid1D:
    if math.isfinite(k.domain[0]):
        return Grid1D.for_kernel(k, 0.0, 6.0, (n - 1) * 3 // 4 + 1)
    return Grid1D.uniform(-4.0, 4.0, n)


def _interior_sample(k: LegendreKernel, count: int = 2001) -> np.ndarray:
    lo, hi = k.domain
    if math.isfinite(lo):
        return np.geomspace(1e-3, 50.0, count) + lo
    return np.linspace(-20.0, 20.0, count)


def suite_kernels(k: LegendreKernel, seed: int) -> List[VerificationReport]:
    x = _interior_sample(k)
    g = k.grad(x)
    fen = np.abs(k.conj(g) + k.phi(x) - g * x) / (1.0 + np.abs(k.phi(x)))
    inv = np.abs(k.conj_grad(g) - x) / (1.0 + np.abs(x))
    rng = np.random.default_rng(seed)
    a, b = rng.choice(x, 2000), rng.choice(x, 2000)
    S = symmetrized_distance(k, a, b)
    sym = np.abs(S - bregman_distance(k, a, b) - bregman_distance(k, b, a)) / (1.0 + np.abs(S))
    mono = float(max(0.0, -np.min(np.diff(g))))
    reports = [
        report_from_errors("fenchel_equality", x, fen, 1e-10, kernel=k.name),
        report_from_errors("legendre_inversion", x, inv, 1e-12, kernel=k.name),
        report_from_errors("symmetrized_equals_two_distances", a, sym, 1e-9, kernel=k.name),
        VerificationReport("gradient_increasing", mono, None, 0.0, {"kernel": k.name}),
    ]
    lo, hi = k.domain
    region = ((0.1, 4.0), (0.1, 4.0)) if math.isfinite(lo) else ((-3.0, 3.0), (-3.0, 3.0))
    if k.name == "cubic":
        region = ((0.0 + 1e-9, 3.0), (0.0 + 1e-9, 3.0))
    probe = symmetrized_convexity_probe(k, region, samples=10_000, rng_seed=seed)
    expected = EXPECTED_S_CONVEX.get(k.name)
    if expected is None:
        reports.append(VerificationReport("symmetrized_convexity_probe", 0.0, None, 0.0, probe.to_dict()))
    else:
        ok = probe.passed == expected
        reports.append(
            VerificationReport(
                "symmetrized_convexity_probe", 0.0 if ok else 1.0, None, 0.0, dict(probe.to_dict(), expected_convex=expected)
            )
        )
    return reports


def random_piecewise(rng: np.random.Generator, grid: Grid1D) -> SampledFunction:
    """A random piecewise function: quadratic and absolute-value pieces, some +inf gaps."""
    x = grid.nodes
    pieces = rng.integers(2, 6)
    cuts = np.sort(rng.uniform(grid.lo, grid.hi, pieces - 1))
    which = np.searchsorted(cuts, x)
    vals = np.empty_like(x)
    for p in range(pieces):
        m = which == p
        a, b, c = rng.normal(size=3)
        vals[m] = a * x[m] ** 2 + b * np.abs(x[m] - c) + rng.normal()
    if rng.random() < 0.5:
        gap_lo = rng.uniform(grid.lo, grid.hi)
        vals[(x > gap_lo) & (x < gap_lo + 0.2 * (grid.hi - grid.lo))] = np.inf
    if not np.any(np.isfinite(vals)):
        vals[0] = 0.0
    return SampledFunction(grid, vals, "random")


def suite_grid(k: LegendreKernel, seed: int) -> List[VerificationReport]:
    rng = np.random.default_rng(seed)
    grid = Grid1D.uniform(-3.0, 3.0, 601)
    worst, wx = 0.0, None
    convex_ok = True
    for _ in range(20):
        f = random_piecewise(rng, grid)
        fast = legendre_transform(f)
        slow = brute_conjugate(f, fast.grid)
        d = np.abs(fast.values - slow.values)
        j = int(np.argmax(d))
        if d[j] > worst:
            worst, wx = float(d[j]), float(fast.x[j])
        convex_ok &= convexity_defect(fast)[0]
    reports = [
        VerificationReport("conjugate_matches_brute_force", worst, wx, 1e-12, {"functions": 20}),
        VerificationReport("conjugate_is_convex", 0.0 if convex_ok else 1.0, None, 0.0, {}),
    ]
    f = random_piecewise(rng, grid)
    _, env = lower_convex_envelope(f)
    bic = legendre_transform(legendre_transform(f), grid)
    m = np.isfinite(env.values)
    scale = 1.0 + np.max(np.abs(env.values[m]))
    reports.append(report_from_errors("biconjugate_is_hull", grid.nodes[m], np.abs(bic.values[m] - env.values[m]) / scale, 1e-10))
    unit = SampledFunction(grid, np.where(grid.nodes == grid.nodes[grid.nearest_index(0.0)], 0.0, np.inf), "unit")
    g = SampledFunction(grid, np.abs(grid.nodes), "abs")
    ic = inf_convolution(unit, g, grid, method="direct")
    reports.append(report_from_errors("infconv_unit_law", grid.nodes, np.abs(ic.values - g.values), 1e-12))
    return reports


def _probe_points(k: LegendreKernel) -> np.ndarray:
    return np.linspace(0.2, 4.0, 21) if math.isfinite(k.domain[0]) else np.linspace(-3.0, 3.0, 21)


def suite_core(k: LegendreKernel, seed: int) -> List[VerificationReport]:
    grid = working_grid(k)
    x = grid.nodes
    h = grid.h
    f = SampledFunction(grid, np.abs(x - 1.0), "|x-1|")
    lam = 1.0
    env = core.envelope(f, k, lam)
    envc = core.envelope_via_conjugate(f, k, lam)
    L = max(1.0, float(np.max(np.abs(np.diff(f.values) / np.diff(x)))))
    m = np.isfinite(env.values)
    reports = [
        report_from_errors("envelope_conjugate_formula", x[m], np.abs(env.values[m] - envc.values[m]), 5 * h * L, h=h),
    ]
    brute = brute_envelope(f, k, lam, x[m])
    reports.append(report_from_errors("envelope_matches_brute_force", x[m], np.abs(brute - env.values[m]), 1e-12))
    hull = core.prox_hull(f, k, lam)
    U = k.in_U(x)
    gap1 = np.where(U, env.values - hull.values, -np.inf)
    gap2 = np.where(U, hull.values - f.values, -np.inf)
    viol = np.maximum(gap1, gap2)
    j = int(np.argmax(viol))
    reports.append(VerificationReport("envelope_below_hull_below_f", max(0.0, float(viol[j])), float(x[j]), 1e-9, {}))
    reports.append(core.prox_via_anisotropic_check(f, k, lam, probes=_probe_points(k)))
    point = core.indicator(grid, [1.0], "indicator{1}")
    reports.append(core.envelope_gradient_check(point, k, lam, probes=_probe_points(k)))
    return reports


def suite_average(k: LegendreKernel, seed: int) -> List[VerificationReport]:
    grid = working_grid(k)
    x = grid.nodes
    f1 = SampledFunction(grid, np.abs(x - 1.0), "|x-1|")
    f2 = SampledFunction(grid, (x + 1.0) ** 2, "(x+1)^2")
    spec = avg.AverageSpec(f1, f2, 0.3, 1.0, k)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AssumptionWarning)
        P = avg.proximal_average(spec)
        Ps = avg.proximal_average(spec, method="scaled")
    m = P.finite
    reports = [
        report_from_errors(
            "scaled_form_agrees", P.x[m], np.abs(P.values[m] - Ps.values[m]) / (1.0 + np.abs(P.values[m])), 1e-9
        ),
        avg.verify_envelope_identity(spec, P),
        avg.verify_prox_identity(spec, _probe_points(k), P),
        avg.verify_duality(spec, P),
    ]
    cert = avg.convexity_certificate(P, k, spec)
    reports += [cert.lam_p_plus_phi, cert.consistency]
    sw = avg.sweep(spec, [0.3], [0.1, 1.0, 10.0])
    reports += sw.reports
    return reports


_SUITES: Dict[str, Callable] = {
    "kernels": suite_kernels,
    "grid": suite_grid,
    "core": suite_core,
    "average": suite_average,
}


def run_suite(suite: str, kernel_name: str, seed: int = None) -> List[VerificationReport]:
    k = kernel(kernel_name)
    seed = default_seed() if seed is None else seed
    names = SUITES if suite == "all" else (suite,)
    out: List[VerificationReport] = []
    for name in names:
        if name not in _SUITES:
            raise ValueError(f"unknown suite {name!r}; expected all or one of {', '.join(SUITES)}")
        for r in _SUITES[name](k, seed):
            r.metadata.setdefault("suite", name)
            out.append(r)
    return out
