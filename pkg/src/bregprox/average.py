"""The alpha-weighted Bregman proximal average of two sampled functions.

P = [alpha (f1 + phi/lam)* + (1 - alpha) (f2 + phi/lam)*]* - phi/lam

All conjugates share one dual grid that contains every hull slope of both
inputs, so on grid data the formula is evaluated without discretisation
error inside dom P.
"""
from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import envelope_at, prox, prox_bound_threshold, prox_hull
from .errors import (
    AssumptionWarning,
    EmptyCommonDomain,
    NonconvexInputForAnisotropicForm,
    NonPositiveLambda,
    ThresholdViolated,
)
from .grid import (
    CONVEXITY_RTOL,
    Grid1D,
    PLConvex,
    SampledFunction,
    convexity_defect,
    default_dual_grid,
    ext_sub,
    hull_of,
    legendre_transform,
    lower_hull,
)
from .kernels import LegendreKernel, symmetrized_convexity_probe
from .reports import VerificationReport, report_from_errors

DOMAIN_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class AverageSpec:
    f1: SampledFunction
    f2: SampledFunction
    alpha: float
    lam: float
    kernel: LegendreKernel
    dual_grid: Optional[Grid1D] = None
    out_grid: Optional[Grid1D] = None

    def with_(self, **changes) -> "AverageSpec":
        return replace(self, **changes)

    @property
    def h(self) -> float:
        return max(self.f1.grid.max_step, self.f2.grid.max_step)

    def slope_bound(self) -> float:
        """Largest finite adjacent-node slope of either input, at least 1."""
        best = 1.0
        for f in (self.f1, self.f2):
            fin = f.finite
            both = fin[1:] & fin[:-1]
            if np.any(both):
                d = (f.values[1:] - f.values[:-1])[both] / np.diff(f.x)[both]
                best = max(best, float(np.max(np.abs(d))))
        return best


def _summed(f: SampledFunction, k: LegendreKernel, lam: float, scale: float = 1.0) -> SampledFunction:
    """scale * (f + phi/lam) restricted to dom phi."""
    inside = k.in_dom(f.x) & f.finite
    if not np.any(inside):
        raise EmptyCommonDomain(f"dom {f.label} and dom phi ({k.name}) share no grid node")
    vals = np.full(f.grid.n, np.inf)
    vals[inside] = scale * (f.values[inside] + k.phi(f.x[inside]) / lam)
    return SampledFunction(f.grid, vals, f"{f.label}+phi/{lam:g}")


def _weights(alpha: float):
    return [(w, i) for i, w in enumerate((alpha, 1.0 - alpha)) if w != 0.0]


def domain_of_average(spec: AverageSpec) -> Tuple[float, float]:
    """alpha conv(dom f1 cap dom phi) + (1 - alpha) conv(dom f2 cap dom phi)."""
    k = spec.kernel
    lo = hi = 0.0
    for w, i in _weights(spec.alpha):
        f = (spec.f1, spec.f2)[i]
        xs = f.x[f.finite & k.in_dom(f.x)]
        if xs.size == 0:
            raise EmptyCommonDomain(f"dom {f.label} misses dom phi")
        lo += w * xs[0]
        hi += w * xs[-1]
    return float(lo), float(hi)


def _default_out_grid(spec: AverageSpec) -> Grid1D:
    g1, g2 = spec.f1.grid, spec.f2.grid
    lo, hi = domain_of_average(spec)
    base = g1 if (g1.n == g2.n and np.array_equal(g1.nodes, g2.nodes)) else Grid1D.merged(g1, g2)
    # endpoints within rounding of an existing node would create a near-duplicate node
    tol = 1e-12 * (base.hi - base.lo)
    near = lambda v: np.min(np.abs(base.nodes - v)) <= tol
    extra = [v for v in (lo, hi) if base.lo <= v <= base.hi and not near(v)]
    return Grid1D.merged(base, extra) if extra else base


def _dual_grid(spec: AverageSpec, summed: Sequence[SampledFunction]) -> Grid1D:
    if spec.dual_grid is not None:
        return spec.dual_grid
    n = max(spec.f1.grid.n, spec.f2.grid.n)
    return default_dual_grid(*[hull_of(g) for g in summed], n=n)


def validate(spec: AverageSpec, check_thresholds: bool = True) -> None:
    if not (0.0 <= spec.alpha <= 1.0):
        raise ValueError(f"alpha must lie in [0, 1], got {spec.alpha}")
    if not spec.lam > 0:
        raise NonPositiveLambda(f"lambda must be positive, got {spec.lam}")
    k = spec.kernel
    for f in (spec.f1, spec.f2):
        if not np.any(f.finite & k.in_dom(f.x)):
            raise EmptyCommonDomain(f"dom {f.label} and dom phi ({k.name}) share no grid node")
    if check_thresholds:
        for f in (spec.f1, spec.f2):
            est = prox_bound_threshold(f, k)
            if not spec.lam < est.lower_certified:
                raise ThresholdViolated(
                    f"lambda={spec.lam:g} is not below the certified threshold {est.lower_certified:g} of {f.label}"
                )
    if not k.a5_compliant:
        warnings.warn(f"kernel {k.name}: {k.a5_note}", AssumptionWarning, stacklevel=3)


def _mask_and_shift(
    spec: AverageSpec, hstar: SampledFunction, out_grid: Grid1D, scale: float, shift_by_phi: float
) -> np.ndarray:
    k = spec.kernel
    lo, hi = domain_of_average(spec)
    x = out_grid.nodes
    tol = DOMAIN_RTOL * (1.0 + np.abs(x))
    keep = (x >= lo - tol) & (x <= hi + tol) & k.in_dom(x)
    vals = np.full(out_grid.n, np.inf)
    vals[keep] = scale * ext_sub(hstar.values[keep], shift_by_phi * k.phi(x[keep]))
    return vals


def proximal_average(spec: AverageSpec, method: str = "conjugate", check: bool = True) -> SampledFunction:
    """Sample P on ``spec.out_grid`` (default: the input grid plus the endpoints of dom P).

    ``method="scaled"`` evaluates the equivalent form
    (1/lam) ([alpha (lam f1 + phi)* + (1 - alpha) (lam f2 + phi)*]* - phi).
    """
    validate(spec, check_thresholds=check)
    k, lam, alpha = spec.kernel, spec.lam, spec.alpha
    out_grid = spec.out_grid if spec.out_grid is not None else _default_out_grid(spec)
    summed = [_summed(spec.f1, k, lam), _summed(spec.f2, k, lam)]
    dual = _dual_grid(spec, summed)
    if method == "conjugate":
        parts = [(w, summed[i]) for w, i in _weights(alpha)]
        dual_used = dual
    elif method == "scaled":
        parts = [(w, _summed((spec.f1, spec.f2)[i], k, lam, scale=lam)) for w, i in _weights(alpha)]
        dual_used = Grid1D(lam * dual.nodes)
    else:
        raise ValueError(f"unknown method {method!r}")
    H = np.zeros(dual_used.n)
    for w, g in parts:
        H = H + w * legendre_transform(g, dual_used).values
    hsf = SampledFunction(dual_used, H, "H")
    hstar = legendre_transform(hsf, out_grid)
    if method == "conjugate":
        vals = _mask_and_shift(spec, hstar, out_grid, 1.0, 1.0 / lam)
    else:
        vals = _mask_and_shift(spec, hstar, out_grid, 1.0 / lam, 1.0)
    label = f"P[{k.name},lam={lam:g},alpha={alpha:g}]({spec.f1.label};{spec.f2.label})"
    return SampledFunction(out_grid, vals, label)


# ---------------------------------------------------------------------------
# identity checks


def _base_nodes(spec: AverageSpec) -> np.ndarray:
    x = spec.f1.grid.nodes
    return x[spec.kernel.in_U(x)]


def verify_envelope_identity(
    spec: AverageSpec, P: Optional[SampledFunction] = None, tolerance: float = 1e-2, points=None
) -> VerificationReport:
    """env(P) against alpha env(f1) + (1 - alpha) env(f2) at U-nodes."""
    P = proximal_average(spec) if P is None else P
    k, lam, a = spec.kernel, spec.lam, spec.alpha
    y = _base_nodes(spec) if points is None else np.asarray(points, dtype=float)
    lhs = envelope_at(P, k, lam, y)
    rhs = np.zeros(y.size)
    for w, i in _weights(a):
        rhs = rhs + w * envelope_at((spec.f1, spec.f2)[i], k, lam, y)
    err = np.abs(lhs - rhs)
    err[~np.isfinite(lhs) & ~np.isfinite(rhs)] = np.nan
    return report_from_errors(
        "envelope_identity", y, err, tolerance, kernel=k.name, lam=lam, alpha=a, h=spec.h
    )


def verify_prox_identity(
    spec: AverageSpec, probe_points, P: Optional[SampledFunction] = None, tolerance: Optional[float] = None
) -> VerificationReport:
    """Hausdorff distance between prox(P)(y) and the Minkowski combination of convexified prox sets."""
    P = proximal_average(spec) if P is None else P
    k, lam, a = spec.kernel, spec.lam, spec.alpha
    tolerance = 2 * spec.h if tolerance is None else tolerance
    probes = np.asarray(probe_points, dtype=float)
    errs = np.empty(probes.size)
    for j, y in enumerate(probes):
        pa, pb = prox(P, k, lam, y).hull
        ra = rb = 0.0
        for w, i in _weights(a):
            ia, ib = prox((spec.f1, spec.f2)[i], k, lam, y).hull
            ra += w * ia
            rb += w * ib
        errs[j] = max(abs(pa - ra), abs(pb - rb))
    return report_from_errors("prox_identity", probes, errs, tolerance, kernel=k.name, lam=lam, alpha=a, h=spec.h)


def _conj_of_points(xs: np.ndarray, vs: np.ndarray, s: np.ndarray) -> np.ndarray:
    return PLConvex(*lower_hull(xs, vs)).conjugate_at(s)


def _jointly_convex(k: LegendreKernel) -> bool:
    lo, hi = k.domain
    a = lo + 0.05 if math.isfinite(lo) else -3.0
    b = hi - 0.05 if math.isfinite(hi) else (a + 6.0 if math.isfinite(lo) else 3.0)
    return symmetrized_convexity_probe(k, ((a, b), (a, b)), samples=2000, rng_seed=42).passed


def verify_duality(
    spec: AverageSpec,
    P: Optional[SampledFunction] = None,
    tolerance: float = 1e-2,
    anisotropic: str = "auto",
    window: float = 0.8,
) -> VerificationReport:
    """(lam P + phi)* against alpha (lam f1 + phi)* + (1 - alpha) (lam f2 + phi)* on the dual grid.

    With convex inputs and a jointly convex Bregman distance the anisotropic
    form P* box psi = alpha f1* box psi + (1 - alpha) f2* box psi, where
    psi = (1/lam) epi-times phi*, is checked as well, at dual points z with
    grad phi*(lam z) in the central ``window`` fraction of dom P.
    ``anisotropic`` is one of ``auto``, ``always`` or ``never``.
    """
    from .core import conjugate_aprox

    P = proximal_average(spec) if P is None else P
    k, lam, a = spec.kernel, spec.lam, spec.alpha
    summed = [_summed(spec.f1, k, lam), _summed(spec.f2, k, lam)]
    s = lam * _dual_grid(spec, summed).nodes

    px, pv = P.finite_points()
    lhs = _conj_of_points(px, lam * pv + k.phi(px), s)
    rhs = np.zeros(s.size)
    for w, i in _weights(a):
        f = (spec.f1, spec.f2)[i]
        m = f.finite & k.in_dom(f.x)
        rhs = rhs + w * _conj_of_points(f.x[m], lam * f.values[m] + k.phi(f.x[m]), s)
    conj_err = np.abs(lhs - rhs)
    j = int(np.argmax(conj_err))
    sup, witness = float(conj_err[j]), float(s[j])
    meta = {"kernel": k.name, "lam": lam, "alpha": a, "h": spec.h, "conj_error": sup}

    convex_inputs = spec.f1.is_convex_data() and spec.f2.is_convex_data()
    run_aniso = anisotropic == "always" or (anisotropic == "auto" and convex_inputs and _jointly_convex(k))
    if anisotropic == "always" and not convex_inputs:
        raise NonconvexInputForAnisotropicForm("the anisotropic duality form needs convex inputs")
    if run_aniso:
        # probe z whose primal counterpart grad phi*(lam z) sits in the central
        # window of dom P; near a singular boundary of U the interpolant of P is poor
        plo, phi_ = px[0], px[-1]
        pad = 0.5 * (1.0 - window) * (phi_ - plo)
        zlo, zhi = k.grad(np.array([plo + pad, phi_ - pad])) / lam
        z = s / lam
        z = z[(z >= zlo) & (z <= zhi)]
        if z.size < 2:
            z = np.linspace(zlo, zhi, 101)
        if z.size > 401:
            z = z[np.linspace(0, z.size - 1, 401).astype(int)]
        _, left = conjugate_aprox(PLConvex(*lower_hull(px, pv)), k, lam, z)
        right = np.zeros(z.size)
        for w, i in _weights(a):
            f = (spec.f1, spec.f2)[i]
            right = right + w * conjugate_aprox(hull_of(f), k, lam, z)[1]
        aerr = np.abs(left - right)
        ja = int(np.argmax(aerr))
        meta["anisotropic_error"] = float(aerr[ja])
        if aerr[ja] > sup:
            sup, witness = float(aerr[ja]), float(z[ja])
    else:
        meta["anisotropic_error"] = "skipped"
    return VerificationReport("duality", sup, witness, tolerance, meta)


# ---------------------------------------------------------------------------
# convexity certificate


@dataclass
class ConvexityCertificate:
    lam_p_plus_phi: VerificationReport
    p_itself: VerificationReport
    consistency: VerificationReport

    @property
    def reports(self) -> List[VerificationReport]:
        return [self.lam_p_plus_phi, self.p_itself, self.consistency]

    @property
    def passed(self) -> bool:
        """(a) and (c) are mandatory; (b) is informative."""
        return self.lam_p_plus_phi.passed and self.consistency.passed


def _convexity_report(name: str, f: SampledFunction, **kw) -> VerificationReport:
    meta = kw.pop("meta", {})
    ok, witness, worst = convexity_defect(f, **kw)
    defect = 0.0 if ok else (math.inf if math.isinf(worst) else -worst)
    return VerificationReport(name, defect, witness, CONVEXITY_RTOL, dict(meta, worst_second_difference=worst))


# P is a piecewise-linear function minus phi/lam; second differences taken
# over this many cells keep the interpolation ripple small next to genuine curvature
CERTIFICATE_STRIDE = 8


def convexity_certificate(
    P: SampledFunction, k: LegendreKernel, spec: AverageSpec, stride: int = CERTIFICATE_STRIDE
) -> ConvexityCertificate:
    """(a) lam P + phi convex, (b) P convex, (c) (b) holds whenever it must.

    (b) must hold when the kernel passes the symmetrized-distance probe and
    both inputs are convex data.
    """
    lam = spec.lam
    lp = P.with_values(np.where(P.finite, lam * P.values + k.phi(P.x), np.inf), label="lam*P+phi")
    a = _convexity_report("convexity(lam*P+phi)", lp, meta={"kernel": k.name})
    b = _convexity_report(
        "convexity(P)",
        P,
        stride=stride,
        curvature=lambda x: k.hess(x) / lam,
        meta={"kernel": k.name, "stride": stride},
    )
    s_convex = _jointly_convex(k)
    inputs_convex = spec.f1.is_convex_data() and spec.f2.is_convex_data()
    required = s_convex and inputs_convex
    violated = required and not b.passed
    c = VerificationReport(
        "convexity_consistency",
        b.sup_error if violated else 0.0,
        b.witness_x if violated else None,
        CONVEXITY_RTOL,
        {"symmetrized_distance_convex": s_convex, "inputs_convex": inputs_convex, "p_must_be_convex": required},
    )
    return ConvexityCertificate(a, b, c)


# ---------------------------------------------------------------------------
# limits and sweeps


def epi_average(spec: AverageSpec) -> PLConvex:
    """(alpha epi-times conv f1) box ((1 - alpha) epi-times conv f2), inputs restricted to dom phi."""
    k = spec.kernel
    hulls = []
    for f in (spec.f1, spec.f2):
        m = f.finite & k.in_dom(f.x)
        hulls.append(PLConvex(*lower_hull(f.x[m], f.values[m])))
    return hulls[0].epi_scaled(spec.alpha).inf_convolve(hulls[1].epi_scaled(1.0 - spec.alpha))


def arithmetic_average(spec: AverageSpec, grid: Grid1D) -> np.ndarray:
    a = spec.alpha
    v = np.zeros(grid.n)
    for w, i in _weights(a):
        f = (spec.f1, spec.f2)[i]
        v = v + w * np.asarray(f(grid.nodes))
    return v


def _fmt_num(v: float) -> str:
    return f"{v:g}"


@dataclass
class SweepResult:
    averages: Dict[Tuple[float, float], SampledFunction]
    reports: List[VerificationReport]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for (a, l), P in sorted(self.averages.items()):
            P.to_csv(out / f"P_a{_fmt_num(a)}_l{_fmt_num(l)}.csv")
        path = out / "report.json"
        path.write_text(json.dumps([r.to_dict() for r in self.reports], indent=2, sort_keys=True) + "\n")
        return path


def _sup_diff(a: SampledFunction, b_vals: np.ndarray, mask: Optional[np.ndarray] = None):
    both = np.isfinite(a.values) & np.isfinite(b_vals)
    if mask is not None:
        both &= mask
    if not np.any(both):
        return 0.0, None
    d = np.abs(a.values - b_vals)
    d[~both] = -1.0
    j = int(np.argmax(d))
    return float(d[j]), float(a.x[j])


def sweep(
    template: AverageSpec,
    alphas: Sequence[float],
    lambdas: Sequence[float],
    workers: int = 1,
    monotone_slack: float = 1e-6,
    out_dir=None,
) -> SweepResult:
    """Proximal averages over an (alpha, lambda) table plus the limit checks.

    Checks: (a) nonincrease in lambda, (b) epi-average <= P <= arithmetic
    average, (c) P -> hull f2 as alpha decreases, (d) P -> arithmetic
    average as lambda decreases, (e) P -> epi-average as lambda grows (only
    when both thresholds are certified infinite).
    """
    k = template.kernel
    pairs = [(float(a), float(l)) for a in alphas for l in lambdas]
    base_grid = template.out_grid if template.out_grid is not None else _default_out_grid(template.with_(alpha=0.5))

    def cell(pair):
        a, l = pair
        spec = template.with_(alpha=a, lam=l, out_grid=base_grid)
        return pair, proximal_average(spec)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AssumptionWarning)
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as ex:
                results = dict(ex.map(cell, pairs))
        else:
            results = dict(cell(p) for p in pairs)

    reports: List[VerificationReport] = []
    h = template.h
    L = template.slope_bound()
    grid = base_grid
    in_dom = k.in_dom(grid.nodes)
    in_U = k.in_U(grid.nodes)

    # (a) monotone in lambda
    for a in sorted(set(p[0] for p in pairs)):
        ls = sorted(set(p[1] for p in pairs if p[0] == a))
        worst, wx = 0.0, None
        for l0, l1 in zip(ls, ls[1:]):
            p0, p1 = results[(a, l0)].values, results[(a, l1)].values
            both = np.isfinite(p0) & np.isfinite(p1)
            inc = np.where(both, p1 - p0, -np.inf)
            j = int(np.argmax(inc))
            if inc[j] > worst:
                worst, wx = float(inc[j]), float(grid.nodes[j])
        reports.append(VerificationReport(f"monotone_in_lambda[alpha={a:g}]", worst, wx, monotone_slack, {"lambdas": ls}))

    # (b) squeeze
    slack = 5 * h * L
    for (a, l), P in sorted(results.items()):
        spec = template.with_(alpha=a, lam=l)
        lower = epi_average(spec)(grid.nodes)
        upper = arithmetic_average(spec, grid)
        fin = np.isfinite(P.values) & in_dom
        below = np.where(fin & np.isfinite(lower), lower - P.values, -np.inf)
        above = np.where(fin & np.isfinite(upper), P.values - upper, -np.inf)
        viol = np.maximum(below, above)
        j = int(np.argmax(viol))
        err = max(0.0, float(viol[j]))
        reports.append(
            VerificationReport(f"squeeze[alpha={a:g},lambda={l:g}]", err, float(grid.nodes[j]), slack, {"h": h, "L": L})
        )

    # (c) alpha -> 0
    for l in sorted(set(p[1] for p in pairs)):
        als = sorted((p[0] for p in pairs if p[1] == l), reverse=True)
        if len(als) < 2:
            continue
        target = prox_hull(template.f2, k, l).resample(grid).values
        sups = [_sup_diff(results[(a, l)], target, in_dom)[0] for a in als]
        bad = max([s1 - s0 for s0, s1 in zip(sups, sups[1:])] + [-math.inf])
        ok = all(s1 < s0 for s0, s1 in zip(sups, sups[1:]))
        reports.append(
            VerificationReport(
                f"alpha_to_zero_trend[lambda={l:g}]", 0.0 if ok else max(bad, 1e-300), None, 0.0,
                {"alphas": als, "sup_errors": sups},
            )
        )

    # (d) lambda -> 0
    for a in sorted(set(p[0] for p in pairs)):
        ls = sorted((p[1] for p in pairs if p[0] == a), reverse=True)
        if len(ls) < 2:
            continue
        avg = arithmetic_average(template.with_(alpha=a), grid)
        sups = [_sup_diff(results[(a, l)], avg, in_U)[0] for l in ls]
        ok = all(s1 < s0 for s0, s1 in zip(sups, sups[1:]))
        bad = max([s1 - s0 for s0, s1 in zip(sups, sups[1:])] + [-math.inf])
        reports.append(
            VerificationReport(
                f"lambda_to_zero_trend[alpha={a:g}]", 0.0 if ok else max(bad, 1e-300), None, 0.0,
                {"lambdas": ls, "sup_errors": sups},
            )
        )

    # (e) lambda -> infinity, only with infinite thresholds on both inputs
    t1 = prox_bound_threshold(template.f1, k)
    t2 = prox_bound_threshold(template.f2, k)
    if math.isinf(t1.lower_certified) and math.isinf(t2.lower_certified):
        for a in sorted(set(p[0] for p in pairs)):
            ls = sorted(p[1] for p in pairs if p[0] == a)
            if len(ls) < 2:
                continue
            epi = epi_average(template.with_(alpha=a))(grid.nodes)
            sups = [_sup_diff(results[(a, l)], epi, in_dom)[0] for l in ls]
            bad = max([s1 - s0 for s0, s1 in zip(sups, sups[1:])] + [-math.inf])
            reports.append(
                VerificationReport(
                    f"lambda_to_infinity_trend[alpha={a:g}]", max(0.0, bad), None, monotone_slack,
                    {"lambdas": ls, "sup_errors": sups},
                )
            )

    result = SweepResult(results, reports)
    if out_dir is not None:
        result.write(out_dir)
    return result
