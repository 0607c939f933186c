"""Bregman envelopes, proximal maps, proximal hulls and related objects.

Direct minimisation over grid nodes is the reference path everywhere;
conjugate formulas are provided alongside and cross-checked in the tests.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import (
    BasePointOutsideU,
    EmptyCommonDomain,
    EmptySet,
    ImproperFunction,
    NonconvexInput,
    NonPositiveLambda,
    PointOutsideSumDomain,
)
from .grid import Grid1D, PLConvex, SampledFunction, ext_sub, hull_of, lower_hull, oracle_mode
from .kernels import LegendreKernel, bregman_distance
from .reports import VerificationReport, report_from_errors

TIE_RTOL = 1e-10
_CHUNK = 256


def _check_lambda(lam: float) -> float:
    lam = float(lam)
    if not lam > 0 or math.isnan(lam):
        raise NonPositiveLambda(f"lambda must be positive, got {lam}")
    return lam


def _feasible_nodes(f: SampledFunction, k: LegendreKernel, side: str = "left") -> Tuple[np.ndarray, np.ndarray]:
    xs, vs = f.finite_points()
    mask = k.in_dom(xs) if side == "left" else k.in_U(xs)
    if not np.any(mask):
        raise EmptyCommonDomain(f"dom f and dom phi ({k.name}) share no grid node")
    return xs[mask], vs[mask]


# ---------------------------------------------------------------------------
# envelopes


def envelope_at(f: SampledFunction, k: LegendreKernel, lam: float, points, side: str = "left") -> np.ndarray:
    """Envelope values at arbitrary base points (inf where undefined)."""
    lam = _check_lambda(lam)
    pts = np.atleast_1d(np.asarray(points, dtype=float))
    xs, vs = _feasible_nodes(f, k, side)
    if side == "left" and oracle_mode():
        from .oracle import brute_envelope

        return brute_envelope(f, k, lam, pts)
    out = np.full(pts.size, np.inf)
    if side == "left":
        valid = k.in_U(pts)
    elif side == "right":
        valid = k.in_dom(pts)
    else:
        raise ValueError("side must be 'left' or 'right'")
    idx = np.nonzero(valid)[0]
    for a in range(0, idx.size, _CHUNK):
        sel = idx[a:a + _CHUNK]
        y = pts[sel][:, None]
        if side == "left":
            d = bregman_distance(k, xs[None, :], y)
        else:
            d = bregman_distance(k, y, xs[None, :])
        out[sel] = np.min(vs[None, :] + d / lam, axis=1)
    return out


def envelope(
    f: SampledFunction, k: LegendreKernel, lam: float, side: str = "left", grid: Optional[Grid1D] = None
) -> SampledFunction:
    """Left (or right) Bregman envelope sampled on ``grid`` (default: f's grid)."""
    grid = f.grid if grid is None else grid
    vals = envelope_at(f, k, lam, grid.nodes, side=side)
    return SampledFunction(grid, vals, f"env_{side}[{k.name},{lam:g}]({f.label})")


def envelope_via_conjugate(
    f: SampledFunction, k: LegendreKernel, lam: float, grid: Optional[Grid1D] = None
) -> SampledFunction:
    """Envelope through one conjugate: ((phi* - (lam f + phi)*) / lam) o grad phi."""
    lam = _check_lambda(lam)
    grid = f.grid if grid is None else grid
    xs, vs = _feasible_nodes(f, k, "left")
    gv = lam * vs + k.phi(xs)
    y = grid.nodes
    inU = k.in_U(y)
    s = k.grad(y[inU])
    if oracle_mode():
        gstar = np.array([np.max(si * xs - gv) for si in s])
    else:
        gstar = PLConvex(*lower_hull(xs, gv)).conjugate_at(s)
    out = np.full(y.size, np.inf)
    out[inU] = (k.conj(s) - gstar) / lam
    return SampledFunction(grid, out, f"env_conj[{k.name},{lam:g}]({f.label})")


# ---------------------------------------------------------------------------
# proximal maps


@dataclass
class ProxSet:
    y: float
    lam: float
    intervals: List[Tuple[float, float]]
    min_value: float

    @property
    def is_singleton(self) -> bool:
        return len(self.intervals) == 1 and self.intervals[0][0] == self.intervals[0][1]

    @property
    def hull(self) -> Tuple[float, float]:
        return self.intervals[0][0], self.intervals[-1][1]

    def to_dict(self) -> dict:
        return {
            "y": self.y,
            "lambda": self.lam,
            "min_value": self.min_value,
            "intervals": [[a, b] for a, b in self.intervals],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _cluster(xs_all: np.ndarray, member_idx: np.ndarray) -> List[Tuple[float, float]]:
    """Group node indices into runs of consecutive indices."""
    runs = []
    start = prev = int(member_idx[0])
    for i in member_idx[1:]:
        i = int(i)
        if i != prev + 1:
            runs.append((float(xs_all[start]), float(xs_all[prev])))
            start = i
        prev = i
    runs.append((float(xs_all[start]), float(xs_all[prev])))
    return runs


def prox(f: SampledFunction, k: LegendreKernel, lam: float, y: float) -> ProxSet:
    """All grid minimisers of f(x) + D(x, y) / lam, clustered into intervals."""
    lam = _check_lambda(lam)
    y = float(y)
    if not k.in_U(y):
        raise BasePointOutsideU(f"base point {y} is not in U for kernel {k.name}")
    _feasible_nodes(f, k, "left")
    obj = f.values + bregman_distance(k, f.x, y) / lam
    m = float(np.min(obj))
    tol = TIE_RTOL * (1.0 + abs(m))
    members = np.nonzero(obj <= m + tol)[0]
    return ProxSet(y=y, lam=lam, intervals=_cluster(f.x, members), min_value=m)


def prox_hull(f: SampledFunction, k: LegendreKernel, lam: float) -> SampledFunction:
    """(f + phi/lam)** - phi/lam on f's grid, with inf - inf = inf."""
    lam = _check_lambda(lam)
    phi = k.phi(f.x)
    g = f.with_values(np.where(k.in_dom(f.x), f.values + phi / lam, np.inf))
    hull_vals = hull_of(g)(f.x)
    vals = ext_sub(hull_vals, phi / lam)
    return SampledFunction(f.grid, vals, f"hull[{k.name},{lam:g}]({f.label})")


# ---------------------------------------------------------------------------
# prox-boundedness


@dataclass
class ThresholdEstimate:
    lower_certified: float
    upper_witness: float
    grid_caveat: bool

    def to_dict(self) -> dict:
        def enc(v):
            return "inf" if math.isinf(v) else v

        return {
            "lower_certified": enc(self.lower_certified),
            "upper_witness": enc(self.upper_witness),
            "grid_caveat": self.grid_caveat,
        }


def _tail_ok(f: SampledFunction, k: LegendreKernel, lam: float) -> bool:
    xs, vs = f.finite_points()
    inside = k.in_dom(xs)
    xs, vs = xs[inside], vs[inside]
    if xs.size == 0:
        return True
    v = vs + k.phi(xs) / lam
    m = max(2, int(math.ceil(0.05 * v.size)))
    ulo, uhi = k.domain
    checks = []
    if math.isinf(uhi) and f.finite[-1]:
        checks.append(v[-m:])
    if math.isinf(ulo) and f.finite[0]:
        checks.append(v[:m][::-1])
    for tail in checks:
        d = np.diff(tail)
        tol = 1e-12 * (1.0 + np.abs(tail[1:]))
        if np.any(d < -tol):
            return False
    return True


def prox_bound_threshold(
    f: SampledFunction, k: LegendreKernel, lam_max: float = 1e12, rel_tol: float = 1e-6
) -> ThresholdEstimate:
    """Bracket the prox-bound threshold by testing the tails of f + phi/lam.

    A grid can only certify a value of lam for which f + phi/lam keeps
    growing at every grid end where the data reaches an unbounded side of U.
    """
    if _tail_ok(f, k, lam_max):
        return ThresholdEstimate(math.inf, math.inf, False)
    lam = 1.0
    if _tail_ok(f, k, lam):
        lo = lam
        hi = lam * 2
        while _tail_ok(f, k, hi):
            lo, hi = hi, hi * 2
    else:
        hi = lam
        lo = lam / 2
        while not _tail_ok(f, k, lo):
            hi, lo = lo, lo / 2
            if lo < 1e-300:
                return ThresholdEstimate(0.0, hi, True)
    while hi / lo - 1.0 > rel_tol:
        mid = math.sqrt(lo * hi)
        if _tail_ok(f, k, mid):
            lo = mid
        else:
            hi = mid
    return ThresholdEstimate(lo, hi, True)


# ---------------------------------------------------------------------------
# anisotropic envelope and proximity operator


def _pl_aprox(
    breaks: np.ndarray,
    piece_lo: np.ndarray,
    piece_hi: np.ndarray,
    piece_slope: np.ndarray,
    g_eval: Callable,
    psi: Callable,
    psi_grad_inv: Callable,
    z: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """Minimise u -> g(u) + psi(z - u) for piecewise-linear convex g.

    On a piece of slope m the stationary point solves psi'(z - u) = m; it is
    clipped to the piece, and together with the breakpoints gives a finite
    candidate set that contains a minimiser. Returns (argmin, min value).
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    w = psi_grad_inv(piece_slope)
    has_w = np.isfinite(w)
    lo, hi, w = piece_lo[has_w], piece_hi[has_w], w[has_w]
    arg = np.empty(z.size)
    val = np.empty(z.size)
    chunk = max(1, 2_000_000 // max(1, breaks.size + w.size))
    for a in range(0, z.size, chunk):
        zz = z[a:a + chunk, None]
        stat = np.clip(zz - w[None, :], lo[None, :], hi[None, :])
        cand = np.concatenate([np.broadcast_to(breaks[None, :], (zz.shape[0], breaks.size)), stat], axis=1)
        with np.errstate(invalid="ignore", over="ignore"):
            F = g_eval(cand) + psi(zz - cand)
        F = np.where(np.isnan(F), np.inf, F)
        j = np.argmin(F, axis=1)
        rows = np.arange(zz.shape[0])
        arg[a:a + chunk] = cand[rows, j]
        val[a:a + chunk] = F[rows, j]
    return arg, val


def _hull_pieces(hull: PLConvex):
    return hull.vx, hull.vx[:-1], hull.vx[1:], hull.slopes


def _aniso_convex(f: SampledFunction, k: LegendreKernel, z) -> Tuple[np.ndarray, np.ndarray]:
    hull = hull_of(f)
    breaks, lo, hi, sl = _hull_pieces(hull)
    return _pl_aprox(breaks, lo, hi, sl, hull, k.phi, k.conj_grad, z)


def _aniso_direct(f: SampledFunction, k: LegendreKernel, z) -> Tuple[np.ndarray, np.ndarray]:
    z = np.atleast_1d(np.asarray(z, dtype=float))
    xs, vs = f.finite_points()
    arg = np.empty(z.size)
    val = np.empty(z.size)
    for a in range(0, z.size, _CHUNK):
        F = vs[None, :] + k.phi(z[a:a + _CHUNK, None] - xs[None, :])
        j = np.argmin(F, axis=1)
        rows = np.arange(F.shape[0])
        arg[a:a + _CHUNK] = xs[j]
        val[a:a + _CHUNK] = F[rows, j]
    return arg, val


def anisotropic_envelope(
    f: SampledFunction, k: LegendreKernel, out_grid: Optional[Grid1D] = None
) -> SampledFunction:
    """(f box phi)(x) = inf_u f(u) + phi(x - u).

    Convex data is treated as its piecewise-linear interpolant and minimised
    exactly; other data is minimised over its finite nodes.
    """
    out_grid = f.grid if out_grid is None else out_grid
    if f.is_convex_data():
        _, val = _aniso_convex(f, k, out_grid.nodes)
    else:
        _, val = _aniso_direct(f, k, out_grid.nodes)
    return SampledFunction(out_grid, val, f"({f.label})box[{k.name}]")


def anisotropic_prox(f: SampledFunction, k: LegendreKernel, x: float) -> float:
    if f.is_convex_data():
        arg, val = _aniso_convex(f, k, [x])
    else:
        arg, val = _aniso_direct(f, k, [x])
    if not np.isfinite(val[0]):
        raise PointOutsideSumDomain(f"{x} is not in dom f + dom phi")
    return float(arg[0])


def conjugate_aprox(hull: PLConvex, k: LegendreKernel, lam: float, z):
    """argmin and value of u -> f*(u) + (1/lam) phi*(lam (z - u)), f = hull.

    f* is piecewise linear with breakpoints at the hull slopes and slopes
    equal to the hull vertices; both end pieces are unbounded.
    """
    xs = hull.vx
    br = hull.slopes
    lo = np.concatenate([[-np.inf], br])
    hi = np.concatenate([br, [np.inf]])

    def psi(w):
        return k.conj(lam * w) / lam

    def psi_grad_inv(m):
        m = np.asarray(m, dtype=float)
        out = np.full(m.shape, np.nan)
        ok = k.in_U(m)
        out[ok] = k.grad(m[ok]) / lam
        return out

    return _pl_aprox(br, lo, hi, xs, hull.conjugate_at, psi, psi_grad_inv, z)


# ---------------------------------------------------------------------------
# projections


def indicator(grid: Grid1D, members: Sequence, label: str = "") -> SampledFunction:
    """Indicator of a union of points and closed intervals, restricted to grid nodes.

    Points that are not grid nodes are added to the grid.
    """
    pts = [float(m) for m in members if np.ndim(m) == 0]
    nodes = grid.nodes if not pts else Grid1D.merged(grid, pts).nodes
    g = Grid1D(nodes)
    vals = np.full(g.n, np.inf)
    for m in members:
        if np.ndim(m) == 0:
            vals[np.searchsorted(g.nodes, float(m))] = 0.0
        else:
            a, b = float(m[0]), float(m[1])
            vals[(g.nodes >= a) & (g.nodes <= b)] = 0.0
    if not np.any(np.isfinite(vals)):
        raise EmptySet("the set has no node on the grid")
    return SampledFunction(g, vals, label or f"indicator{list(members)}")


def bregman_project(
    C: Union[SampledFunction, Tuple[Grid1D, Sequence]], k: LegendreKernel, lam: float, y: float
) -> ProxSet:
    """Left Bregman projection of y onto C, as a ProxSet of f = indicator of C.

    ``min_value * lam`` is the Bregman distance from C to y.
    """
    if isinstance(C, SampledFunction):
        f = C.with_values(np.where(C.finite, 0.0, np.inf))
    else:
        try:
            f = indicator(C[0], C[1])
        except ImproperFunction as exc:
            raise EmptySet(str(exc)) from None
    if not np.any(k.in_dom(f.x[f.finite])):
        raise EmptySet("C does not meet dom phi on the grid")
    return prox(f, k, lam, y)


# ---------------------------------------------------------------------------
# checks


def _default_probes(grid: Grid1D, k: LegendreKernel, count: int = 21) -> np.ndarray:
    lo, hi = grid.lo, grid.hi
    w = hi - lo
    p = np.linspace(lo + 0.1 * w, hi - 0.1 * w, count)
    return p[k.in_U(p)]


def prox_via_anisotropic_check(
    f: SampledFunction,
    k: LegendreKernel,
    lam: float,
    probes: Optional[Sequence[float]] = None,
    tolerance: Optional[float] = None,
) -> VerificationReport:
    """Compare the grid prox with grad phi*(grad phi(y) - lam * aprox(f*)(grad phi(y)/lam))."""
    lam = _check_lambda(lam)
    if not f.is_convex_data():
        raise NonconvexInput("prox_via_anisotropic_check needs convex data")
    xs, _ = f.finite_points()
    if not np.any(k.in_U(xs)):
        raise EmptyCommonDomain("dom f does not meet U on the grid")
    probes = _default_probes(f.grid, k) if probes is None else np.asarray(probes, dtype=float)
    h = f.grid.max_step
    tolerance = 2 * h if tolerance is None else tolerance
    hull = hull_of(f)
    g = k.grad(probes)
    u, _ = conjugate_aprox(hull, k, lam, g / lam)
    rhs = k.conj_grad(g - lam * u)
    errs = np.empty(probes.size)
    for i, y in enumerate(probes):
        a, b = prox(f, k, lam, y).hull
        errs[i] = max(abs(rhs[i] - a), abs(rhs[i] - b))
    return report_from_errors("prox_via_anisotropic", probes, errs, tolerance, kernel=k.name, lam=lam, h=h)


def envelope_gradient_check(
    f: SampledFunction,
    k: LegendreKernel,
    lam: float,
    probes: Optional[Sequence[float]] = None,
    tolerance: Optional[float] = None,
) -> VerificationReport:
    """Central difference of the envelope against hess(y) (y - p) / lam at singleton prox points."""
    lam = _check_lambda(lam)
    h = f.grid.h
    probes = _default_probes(f.grid, k) if probes is None else np.asarray(probes, dtype=float)
    tolerance = 10 * h if tolerance is None else tolerance
    errs = np.full(probes.size, np.nan)
    skipped = 0
    for i, y in enumerate(probes):
        if not (k.in_U(y - h) and k.in_U(y + h)):
            skipped += 1
            continue
        ps = prox(f, k, lam, y)
        if not ps.is_singleton:
            skipped += 1
            continue
        p = ps.intervals[0][0]
        e_plus, e_minus = envelope_at(f, k, lam, [y + h, y - h])
        fd = (e_plus - e_minus) / (2 * h)
        formula = k.hess(y) * (y - p) / lam
        errs[i] = abs(fd - formula)
    rep = report_from_errors("envelope_gradient", probes, errs, tolerance, kernel=k.name, lam=lam, h=h)
    rep.metadata["skipped"] = skipped
    return rep
