"""Legendre kernels on the real line and the Bregman geometry they induce.

Every kernel carries closed forms for phi, its derivative, second derivative,
convex conjugate and conjugate gradient. All pointwise functions accept
scalars or numpy arrays; outside ``dom phi`` the value of ``phi`` is ``+inf``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.special import xlogy

from .errors import MappingUndefined, RegionOutsideDomain, UnknownKernel

KERNEL_NAMES = ("energy", "boltzmann_shannon", "burg_energy", "cubic")

# relative tolerance used by the sampling probes to separate violations from rounding
PROBE_RTOL = 1e-9


def _scalar_or_array(fn):
    def wrapped(self, x):
        arr = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = fn(self, arr)
        if arr.ndim == 0:
            return float(out)
        return out

    wrapped.__name__ = fn.__name__
    wrapped.__doc__ = fn.__doc__
    return wrapped


@dataclass(frozen=True, eq=False)
class LegendreKernel:
    """A 1-coercive Legendre function phi on an interval.

    ``domain`` is the open interval U = int dom phi; the two ``closure_*`` flags
    say whether the corresponding finite endpoint belongs to dom phi.
    """

    name: str
    domain: Tuple[float, float]
    closure_contains_left: bool
    closure_contains_right: bool
    _phi: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    _grad: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    _hess: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    _conj: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    _conj_grad: Optional[Callable[[np.ndarray], np.ndarray]] = field(repr=False, default=None)
    a5_compliant: bool = True
    a5_note: str = ""

    # -- membership -------------------------------------------------------
    def in_U(self, x) -> np.ndarray:
        lo, hi = self.domain
        x = np.asarray(x, dtype=float)
        return (x > lo) & (x < hi)

    def in_dom(self, x) -> np.ndarray:
        lo, hi = self.domain
        x = np.asarray(x, dtype=float)
        left = (x >= lo) if (self.closure_contains_left and math.isfinite(lo)) else (x > lo)
        right = (x <= hi) if (self.closure_contains_right and math.isfinite(hi)) else (x < hi)
        return left & right

    # -- pointwise calculus -------------------------------------------------
    @_scalar_or_array
    def phi(self, x):
        out = np.full(x.shape, np.inf)
        mask = self.in_dom(x)
        out[mask] = self._phi(x[mask])
        return out

    @_scalar_or_array
    def grad(self, x):
        out = np.full(x.shape, np.nan)
        mask = self.in_U(x)
        out[mask] = self._grad(x[mask])
        return out

    @_scalar_or_array
    def hess(self, x):
        out = np.full(x.shape, np.nan)
        mask = self.in_U(x)
        out[mask] = self._hess(x[mask])
        return out

    @_scalar_or_array
    def conj(self, s):
        return self._conj(s)

    @_scalar_or_array
    def conj_grad(self, s):
        if self._conj_grad is not None:
            return self._conj_grad(s)
        return invert_gradient(self, s)


def invert_gradient(k: LegendreKernel, s, tol: float = 1e-13, max_iter: int = 200):
    """Solve grad(x) = s on U by bracketing bisection.

    Fallback for kernels without a closed-form conjugate gradient.
    """
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    lo_dom, hi_dom = k.domain
    out = np.empty_like(s_arr)
    for i, si in enumerate(s_arr):
        # bracket: start from a point of U and expand geometrically toward the boundary
        mid = _interior_point(k.domain)
        a, b = mid, mid
        step = 1.0
        while k._grad(np.array([a]))[0] > si:
            a = _toward(lo_dom, mid, step)
            step *= 2.0
            if step > 1e300:
                break
        step = 1.0
        while k._grad(np.array([b]))[0] < si:
            b = _toward(hi_dom, mid, step)
            step *= 2.0
            if step > 1e300:
                break
        for _ in range(max_iter):
            m = 0.5 * (a + b)
            if k._grad(np.array([m]))[0] < si:
                a = m
            else:
                b = m
            if b - a <= tol * max(1.0, abs(m)):
                break
        out[i] = 0.5 * (a + b)
    if np.ndim(s) == 0:
        return float(out[0])
    return out.reshape(np.shape(s))


def _interior_point(domain: Tuple[float, float]) -> float:
    lo, hi = domain
    if math.isinf(lo) and math.isinf(hi):
        return 0.0
    if math.isinf(hi):
        return lo + 1.0
    if math.isinf(lo):
        return hi - 1.0
    return 0.5 * (lo + hi)


def _toward(end: float, start: float, step: float) -> float:
    if math.isinf(end):
        return start - step if end < 0 else start + step
    # approach a finite endpoint without reaching it
    return end + (start - end) / (1.0 + step)


# -- catalog ------------------------------------------------------------------


def _burg_conj_grad(s):
    # root of x - 1/x = s, written to avoid cancellation for s << 0
    r = np.sqrt(s * s + 4.0)
    return np.where(s >= 0, 0.5 * (s + r), 2.0 / (r - s))


def _burg_conj(s):
    x = _burg_conj_grad(s)
    return s * x + np.log(x) - 0.5 * x * x


def _make_energy() -> LegendreKernel:
    return LegendreKernel(
        name="energy",
        domain=(-math.inf, math.inf),
        closure_contains_left=True,
        closure_contains_right=True,
        _phi=lambda x: 0.5 * x * x,
        _grad=lambda x: x.copy(),
        _hess=lambda x: np.ones_like(x),
        _conj=lambda s: 0.5 * s * s,
        _conj_grad=lambda s: np.array(s, dtype=float, copy=True),
    )


def _make_boltzmann_shannon() -> LegendreKernel:
    return LegendreKernel(
        name="boltzmann_shannon",
        domain=(0.0, math.inf),
        closure_contains_left=True,
        closure_contains_right=True,
        _phi=lambda x: xlogy(x, x) - x,
        _grad=np.log,
        _hess=lambda x: 1.0 / x,
        _conj=np.exp,
        _conj_grad=np.exp,
    )


def _make_burg_energy() -> LegendreKernel:
    return LegendreKernel(
        name="burg_energy",
        domain=(0.0, math.inf),
        closure_contains_left=False,
        closure_contains_right=True,
        _phi=lambda x: -np.log(x) + 0.5 * x * x,
        _grad=lambda x: x - 1.0 / x,
        _hess=lambda x: 1.0 + 1.0 / (x * x),
        _conj=_burg_conj,
        _conj_grad=_burg_conj_grad,
        a5_compliant=False,
        a5_note="dom phi = (0, inf) is not closed",
    )


def _make_cubic() -> LegendreKernel:
    return LegendreKernel(
        name="cubic",
        domain=(-math.inf, math.inf),
        closure_contains_left=True,
        closure_contains_right=True,
        _phi=lambda x: np.abs(x) ** 3,
        _grad=lambda x: 3.0 * x * np.abs(x),
        _hess=lambda x: 6.0 * np.abs(x),
        _conj=lambda s: 2.0 * (np.abs(s) / 3.0) ** 1.5,
        _conj_grad=lambda s: np.sign(s) * np.sqrt(np.abs(s) / 3.0),
        a5_compliant=False,
        a5_note="second derivative vanishes at x = 0",
    )


_FACTORIES = {
    "energy": _make_energy,
    "boltzmann_shannon": _make_boltzmann_shannon,
    "burg_energy": _make_burg_energy,
    "cubic": _make_cubic,
}
_CACHE: dict = {}


def kernel(name: str) -> LegendreKernel:
    """Return the catalog kernel called ``name``."""
    try:
        factory = _FACTORIES[name]
    except KeyError:
        raise UnknownKernel(f"unknown kernel {name!r}; expected one of {', '.join(KERNEL_NAMES)}") from None
    if name not in _CACHE:
        _CACHE[name] = factory()
    return _CACHE[name]


# -- Bregman geometry -----------------------------------------------------------


def bregman_distance(k: LegendreKernel, x, y):
    """D(x, y) = phi(x) - phi(y) - phi'(y)(x - y) for y in U, +inf otherwise."""
    x_arr, y_arr = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    out = np.full(x_arr.shape, np.inf)
    ok = k.in_U(y_arr) & k.in_dom(x_arr)
    if np.any(ok):
        xv, yv = x_arr[ok], y_arr[ok]
        with np.errstate(invalid="ignore"):
            d = k.phi(xv) - k.phi(yv) - k.grad(yv) * (xv - yv)
        out[ok] = np.maximum(d, 0.0)
    if out.ndim == 0:
        return float(out)
    return out


def symmetrized_distance(k: LegendreKernel, x, y):
    """S(x, y) = (phi'(x) - phi'(y)) (x - y) = D(x, y) + D(y, x) on U x U."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = (k.grad(x) - k.grad(y)) * (x - y)
    if np.ndim(out) == 0:
        return float(out)
    return out


@dataclass
class ConvexityReport:
    """Outcome of a randomized midpoint / inequality probe."""

    region: Tuple[Tuple[float, float], Tuple[float, float]]
    samples: int
    midpoint_violations: list = field(default_factory=list)
    tolerance_rel: float = PROBE_RTOL
    name: str = "symmetrized_convexity"

    @property
    def verdict(self) -> str:
        return "nonconvex-with-witness" if self.midpoint_violations else "convex-on-samples"

    @property
    def passed(self) -> bool:
        return not self.midpoint_violations

    def worst(self):
        if not self.midpoint_violations:
            return None
        return max(self.midpoint_violations, key=lambda item: item[-1])

    def to_dict(self) -> dict:
        worst = self.worst()
        return {
            "name": self.name,
            "region": [list(self.region[0]), list(self.region[1])],
            "samples": self.samples,
            "verdict": self.verdict,
            "violations": len(self.midpoint_violations),
            "worst": None if worst is None else {"p": list(worst[0]), "q": list(worst[1]), "magnitude": worst[2]},
        }


def _check_rect_in_U(k: LegendreKernel, region) -> Tuple[Tuple[float, float], Tuple[float, float]]:
    (x0, x1), (y0, y1) = region
    rect = ((float(x0), float(x1)), (float(y0), float(y1)))
    corners = np.array([x0, x1, y0, y1], dtype=float)
    if not np.all(k.in_U(corners)) or x0 > x1 or y0 > y1:
        raise RegionOutsideDomain(f"region {rect} is not inside U x U for kernel {k.name}")
    return rect


def symmetrized_convexity_probe(
    k: LegendreKernel, region, samples: int = 10_000, rng_seed: int = 42
) -> ConvexityReport:
    """Randomized midpoint-convexity test of S on a rectangle of U x U.

    Draws ``samples`` pairs p, q and flags every pair where
    S((p+q)/2) exceeds (S(p)+S(q))/2 by more than 1e-9 (1 + magnitude).
    """
    if samples < 100:
        raise ValueError("samples must be at least 100")
    rect = _check_rect_in_U(k, region)
    rng = np.random.default_rng(rng_seed)
    (x0, x1), (y0, y1) = rect
    p = np.column_stack([rng.uniform(x0, x1, samples), rng.uniform(y0, y1, samples)])
    q = np.column_stack([rng.uniform(x0, x1, samples), rng.uniform(y0, y1, samples)])
    m = 0.5 * (p + q)
    sp = symmetrized_distance(k, p[:, 0], p[:, 1])
    sq = symmetrized_distance(k, q[:, 0], q[:, 1])
    sm = symmetrized_distance(k, m[:, 0], m[:, 1])
    excess = sm - 0.5 * (sp + sq)
    magnitude = np.maximum.reduce([np.abs(sp), np.abs(sq), np.abs(sm)])
    bad = np.nonzero(excess > PROBE_RTOL * (1.0 + magnitude))[0]
    violations = [(tuple(p[i]), tuple(q[i]), float(excess[i])) for i in bad]
    return ConvexityReport(region=rect, samples=samples, midpoint_violations=violations)


def firm_nonexpansiveness_probe(
    k: LegendreKernel,
    T,
    pairs: int = 10_000,
    rng_seed: int = 42,
    support: Optional[Tuple[float, float]] = None,
) -> ConvexityReport:
    """Check <u - v, Tu - Tv> >= S(Tu, Tv) on random pairs.

    ``T`` is either a callable or a sampled mapping ``(nodes, values)``; a
    sampled mapping is evaluated by linear interpolation and probed on the
    range of its nodes. ``support`` overrides the probing interval.
    """
    if isinstance(T, tuple) or isinstance(T, list):
        nodes = np.asarray(T[0], dtype=float)
        vals = np.asarray(T[1], dtype=float)
        if nodes.shape != vals.shape or nodes.size < 2 or np.any(np.diff(nodes) <= 0):
            raise MappingUndefined("sampled mapping needs >= 2 increasing nodes with matching values")
        lo_n, hi_n = float(nodes[0]), float(nodes[-1])

        def evaluate(u):
            if np.any(u < lo_n) or np.any(u > hi_n):
                raise MappingUndefined("probe point outside the sampled mapping's nodes")
            return np.interp(u, nodes, vals)

        if support is None:
            support = (lo_n, hi_n)
    else:
        if support is None:
            raise MappingUndefined("a callable mapping needs an explicit support interval")

        def evaluate(u):
            return np.asarray(T(u), dtype=float)

    rng = np.random.default_rng(rng_seed)
    lo, hi = float(support[0]), float(support[1])
    u = rng.uniform(lo, hi, pairs)
    v = rng.uniform(lo, hi, pairs)
    tu, tv = evaluate(u), evaluate(v)
    if not (np.all(np.isfinite(tu)) and np.all(np.isfinite(tv))):
        raise MappingUndefined("mapping returned non-finite values")
    if not (np.all(k.in_U(tu)) and np.all(k.in_U(tv))):
        raise MappingUndefined("mapping leaves U")
    lhs = (u - v) * (tu - tv)
    rhs = symmetrized_distance(k, tu, tv)
    deficit = rhs - lhs
    magnitude = np.maximum(np.abs(lhs), np.abs(rhs))
    bad = np.nonzero(deficit > PROBE_RTOL * (1.0 + magnitude))[0]
    violations = [((float(u[i]), float(v[i])), (float(tu[i]), float(tv[i])), float(deficit[i])) for i in bad]
    return ConvexityReport(
        region=((lo, hi), (lo, hi)),
        samples=pairs,
        midpoint_violations=violations,
        name="firm_nonexpansiveness",
    )


def lattice_midpoint_scan(
    k: LegendreKernel, region, n: int = 200, directions: Sequence[Tuple[int, int]] = ((1, 0), (0, 1), (1, 1), (1, -1), (1, 2), (2, 1), (1, -2), (2, -1))
) -> float:
    """Worst midpoint excess of S over lattice triples p, p+d, p+2d.

    Deterministic companion to the randomized probe. Returns the largest
    relative excess found (<= 0 means convex on the lattice).
    """
    (x0, x1), (y0, y1) = _check_rect_in_U(k, region)
    xs = np.linspace(x0, x1, n)
    ys = np.linspace(y0, y1, n)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    S = symmetrized_distance(k, X, Y)
    worst = -np.inf
    for dx, dy in directions:
        i0, i1 = max(0, -2 * dx), n - max(0, 2 * dx)
        j0, j1 = max(0, -2 * dy), n - max(0, 2 * dy)
        a = S[i0:i1, j0:j1]
        mid = S[i0 + dx:i1 + dx, j0 + dy:j1 + dy]
        b = S[i0 + 2 * dx:i1 + 2 * dx, j0 + 2 * dy:j1 + 2 * dy]
        excess = (mid - 0.5 * (a + b)) / (1.0 + np.maximum.reduce([np.abs(a), np.abs(b), np.abs(mid)]))
        worst = max(worst, float(excess.max()))
    return worst
