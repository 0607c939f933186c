"""Extended-real functions sampled on one-dimensional grids.

``+inf`` is stored as ``numpy.inf``. Subtraction follows the rule
``inf - inf = inf`` (see :func:`ext_sub`), which is what the proximal average
formula needs.
"""
from __future__ import annotations

import contextvars
import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ImproperFunction, ZeroNotInGrid

# second-difference tolerance used for "convex as sampled data"
CONVEXITY_RTOL = 1e-7
DOMAIN_ATOL = 1e-13

_ORACLE_MODE: contextvars.ContextVar[bool] = contextvars.ContextVar("bregprox_oracle_mode", default=False)


def oracle_mode() -> bool:
    return _ORACLE_MODE.get()


class use_oracle:
    """Context manager that routes transforms, envelopes and inf-convolutions
    through the brute-force implementations in :mod:`bregprox.oracle`."""

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self._token = None

    def __enter__(self):
        self._token = _ORACLE_MODE.set(self.enabled)
        return self

    def __exit__(self, *exc):
        _ORACLE_MODE.reset(self._token)
        return False


def ext_sub(a, b):
    """a - b on extended reals with inf - inf = inf."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(invalid="ignore"):
        out = a - b
    return np.where(np.isinf(a) & (a > 0), np.inf, out)


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True, eq=False)
class Grid1D:
    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float).ravel()
        if nodes.size < 2:
            raise ValueError("a grid needs at least two nodes")
        if not np.all(np.isfinite(nodes)):
            raise ValueError("grid nodes must be finite")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("grid nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def uniform(cls, lo: float, hi: float, n: int) -> "Grid1D":
        if n < 2 or not hi > lo:
            raise ValueError("uniform grid needs lo < hi and n >= 2")
        return cls(np.linspace(lo, hi, int(n)))

    @classmethod
    def for_kernel(cls, k, lo: float, hi: float, n: int) -> "Grid1D":
        """Uniform grid with nodes pulled inside U where U has a finite endpoint."""
        nodes = np.linspace(lo, hi, int(n))
        eps = 1e-8 * (hi - lo)
        ulo, uhi = k.domain
        if math.isfinite(ulo):
            nodes = np.maximum(nodes, ulo + eps)
        if math.isfinite(uhi):
            nodes = np.minimum(nodes, uhi - eps)
        nodes = np.unique(nodes)
        return cls(nodes)

    @classmethod
    def merged(cls, *grids_or_points) -> "Grid1D":
        parts = [np.asarray(g.nodes if isinstance(g, Grid1D) else g, dtype=float).ravel() for g in grids_or_points]
        return cls(np.unique(np.concatenate(parts)))

    @property
    def n(self) -> int:
        return int(self.nodes.size)

    @property
    def lo(self) -> float:
        return float(self.nodes[0])

    @property
    def hi(self) -> float:
        return float(self.nodes[-1])

    @property
    def h(self) -> float:
        """Nominal spacing (exact for uniform grids)."""
        return (self.hi - self.lo) / (self.n - 1)

    @property
    def max_step(self) -> float:
        return float(np.max(np.diff(self.nodes)))

    def nearest_index(self, x: float) -> int:
        i = int(np.searchsorted(self.nodes, x))
        if i <= 0:
            return 0
        if i >= self.n:
            return self.n - 1
        return i if (self.nodes[i] - x) < (x - self.nodes[i - 1]) else i - 1

    def describe(self) -> str:
        return f"grid[{self.lo:.6g},{self.hi:.6g}]x{self.n}"


# ---------------------------------------------------------------------------
# sampled functions


def _interp_pl(nodes: np.ndarray, values: np.ndarray, q) -> np.ndarray:
    """Piecewise-linear evaluation with +inf propagation.

    Exact node hits return the stored value; between nodes the value is the
    chord if both endpoints are finite and +inf otherwise; outside the node
    range the value is +inf.
    """
    q = np.asarray(q, dtype=float)
    flat = q.ravel()
    out = np.full(flat.shape, np.inf)
    n = nodes.size
    idx = np.searchsorted(nodes, flat, side="left")
    hit = (idx < n) & (nodes[np.minimum(idx, n - 1)] == flat)
    out[hit] = values[idx[hit]]
    inside = (~hit) & (idx > 0) & (idx < n)
    if np.any(inside):
        j = idx[inside]
        x0, x1 = nodes[j - 1], nodes[j]
        v0, v1 = values[j - 1], values[j]
        ok = np.isfinite(v0) & np.isfinite(v1)
        w = (flat[inside] - x0) / (x1 - x0)
        res = np.full(j.shape, np.inf)
        res[ok] = v0[ok] + w[ok] * (v1[ok] - v0[ok])
        out[inside] = res
    return out.reshape(q.shape)


@dataclass(frozen=True, eq=False)
class SampledFunction:
    grid: Grid1D
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).ravel()
        if vals.shape != self.grid.nodes.shape:
            raise ValueError("values and grid nodes differ in length")
        if np.any(np.isnan(vals)):
            raise ImproperFunction("sampled values contain nan")
        if np.any(vals == -np.inf):
            raise ImproperFunction("sampled values contain -inf")
        if not np.any(np.isfinite(vals)):
            raise ImproperFunction(f"function {self.label or '<unnamed>'} has no finite value")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    # constructors -------------------------------------------------------
    @classmethod
    def from_callable(cls, grid: Grid1D, fn, label: str = "") -> "SampledFunction":
        with np.errstate(all="ignore"):
            vals = np.asarray(fn(grid.nodes), dtype=float)
        vals = np.broadcast_to(vals, grid.nodes.shape).copy()
        vals[np.isnan(vals)] = np.inf
        return cls(grid, vals, label)

    # basic properties -----------------------------------------------------
    @property
    def x(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def finite(self) -> np.ndarray:
        return np.isfinite(self.values)

    def finite_range(self) -> Tuple[float, float]:
        xs = self.x[self.finite]
        return float(xs[0]), float(xs[-1])

    def finite_points(self) -> Tuple[np.ndarray, np.ndarray]:
        m = self.finite
        return self.x[m], self.values[m]

    def __call__(self, q):
        out = _interp_pl(self.x, self.values, q)
        if np.ndim(q) == 0:
            return float(out)
        return out

    def with_values(self, values, label: Optional[str] = None) -> "SampledFunction":
        return SampledFunction(self.grid, values, self.label if label is None else label)

    def resample(self, grid: Grid1D, label: Optional[str] = None) -> "SampledFunction":
        return SampledFunction(grid, _interp_pl(self.x, self.values, grid.nodes), label or self.label)

    def is_convex_data(self, rtol: float = CONVEXITY_RTOL) -> bool:
        return convexity_defect(self, rtol)[0]

    # serialization ---------------------------------------------------------
    def to_csv(self, path: Union[str, Path, None] = None) -> str:
        buf = io.StringIO()
        buf.write("x,value\n")
        for xi, vi in zip(self.x, self.values):
            buf.write(f"{_fmt(xi)},{_fmt(vi)}\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path_or_text: Union[str, Path], label: Optional[str] = None) -> "SampledFunction":
        p = Path(path_or_text) if not str(path_or_text).startswith("x,") else None
        text = p.read_text() if p is not None else str(path_or_text)
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows or "x" not in rows[0] or "value" not in rows[0]:
            raise ValueError("CSV must have header x,value")
        xs = np.array([float(r["x"]) for r in rows])
        vs = np.array([float(r["value"]) for r in rows])
        return cls(Grid1D(xs), vs, label or (f"csv:{p}" if p is not None else "csv"))

    def to_json(self) -> str:
        return json.dumps(
            {"label": self.label, "x": [float(v) for v in self.x], "value": [_json_val(v) for v in self.values]}
        )

    @classmethod
    def from_json(cls, text: str) -> "SampledFunction":
        data = json.loads(text)
        vals = [float(v) for v in data["value"]]
        return cls(Grid1D(data["x"]), vals, data.get("label", ""))


def _fmt(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return "%.17g" % v


def _json_val(v: float):
    return "inf" if math.isinf(v) else float(v)


# ---------------------------------------------------------------------------
# piecewise-linear convex functions


@dataclass(frozen=True, eq=False)
class PLConvex:
    """Convex piecewise-linear function with finitely many vertices.

    The function is +inf outside ``[vx[0], vx[-1]]``. ``slopes[j]`` is the
    slope between vertices ``j`` and ``j+1``.
    """

    vx: np.ndarray
    vv: np.ndarray

    def __post_init__(self):
        vx = np.asarray(self.vx, dtype=float)
        vv = np.asarray(self.vv, dtype=float)
        if vx.size == 0 or vx.shape != vv.shape:
            raise ValueError("PLConvex needs at least one vertex")
        object.__setattr__(self, "vx", vx)
        object.__setattr__(self, "vv", vv)

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.vv) / np.diff(self.vx)

    @property
    def domain(self) -> Tuple[float, float]:
        return float(self.vx[0]), float(self.vx[-1])

    def __call__(self, q):
        q = np.asarray(q, dtype=float)
        # vertices built from weighted sums may miss a node by rounding
        lo, hi = self.vx[0], self.vx[-1]
        slack = DOMAIN_ATOL * (1.0 + np.abs(q))
        outside = (q < lo - slack) | (q > hi + slack)
        if self.vx.size == 1:
            out = np.where(outside, np.inf, self.vv[0])
        else:
            out = np.where(outside, np.inf, np.interp(q, self.vx, self.vv))
        if out.ndim == 0:
            return float(out)
        return out

    def evaluate(self, grid: Grid1D, label: str = "") -> SampledFunction:
        vals = np.asarray(self(grid.nodes), dtype=float)
        if self.vx.size == 1 and not np.any(np.isfinite(vals)):
            # a single vertex off the grid: snap it to the nearest node
            vals = np.full(grid.n, np.inf)
            vals[grid.nearest_index(self.vx[0])] = self.vv[0]
        return SampledFunction(grid, vals, label)

    def conjugate_at(self, s) -> np.ndarray:
        """max_j (s * vx[j] - vv[j]), evaluated with a slope search."""
        s_arr = np.atleast_1d(np.asarray(s, dtype=float))
        m = self.vx.size
        if m == 1:
            out = s_arr * self.vx[0] - self.vv[0]
        else:
            j = np.searchsorted(self.slopes, s_arr)
            best = np.full(s_arr.shape, -np.inf)
            for off in (-1, 0, 1):
                jj = np.clip(j + off, 0, m - 1)
                best = np.maximum(best, s_arr * self.vx[jj] - self.vv[jj])
            out = best
        if np.ndim(s) == 0:
            return float(out[0])
        return out.reshape(np.shape(s))

    def epi_scaled(self, t: float) -> "PLConvex":
        if t < 0:
            raise ValueError("epi-multiplication needs t >= 0")
        if t == 0:
            return PLConvex(np.array([0.0]), np.array([0.0]))
        return PLConvex(t * self.vx, t * self.vv)

    def inf_convolve(self, other: "PLConvex") -> "PLConvex":
        """Exact inf-convolution by merging the two slope sequences."""
        sa, sb = self.slopes, other.slopes
        da, db = np.diff(self.vx), np.diff(other.vx)
        slopes = np.concatenate([sa, sb])
        lengths = np.concatenate([da, db])
        order = np.argsort(slopes, kind="stable")
        slopes, lengths = slopes[order], lengths[order]
        x0 = self.vx[0] + other.vx[0]
        v0 = self.vv[0] + other.vv[0]
        vx = np.concatenate([[x0], x0 + np.cumsum(lengths)])
        vv = np.concatenate([[v0], v0 + np.cumsum(lengths * slopes)])
        # the cumulative sum can round the far endpoint inward
        vx[-1] = self.vx[-1] + other.vx[-1]
        return PLConvex(vx, vv)


def lower_hull(x: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Monotone-chain lower convex hull of points sorted by x.

    Collinear middle points are dropped, so on equal slopes the leftmost
    vertex of the run is kept.
    """
    xs = np.asarray(x, dtype=float).tolist()
    vs = np.asarray(v, dtype=float).tolist()
    hx: list = []
    hv: list = []
    for px, pv in zip(xs, vs):
        while len(hx) >= 2:
            ax, av, bx, bv = hx[-2], hv[-2], hx[-1], hv[-1]
            if (bx - ax) * (pv - av) - (bv - av) * (px - ax) <= 0:
                hx.pop()
                hv.pop()
            else:
                break
        hx.append(px)
        hv.append(pv)
    return np.array(hx), np.array(hv)


def hull_of(f: SampledFunction) -> PLConvex:
    xs, vs = f.finite_points()
    hx, hv = lower_hull(xs, vs)
    return PLConvex(hx, hv)


def default_dual_grid(*hulls: PLConvex, n: int) -> Grid1D:
    """Uniform slope grid padded by 10% on each side, joined with every hull slope."""
    slopes = np.concatenate([h.slopes for h in hulls]) if hulls else np.array([])
    if slopes.size == 0:
        lo, hi = -1.0, 1.0
    else:
        smin, smax = float(slopes.min()), float(slopes.max())
        w = smax - smin
        pad = 0.1 * w if w > 0 else 1.0
        lo, hi = smin - pad, smax + pad
    uni = np.linspace(lo, hi, max(int(n), 2))
    kinks = np.unique(slopes)
    if kinks.size:
        # nodes closer than tol only produce meaningless tiny cells
        tol = 1e-9 * (hi - lo)
        kinks = kinks[np.concatenate([[True], np.diff(kinks) > tol])]
        j = np.searchsorted(kinks, uni)
        right = kinks[np.minimum(j, kinks.size - 1)]
        left = kinks[np.maximum(j - 1, 0)]
        near = (np.abs(uni - right) <= tol) | (np.abs(uni - left) <= tol)
        uni = uni[~near]
    return Grid1D(np.unique(np.concatenate([uni, kinks])))


# ---------------------------------------------------------------------------
# operations


def legendre_transform(f: SampledFunction, dual_grid: Optional[Grid1D] = None) -> SampledFunction:
    """Discrete conjugate s -> max_x (s x - f(x)) over the finite nodes of ``f``.

    Linear time after the hull. When ``dual_grid`` is omitted a padded slope
    grid containing every hull slope is used, which makes the result exact as
    a piecewise-linear function.
    """
    if oracle_mode():
        from .oracle import brute_conjugate

        if dual_grid is None:
            dual_grid = default_dual_grid(hull_of(f), n=f.grid.n)
        return brute_conjugate(f, dual_grid)
    hull = hull_of(f)
    if dual_grid is None:
        dual_grid = default_dual_grid(hull, n=f.grid.n)
    vals = hull.conjugate_at(dual_grid.nodes)
    return SampledFunction(dual_grid, vals, f"conj({f.label})@{dual_grid.describe()}")


def conjugate_at(f: SampledFunction, s) -> np.ndarray:
    """Discrete conjugate of ``f`` at arbitrary slopes."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if oracle_mode():
        xs, vs = f.finite_points()
        return np.array([np.max(si * xs - vs) for si in s])
    return hull_of(f).conjugate_at(s)


def lower_convex_envelope(f: SampledFunction) -> Tuple[PLConvex, SampledFunction]:
    hull = hull_of(f)
    return hull, hull.evaluate(f.grid, label=f"conv({f.label})")


def convexity_defect(f: SampledFunction, rtol: float = CONVEXITY_RTOL, stride: int = 1, curvature=None):
    """Check convexity of sampled data.

    Returns ``(ok, witness_x, worst)`` where ``worst`` is the most negative
    second difference net of its allowance, divided by ``1 + |values|``.
    The finite nodes must form one contiguous run; a gap counts as a
    violation at the first missing node.

    ``curvature(x)``, when given, bounds the second derivative of a smooth
    term that was subtracted from piecewise-linear data. The interpolation
    ripple this leaves is allowed for with ``2 * stride * h**2 * curvature``.
    """
    idx = np.nonzero(f.finite)[0]
    if idx.size and np.any(np.diff(idx) > 1):
        gap = idx[np.nonzero(np.diff(idx) > 1)[0][0]] + 1
        return False, float(f.x[gap]), -np.inf
    xs, vs = f.x[idx][::stride], f.values[idx][::stride]
    if xs.size < 3:
        return True, None, 0.0
    s = np.diff(vs) / np.diff(xs)
    d2 = (s[1:] - s[:-1]) * (xs[2:] - xs[:-2]) / 2.0
    scale = 1.0 + np.maximum.reduce([np.abs(vs[:-2]), np.abs(vs[1:-1]), np.abs(vs[2:])])
    if curvature is not None:
        h = (xs[2:] - xs[:-2]) / (2.0 * stride)
        c = np.maximum(np.asarray(curvature(xs[:-2]), float), np.asarray(curvature(xs[2:]), float))
        c = np.where(np.isnan(c), np.inf, c)
        d2 = d2 + 2.0 * stride * h * h * c
    rel = d2 / scale
    j = int(np.argmin(rel))
    worst = float(rel[j])
    if worst < -rtol:
        return False, float(xs[j + 1]), worst
    return True, None, worst


def _direct_infconv(f: SampledFunction, g: SampledFunction, out_grid: Grid1D, chunk: int = 256) -> np.ndarray:
    ux, uv = f.finite_points()
    q = out_grid.nodes
    out = np.full(q.size, np.inf)
    for start in range(0, q.size, chunk):
        qq = q[start:start + chunk]
        gv = _interp_pl(g.x, g.values, qq[:, None] - ux[None, :])
        out[start:start + chunk] = np.min(uv[None, :] + gv, axis=1)
    return out


def inf_convolution(
    f: SampledFunction, g: SampledFunction, out_grid: Optional[Grid1D] = None, method: str = "auto"
) -> SampledFunction:
    """(f box g)(x) = min_u f(u) + g(x - u) on ``out_grid``.

    ``direct`` minimises over the finite nodes of ``f`` with ``g`` linearly
    interpolated. ``conjugate`` merges the slopes of the two lower hulls,
    which is exact for convex data. ``auto`` picks ``conjugate`` when both
    inputs are convex data.
    """
    if out_grid is None:
        out_grid = f.grid
    label = f"({f.label})box({g.label})"
    if oracle_mode():
        from .oracle import brute_infconv

        return brute_infconv(f, g, out_grid)
    if method == "auto":
        method = "conjugate" if (f.is_convex_data() and g.is_convex_data()) else "direct"
    if method == "conjugate":
        h = hull_of(f).inf_convolve(hull_of(g))
        return h.evaluate(out_grid, label)
    if method != "direct":
        raise ValueError(f"unknown method {method!r}")
    return SampledFunction(out_grid, _direct_infconv(f, g, out_grid), label)


def epi_scale(f: SampledFunction, t: float, out_grid: Optional[Grid1D] = None) -> SampledFunction:
    """Epi-multiplication t * f(x / t); t = 0 gives the indicator of {0}."""
    if out_grid is None:
        out_grid = f.grid
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        if not (out_grid.lo <= 0.0 <= out_grid.hi):
            raise ZeroNotInGrid(f"0 is outside {out_grid.describe()}")
        vals = np.full(out_grid.n, np.inf)
        vals[out_grid.nearest_index(0.0)] = 0.0
        return SampledFunction(out_grid, vals, "indicator{0}")
    vals = t * _interp_pl(f.x, f.values, out_grid.nodes / t)
    return SampledFunction(out_grid, vals, f"{t:g}*({f.label})")
