"""Brute-force reference implementations.

Nothing here uses hulls or conjugate shortcuts; everything is a direct scan.
"""
from __future__ import annotations

import numpy as np

from .grid import Grid1D, SampledFunction
from .kernels import LegendreKernel, bregman_distance


def brute_conjugate(f: SampledFunction, dual_grid: Grid1D, chunk: int = 512) -> SampledFunction:
    xs, vs = f.finite_points()
    s = dual_grid.nodes
    out = np.empty(s.size)
    for a in range(0, s.size, chunk):
        out[a:a + chunk] = np.max(s[a:a + chunk, None] * xs[None, :] - vs[None, :], axis=1)
    return SampledFunction(dual_grid, out, f"brute_conj({f.label})")


def brute_envelope(f: SampledFunction, k: LegendreKernel, lam: float, base_points) -> np.ndarray:
    """min over grid x of f(x) + D(x, y) / lam, one base point at a time."""
    base_points = np.atleast_1d(np.asarray(base_points, dtype=float))
    xs, vs = f.finite_points()
    out = np.full(base_points.size, np.inf)
    for i, y in enumerate(base_points):
        if not k.in_U(y):
            continue
        out[i] = np.min(vs + bregman_distance(k, xs, y) / lam)
    return out


def brute_infconv(f: SampledFunction, g: SampledFunction, out_grid: Grid1D) -> SampledFunction:
    """Pairwise scan of f(u) + g(v), each sum binned to the output node nearest u + v."""
    out = np.full(out_grid.n, np.inf)
    fx, fv = f.finite_points()
    gx, gv = g.finite_points()
    nodes = out_grid.nodes
    lo_edge = nodes[0] - 0.5 * (nodes[1] - nodes[0])
    hi_edge = nodes[-1] + 0.5 * (nodes[-1] - nodes[-2])
    mids = 0.5 * (nodes[1:] + nodes[:-1])
    for u, fu in zip(fx, fv):
        target = u + gx
        ok = (target >= lo_edge) & (target <= hi_edge)
        if not np.any(ok):
            continue
        idx = np.searchsorted(mids, target[ok])
        np.minimum.at(out, idx, fu + gv[ok])
    return SampledFunction(out_grid, out, f"brute({f.label})box({g.label})")
