"""Bregman envelopes, proximal maps and proximal averages on 1-D grids."""
from .average import AverageSpec, convexity_certificate, proximal_average, sweep
from .core import (
    anisotropic_envelope,
    anisotropic_prox,
    bregman_project,
    envelope,
    envelope_via_conjugate,
    indicator,
    prox,
    prox_bound_threshold,
    prox_hull,
)
from .grid import Grid1D, SampledFunction, inf_convolution, legendre_transform, lower_convex_envelope
from .kernels import bregman_distance, kernel

__all__ = [
    "AverageSpec",
    "Grid1D",
    "SampledFunction",
    "anisotropic_envelope",
    "anisotropic_prox",
    "bregman_distance",
    "bregman_project",
    "convexity_certificate",
    "envelope",
    "envelope_via_conjugate",
    "indicator",
    "inf_convolution",
    "kernel",
    "legendre_transform",
    "lower_convex_envelope",
    "prox",
    "prox_bound_threshold",
    "prox_hull",
    "proximal_average",
    "sweep",
]
