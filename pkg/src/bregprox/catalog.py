"""Textual function specifiers for the command line.

A specifier is a kind followed by its parameters and optional modifiers::

    abs
    quad a b c                  a x^2 + b x + c
    zero
    min_abs c1 c2 offset        min(|x - c1|, |x - c2| + offset)
    indicator_point p
    indicator_interval a b
    indicator_finite p1 p2 ...
    csv path/to/file.csv        columns x,value

Modifiers ``shift=s`` (x -> f(x - s)) and ``scale=c`` (c * f) may follow.
Point-type indicators insert their points into the grid so they are hit
exactly.
"""
from __future__ import annotations

import shlex
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from .core import indicator
from .grid import Grid1D, SampledFunction

KINDS = {
    "abs": 0,
    "zero": 0,
    "quad": 3,
    "min_abs": 3,
    "indicator_point": 1,
    "indicator_interval": 2,
    "indicator_finite": None,
    "csv": 1,
}


@dataclass(frozen=True)
class FunctionSpecifier:
    kind: str
    params: Tuple = ()
    shift: float = 0.0
    scale: float = 1.0
    text: str = field(default="", compare=False)

    @classmethod
    def parse(cls, text: str) -> "FunctionSpecifier":
        tokens = shlex.split(text)
        if not tokens:
            raise ValueError("empty function specifier")
        kind, rest = tokens[0], tokens[1:]
        if kind not in KINDS:
            raise ValueError(f"unknown function kind {kind!r}; expected one of {', '.join(KINDS)}")
        shift, scale = 0.0, 1.0
        params = []
        for tok in rest:
            if tok.startswith("shift="):
                shift = float(tok.split("=", 1)[1])
            elif tok.startswith("scale="):
                scale = float(tok.split("=", 1)[1])
            else:
                params.append(tok)
        arity = KINDS[kind]
        if arity is not None and len(params) != arity:
            raise ValueError(f"{kind} takes {arity} parameter(s), got {len(params)}")
        if kind == "indicator_finite" and not params:
            raise ValueError("indicator_finite needs at least one point")
        if kind == "indicator_interval" and float(params[0]) > float(params[1]):
            raise ValueError("indicator_interval needs a <= b")
        if scale < 0:
            raise ValueError("scale must be nonnegative")
        parsed = tuple(params) if kind == "csv" else tuple(float(p) for p in params)
        return cls(kind, parsed, shift, scale, text)

    def build(self, grid: Grid1D) -> SampledFunction:
        k, p, s = self.kind, self.params, self.shift
        label = self.text or self.kind
        if k == "csv":
            f = SampledFunction.from_csv(p[0])
            vals = f(grid.nodes - s) if s else f(grid.nodes)
            return SampledFunction(grid, self.scale * np.asarray(vals), label)
        if k == "indicator_point":
            return _scaled(indicator(grid, [p[0] + s], label), self.scale)
        if k == "indicator_finite":
            return _scaled(indicator(grid, [q + s for q in p], label), self.scale)
        if k == "indicator_interval":
            return _scaled(indicator(grid, [(p[0] + s, p[1] + s)], label), self.scale)
        x = grid.nodes - s
        if k == "abs":
            v = np.abs(x)
        elif k == "zero":
            v = np.zeros_like(x)
        elif k == "quad":
            v = p[0] * x * x + p[1] * x + p[2]
        elif k == "min_abs":
            v = np.minimum(np.abs(x - p[0]), np.abs(x - p[1]) + p[2])
        else:  # pragma: no cover - guarded by parse
            raise ValueError(k)
        return SampledFunction(grid, self.scale * v, label)


def _scaled(f: SampledFunction, c: float) -> SampledFunction:
    if c == 1.0:
        return f
    return f.with_values(np.where(f.finite, c * f.values, np.inf))


def build_function(text: str, grid: Grid1D) -> SampledFunction:
    return FunctionSpecifier.parse(text).build(grid)


def parse_grid(text: str) -> Grid1D:
    parts = text.split()
    if len(parts) != 3:
        raise ValueError(f"grid must be 'lo hi n', got {text!r}")
    lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    return Grid1D.uniform(lo, hi, n)


def parse_floats(text: str) -> List[float]:
    return [float(t) for t in text.replace(",", " ").split()]
