"""Residual summaries for identity checks."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Optional


@dataclass
class VerificationReport:
    name: str
    sup_error: float
    witness_x: Optional[float]
    tolerance: float
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.sup_error <= self.tolerance)

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
            if isinstance(v, dict):
                return {k: clean(w) for k, w in v.items()}
            if isinstance(v, (list, tuple)):
                return [clean(w) for w in v]
            return v

        return clean(
            {
                "name": self.name,
                "sup_error": float(self.sup_error),
                "witness_x": None if self.witness_x is None else float(self.witness_x),
                "tolerance": float(self.tolerance),
                "pass": self.passed,
                "metadata": self.metadata,
            }
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def __str__(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"[{verdict}] {self.name}: sup_error={self.sup_error:.3e} tol={self.tolerance:.1e} at x={self.witness_x}"


def report_from_errors(name, xs, errors, tolerance, **metadata) -> VerificationReport:
    """Build a report from per-point absolute errors (nan entries ignored)."""
    import numpy as np

    errors = np.asarray(errors, dtype=float)
    xs = np.asarray(xs, dtype=float)
    mask = ~np.isnan(errors)
    if not np.any(mask):
        return VerificationReport(name, 0.0, None, tolerance, dict(metadata, compared=0))
    e = errors[mask]
    j = int(np.argmax(e))
    return VerificationReport(name, float(e[j]), float(xs[mask][j]), tolerance, dict(metadata, compared=int(mask.sum())))
