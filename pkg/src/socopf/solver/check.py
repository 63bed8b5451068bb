"""Constraint-violation report for a candidate point.

Rows are re-evaluated straight from the :class:`~socopf.conic.ConicProblem`
so the report does not depend on the matrix form the solver works with.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from ..conic import ConicProblem, Var

CLASSES = ("bounds", "equalities", "inequalities", "cones")


@dataclass(frozen=True)
class FeasibilityReport:
    bounds: float
    equalities: float
    inequalities: float
    cones: float

    @property
    def worst(self) -> float:
        return max(self.bounds, self.equalities, self.inequalities, self.cones)

    def ok(self, tol: float) -> bool:
        return self.worst <= tol

    def as_dict(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in CLASSES}


def as_point(problem: ConicProblem, point) -> np.ndarray:
    """Dense vector from an array or a mapping keyed by Var, index or name."""
    n = problem.num_variables
    if isinstance(point, Mapping):
        out = np.full(n, np.nan)
        by_name = None
        for key, val in point.items():
            if isinstance(key, Var):
                idx = key.index
            elif isinstance(key, (int, np.integer)):
                idx = int(key)
            else:
                if by_name is None:
                    by_name = {v.name: v.index for v in problem.variables}
                idx = by_name[key]
            out[idx] = val
    else:
        out = np.asarray(point, dtype=float)
        if out.shape != (n,):
            raise ValueError(f"point has shape {out.shape}, expected ({n},)")
    missing = np.flatnonzero(np.isnan(out))
    if missing.size:
        names = ", ".join(problem.variables[i].name for i in missing[:5])
        raise ValueError(f"no value for {missing.size} variable(s): {names}")
    return out


def check_feasibility(problem: ConicProblem, point) -> FeasibilityReport:
    """Largest absolute violation per constraint class.

    Cones report ``max(0, sum(x**2) - y*z, -y, -z)``.
    """
    x = as_point(problem, point)
    lo = np.asarray(problem.lower)
    hi = np.asarray(problem.upper)
    with np.errstate(invalid="ignore"):
        bviol = np.concatenate([[0.0], lo - x, x - hi])
    bounds = float(np.nanmax(np.maximum(bviol, 0.0)))

    eq = max((abs(r.expr.evaluate(x)) for r in problem.equalities), default=0.0)
    ineq = max((max(0.0, r.expr.evaluate(x)) for r in problem.inequalities), default=0.0)
    cone = 0.0
    for c in problem.cones:
        y, z = c.y.evaluate(x), c.z.evaluate(x)
        sq = math.fsum(e.evaluate(x) ** 2 for e in c.x)
        cone = max(cone, sq - y * z, -y, -z)
    return FeasibilityReport(bounds, float(eq), float(ineq), float(cone))
