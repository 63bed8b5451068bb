"""Embedded conic interior-point solver and an independent feasibility checker."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..conic import ComplexExpr, ConicProblem, LinearExpr, ProblemData, Var
from . import kernels
from .check import FeasibilityReport, as_point, check_feasibility
from .ipm import solve_standard


class Status(str, Enum):
    OPTIMAL = "Optimal"
    ALMOST_OPTIMAL = "AlmostOptimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    ITER_LIMIT = "IterLimit"
    NUMERICAL_FAILURE = "NumericalFailure"

    def __str__(self):
        return self.value

    @property
    def solved(self) -> bool:
        return self in (Status.OPTIMAL, Status.ALMOST_OPTIMAL)


@dataclass(frozen=True)
class SolverSettings:
    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    max_iters: int = 200
    static_reg: float = 1e-9
    refine_steps: int = 1
    ruiz_sweeps: int = 10
    verbose: bool = False

    def __post_init__(self):
        for name in ("feas_tol", "gap_tol", "max_iters", "static_reg"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.refine_steps < 0 or self.ruiz_sweeps < 0:
            raise ValueError("refine_steps and ruiz_sweeps must be nonnegative")


@dataclass
class Solution:
    status: Status
    objective: float
    primal: np.ndarray
    max_residuals: dict[str, float]
    iterations: int = 0
    dual_objective: float = math.nan
    solve_time: float = 0.0
    info: dict = field(default_factory=dict)

    def value(self, item):
        """Value of a variable, linear or complex expression at the primal point."""
        if isinstance(item, Var):
            return float(self.primal[item.index])
        if isinstance(item, (LinearExpr, ComplexExpr)):
            return item.evaluate(self.primal)
        raise TypeError(f"cannot evaluate {type(item).__name__}")


def matrix_residuals(data: ProblemData, x: np.ndarray) -> dict[str, float]:
    """Per-class violations of ``x`` computed from the assembled matrices.

    This is the solver-side view; :func:`check_feasibility` recomputes the
    same quantities from the problem rows.
    """
    ne, nb = data.n_equalities, data.n_bound_rows
    ra = data.A @ x - data.b
    rg = data.h - data.G @ x  # slack, must be >= 0 or in the cone
    ni = data.nonneg

    def worst(v):
        return float(np.max(v, initial=0.0))

    bounds = max(worst(np.abs(ra[ne:])), worst(-rg[:nb]))
    cones = 0.0
    k = ni
    for d in data.soc_dims:
        t, u = rg[k], rg[k + 1: k + d]
        # back to the rotated form: y z - |x|^2 = (t^2 - |u|^2) / 2
        y, z = (t + u[0]) / math.sqrt(2), (t - u[0]) / math.sqrt(2)
        cones = max(cones, (u @ u - t * t) / 2, -y, -z)
        k += d
    return {
        "bounds": bounds,
        "equalities": worst(np.abs(ra[:ne])),
        "inequalities": worst(-rg[nb:ni]),
        "cones": float(cones),
    }


def solve(problem: ConicProblem, settings: SolverSettings | None = None) -> Solution:
    """Solve a sealed problem with the embedded interior-point method."""
    settings = settings or SolverSettings()
    if not problem._sealed:
        raise ValueError("problem must be sealed before solving")
    data = problem.to_standard_form()
    if data.A.shape[0] + data.G.shape[0] == 0 and not np.any(data.c):
        raise ValueError("problem has no constraints and a zero objective")

    def worst(x):
        return check_feasibility(problem, problem.repair_epigraphs(x)).worst

    t0 = time.perf_counter()
    res = solve_standard(data, settings, check=worst)
    elapsed = time.perf_counter() - t0

    status = Status(res.status)
    if status in (Status.INFEASIBLE, Status.UNBOUNDED):
        primal = np.full(problem.num_variables, np.nan)
        residuals = {k: math.nan for k in ("bounds", "equalities", "inequalities", "cones")}
        objective = math.inf if status is Status.INFEASIBLE else -math.inf
        dual = objective
    else:
        primal = problem.repair_epigraphs(res.x)
        residuals = matrix_residuals(data, primal)
        objective = float(data.c @ primal) + data.c0
        dual = res.dcost + data.c0
    return Solution(status, objective, primal, residuals, res.iterations, dual, elapsed, res.info)


__all__ = [
    "FeasibilityReport",
    "Solution",
    "SolverSettings",
    "Status",
    "as_point",
    "check_feasibility",
    "kernels",
    "matrix_residuals",
    "solve",
]
