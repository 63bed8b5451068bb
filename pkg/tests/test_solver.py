"""Hand-derivable conic programs with known optima and statuses."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from socopf.conic import ConicProblem, LinearExpr
from socopf.solver import SolverSettings, Status, check_feasibility, matrix_residuals, solve
from socopf.solver.check import as_point

TOL = 1e-8


def lin(*pairs, const=0.0):
    e = LinearExpr(const)
    for v, c in pairs:
        e = e + LinearExpr.of(v, c)
    return e


# Each builder returns (problem, expected status, expected objective, expected point or None)

def cone_boundary():
    p = ConicProblem("cone-boundary")
    x = p.add_variable("x", -5.0)
    y = p.add_variable("y", 1.0, 1.0)
    z = p.add_variable("z", 1.0, 1.0)
    p.add_rotated_cone([x], y, z)
    p.set_objective(lin((x, 1)))
    return p, Status.OPTIMAL, -1.0, {"x": -1.0}


def pinned():
    p = ConicProblem("pinned")
    P = p.add_variable("P")
    p.add_eq(lin((P, 1), const=-0.5))
    p.set_objective(lin((P, 1)))
    return p, Status.OPTIMAL, 0.5, {"P": 0.5}


def small_lp():
    p = ConicProblem("lp")
    x, y = p.add_variable("x", 0.0), p.add_variable("y", 0.0)
    p.add_le(lin((x, -1), (y, -2), const=2.0))  # x + 2y >= 2
    p.set_objective(lin((x, 3), (y, 1)))
    return p, Status.OPTIMAL, 1.0, {"x": 0.0, "y": 1.0}


def squared_distance_to_line():
    # min x^2 + y^2 s.t. x + y = 2  ->  x = y = 1, value 2
    p = ConicProblem("distance")
    x, y, t = p.add_variable("x"), p.add_variable("y"), p.add_variable("t", 0.0)
    p.add_eq(lin((x, 1), (y, 1), const=-2.0))
    p.add_rotated_cone([x, y], t, 1.0)
    p.set_objective(lin((t, 1)))
    return p, Status.OPTIMAL, 2.0, {"x": 1.0, "y": 1.0}


def disk_linear():
    # min -x - y over the unit disk -> -sqrt(2)
    p = ConicProblem("disk")
    x, y = p.add_variable("x"), p.add_variable("y")
    p.add_rotated_cone([x, y], 1.0, 1.0)
    p.set_objective(lin((x, -1), (y, -1)))
    r = 1 / math.sqrt(2)
    return p, Status.OPTIMAL, -math.sqrt(2), {"x": r, "y": r}


def hyperbola():
    # min y + z s.t. y z >= 1 -> y = z = 1
    p = ConicProblem("hyperbola")
    y, z = p.add_variable("y", 0.0), p.add_variable("z", 0.0)
    p.add_rotated_cone([LinearExpr(1.0)], y, z)
    p.set_objective(lin((y, 1), (z, 1)))
    return p, Status.OPTIMAL, 2.0, {"y": 1.0, "z": 1.0}


def rotated_scale():
    # min y s.t. 9 <= 2 y -> 4.5
    p = ConicProblem("rotated")
    y = p.add_variable("y", 0.0)
    p.add_rotated_cone([LinearExpr(3.0)], y, 2.0)
    p.set_objective(lin((y, 1)))
    return p, Status.OPTIMAL, 4.5, {"y": 4.5}


def three_dim_sum():
    # min a^2 + b^2 + c^2 s.t. a + b + c = 3 -> 3 at (1, 1, 1)
    p = ConicProblem("sum3")
    a, b, c = (p.add_variable(n) for n in "abc")
    t = p.add_variable("t", 0.0)
    p.add_eq(lin((a, 1), (b, 1), (c, 1), const=-3.0))
    p.add_rotated_cone([a, b, c], t, 1.0)
    p.set_objective(lin((t, 1)))
    return p, Status.OPTIMAL, 3.0, {"a": 1.0, "b": 1.0, "c": 1.0}


def geometric_mean():
    # max u s.t. u^2 <= y z, y + z <= 2 -> u = 1
    p = ConicProblem("geomean")
    u, y, z = p.add_variable("u"), p.add_variable("y", 0.0), p.add_variable("z", 0.0)
    p.add_le(lin((y, 1), (z, 1), const=-2.0))
    p.add_rotated_cone([u], y, z)
    p.set_objective(lin((u, -1)))
    return p, Status.OPTIMAL, -1.0, {"u": 1.0, "y": 1.0, "z": 1.0}


def quadratic_epigraph():
    # min p^2 - 3p + 4 -> p = 1.5, value 1.75
    p = ConicProblem("quad")
    x = p.add_variable("p", -10, 10)
    p.set_objective(p.epigraph_quadratic(1.0, -3.0, x) + 4.0)
    return p, Status.OPTIMAL, 1.75, {"p": 1.5}


def infeasible_bounds():
    p = ConicProblem("infeasible-lp")
    x = p.add_variable("x")
    p.add_le(lin((x, -1), const=2.0))  # x >= 2
    p.add_le(lin((x, 1), const=-1.0))  # x <= 1
    p.set_objective(lin((x, 1)))
    return p, Status.INFEASIBLE, math.inf, None


def infeasible_cone():
    # x = 2 but x^2 <= 1
    p = ConicProblem("infeasible-cone")
    x = p.add_variable("x", 2.0, 2.0)
    p.add_rotated_cone([x], 1.0, 1.0)
    p.set_objective(lin((x, 1)))
    return p, Status.INFEASIBLE, math.inf, None


def unbounded_ray():
    p = ConicProblem("unbounded-lp")
    x = p.add_variable("x")
    p.add_le(lin((x, 1), const=-1.0))
    p.set_objective(lin((x, 1)))
    return p, Status.UNBOUNDED, -math.inf, None


def unbounded_cone():
    # min -y s.t. x^2 <= y * 1, x in [-1, 1]: y grows without limit
    p = ConicProblem("unbounded-cone")
    x, y = p.add_variable("x", -1.0, 1.0), p.add_variable("y", 0.0)
    p.add_rotated_cone([x], y, 1.0)
    p.set_objective(lin((y, -1)))
    return p, Status.UNBOUNDED, -math.inf, None


CASES = [cone_boundary, pinned, small_lp, squared_distance_to_line, disk_linear, hyperbola, rotated_scale,
         three_dim_sum, geometric_mean, quadratic_epigraph, infeasible_bounds, infeasible_cone,
         unbounded_ray, unbounded_cone]


@pytest.mark.parametrize("make", CASES, ids=lambda f: f.__name__)
def test_hand_derived(make):
    prob, status, obj, point = make()
    sol = solve(prob.seal())
    assert sol.status is status
    if status is Status.OPTIMAL:
        assert sol.objective == pytest.approx(obj, abs=TOL * (1 + abs(obj)) * 10)
        for name, val in point.items():
            assert sol.value(prob.var_by_name(name)) == pytest.approx(val, abs=1e-6)
        assert max(sol.max_residuals.values()) <= TOL
        # duality sandwich
        assert sol.objective >= sol.dual_objective - 1e-8 * (1 + abs(sol.objective))
    else:
        assert sol.objective == obj
        assert np.all(np.isnan(sol.primal))


@pytest.mark.parametrize("make", [c for c in CASES if c()[1] is Status.OPTIMAL], ids=lambda f: f.__name__)
def test_checker_agrees_with_solver(make):
    prob, *_ = make()
    sol = solve(prob.seal())
    rep = check_feasibility(prob, sol.primal)
    for k, v in rep.as_dict().items():
        assert abs(v - sol.max_residuals[k]) <= 1e-10


@pytest.mark.parametrize("scale", [1e-3, 0.5, 7.0, 1e4])
def test_argmin_invariant_to_objective_scaling(scale):
    base, *_ = squared_distance_to_line()
    ref = solve(base.seal())
    p, *_ = squared_distance_to_line()
    p._sealed = False
    p.set_objective(p.objective * scale)
    sol = solve(p.seal())
    assert sol.status is Status.OPTIMAL
    np.testing.assert_allclose(sol.primal, ref.primal, atol=1e-6)


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.2, 4))
def test_projection_onto_disk(a, b, r):
    # min |(x, y) - (a, b)|^2 s.t. x^2 + y^2 <= r^2
    p = ConicProblem()
    x, y, t = p.add_variable("x"), p.add_variable("y"), p.add_variable("t", 0.0)
    p.add_rotated_cone([x, y], r, r)
    p.add_rotated_cone([lin((x, 1), const=-a), lin((y, 1), const=-b)], t, 1.0)
    p.set_objective(lin((t, 1)))
    sol = solve(p.seal())
    assert sol.status.solved
    n = math.hypot(a, b)
    want = (a, b) if n <= r else (a * r / n, b * r / n)
    # on the circle the optimum is 0 with quadratic growth, so the point is
    # only determined to about sqrt(tol)
    assert (sol.value(x), sol.value(y)) == pytest.approx(want, abs=1e-4)
    assert sol.objective == pytest.approx(max(n - r, 0.0) ** 2, abs=1e-6)


def test_deterministic():
    a = solve(geometric_mean()[0].seal())
    b = solve(geometric_mean()[0].seal())
    assert a.iterations == b.iterations
    assert np.array_equal(a.primal, b.primal)


def test_fault_injection_reported_by_checker():
    prob, *_ = squared_distance_to_line()
    sol = solve(prob.seal())
    pt = sol.primal.copy()
    pt[prob.var_by_name("x").index] += 1.0
    rep = check_feasibility(prob, pt)
    assert rep.equalities == pytest.approx(1.0, abs=1e-6)
    assert not rep.ok(1e-8)


def test_checker_requires_every_variable():
    prob, *_ = small_lp()
    prob.seal()
    with pytest.raises(ValueError, match="no value"):
        check_feasibility(prob, {"x": 1.0})
    with pytest.raises(ValueError, match="shape"):
        check_feasibility(prob, np.zeros(5))
    rep = check_feasibility(prob, {prob.var_by_name("x"): 0.0, 1: 1.0})
    assert rep.ok(1e-12)
    assert as_point(prob, {"x": 2.0, "y": 0.0}).tolist() == [2.0, 0.0]


def test_matrix_residuals_cone_measure():
    prob, *_ = cone_boundary()
    data = prob.seal().to_standard_form()
    res = matrix_residuals(data, np.array([-2.0, 1.0, 1.0]))
    assert res["cones"] == pytest.approx(3.0)  # x^2 - y z
    assert res["bounds"] == 0.0


def test_errors():
    with pytest.raises(ValueError, match="sealed"):
        solve(pinned()[0])
    empty = ConicProblem()
    empty.add_variable("x")
    with pytest.raises(ValueError):
        solve(empty.seal())
    bad = ConicProblem()
    x = bad.add_variable("x")
    bad.add_le(lin((x, float("nan"))))
    bad.set_objective(lin((x, 1)))
    with pytest.raises(ValueError, match="NaN"):
        solve(bad.seal())


def test_settings_validation():
    with pytest.raises(ValueError):
        SolverSettings(feas_tol=0)
    with pytest.raises(ValueError):
        SolverSettings(max_iters=-1)


def test_iteration_limit_status():
    sol = solve(three_dim_sum()[0].seal(), SolverSettings(max_iters=1))
    assert sol.status in (Status.ITER_LIMIT, Status.ALMOST_OPTIMAL)
    assert sol.iterations <= 1
