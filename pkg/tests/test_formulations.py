import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import NETWORK_SEED, brute_force_two_bus, newton_pf, random_network, ybus
from socopf.conic import ComplexExpr, LinearExpr
from socopf.formulations import (FormulationKind, add_lnc_cuts, build, build_bfm_canonical, build_bim_canonical,
                                 build_shared, lift_ac_point)
from socopf.netmodel import Branch, Bus, Generator, Load, Network
from socopf.solver import Status, check_feasibility, solve

KINDS = list(FormulationKind)


def run(net, kind, cuts=True):
    prob, art = build(kind, net, cuts=cuts)
    sol = solve(prob)
    assert sol.status.solved, (kind, sol.status)
    return sol.objective + art.objective_constant, sol, prob, art


def row_terms(prob, rows, names):
    """Coefficients of named variables in each row, plus the constant."""
    out = []
    for r in rows:
        d = {n: r.expr.terms.get(prob.var_by_name(n).index, 0.0) for n in names}
        d["const"] = r.expr.constant
        out.append(d)
    return out


def rows(prob, tag, kind="eq"):
    src = prob.equalities if kind == "eq" else prob.inequalities
    return [r for r in src if r.tag == tag]


def two_bus_zero_shunt():
    buses = [Bus(1, 0.9, 1.1), Bus(2, 0.9, 1.1)]
    br = Branch(1, 1, 2, 0.02 + 0.2j, s_max=2.0, angle_min=-0.5, angle_max=0.5)
    gens = [Generator(1, 1, 0, 3, -2, 2, c1=2.0, c2=0.5)]
    return Network(100.0, buses, [br], gens, [Load(1, 2, 1.0 + 0.3j)], "radial2")


# -- shared core -------------------------------------------------------------------

def test_shared_rows_case2_gap(case2_gap):
    prob, art = build_shared(case2_gap)
    assert len(rows(prob, "kcl")) == 4  # two complex rows
    assert prob.count("flow-limit")["cones"] == 2
    fr = rows(prob, "shunt-link")[:2]
    p, q = row_terms(prob, fr, ["re(st_fr(1))", "re(ss_fr(1))", "im(st_fr(1))", "im(ss_fr(1))", "w(1)"])
    # P_tot = P_s and Q_tot = -0.9 W_i + Q_s
    assert p == pytest.approx({"re(st_fr(1))": 1, "re(ss_fr(1))": -1, "im(st_fr(1))": 0, "im(ss_fr(1))": 0,
                               "w(1)": 0, "const": 0})
    assert q == pytest.approx({"re(st_fr(1))": 0, "re(ss_fr(1))": 0, "im(st_fr(1))": 1, "im(ss_fr(1))": -1,
                               "w(1)": 0.9, "const": 0})


def test_zero_shunt_links_and_unrated_branch():
    net = Network(100.0, [Bus(1, 0.9, 1.1), Bus(2, 0.9, 1.1)], [Branch(1, 1, 2, 0.1j)],
                  [Generator(1, 1, 0, 1, -1, 1, 1.0)], [Load(1, 2, 0.1 + 0j)])
    prob, art = build_shared(net)
    for r in rows(prob, "shunt-link"):
        assert sorted(r.expr.terms.values()) == [-1.0, 1.0]
    assert prob.count("flow-limit")["cones"] == 0


# -- BIM -----------------------------------------------------------------------------

def test_bim_one_pair_per_bus_pair(case2_parallel):
    prob, art = build_bim_canonical(case2_parallel)
    assert len(art.pair_vars) == 1
    assert prob.count("wij-soc")["cones"] == 1


def test_bim_series_flow_coefficients(case2_gap):
    ys = 1 / (0.065 + 0.62j)
    # (0.065 - j0.62) / 0.388625
    assert (ys.real, ys.imag) == pytest.approx((0.167256, -1.595368), abs=5e-7)
    prob, art = build_bim_canonical(case2_gap)
    p_row, q_row = rows(prob, "series-flow")[:2]
    names = ["re(ss_fr(1))", "w(1)", "re(w(1,2))", "im(w(1,2))"]
    p, q = row_terms(prob, [p_row, q_row], names)
    # P = g (W_i - WR) - b WI ,  Q = -b (W_i - WR) - g WI   with Y = g + jb
    g, b = ys.real, ys.imag
    assert p == pytest.approx({"re(ss_fr(1))": 1, "w(1)": -g, "re(w(1,2))": g, "im(w(1,2))": b, "const": 0})
    assert q["w(1)"] == pytest.approx(b) and q["im(w(1,2))"] == pytest.approx(g)


def test_bim_angle_rows(case2_gap):
    prob, art = build_bim_canonical(case2_gap)
    lo, hi = rows(prob, "angle", "le")
    t = math.tan(math.radians(30))
    assert row_terms(prob, [hi], ["re(w(1,2))", "im(w(1,2))"])[0] == pytest.approx(
        {"re(w(1,2))": -t, "im(w(1,2))": 1.0, "const": 0.0})
    assert row_terms(prob, [lo], ["re(w(1,2))", "im(w(1,2))"])[0] == pytest.approx(
        {"re(w(1,2))": -t, "im(w(1,2))": -1.0, "const": 0.0})


# -- BFM -------------------------------------------------------------------------------

def test_bfm_ohm_row_case2_gap(case2_gap):
    prob, art = build_bfm_canonical(case2_gap)
    (ohm,) = rows(prob, "ohm")
    got = row_terms(prob, [ohm], ["w(2)", "w(1)", "re(ss_fr(1))", "im(ss_fr(1))", "l(1)"])[0]
    assert got == pytest.approx({"w(2)": 1, "w(1)": -1, "re(ss_fr(1))": 0.13, "im(ss_fr(1))": 1.24,
                                 "l(1)": -0.388625, "const": 0})
    assert 0.065 ** 2 + 0.62 ** 2 == pytest.approx(0.388625)


def test_bfm_current_bound_case2_gap(case2_gap):
    prob, art = build_bfm_canonical(case2_gap)
    L = art.l_var[1]
    assert prob.lower[L.index] == 0.0
    assert prob.upper[L.index] == pytest.approx(3.38952, abs=1e-5)


def test_bfm_loss_rows(case2_gap):
    prob, art = build_bfm_canonical(case2_gap)
    re, im = rows(prob, "loss")
    assert re.expr.terms[art.l_var[1].index] == pytest.approx(-0.065)
    assert im.expr.terms[art.l_var[1].index] == pytest.approx(-0.62)


def test_radial_two_bus_equivalence():
    net = two_bus_zero_shunt()
    a = run(net, "bim-canonical")[0]
    b = run(net, "bfm-canonical")[0]
    assert a == pytest.approx(b, rel=1e-6)


# -- strengthening -----------------------------------------------------------------------

def test_total_current_row_case2_gap(case2_gap):
    prob, art = build("bfm-improved", case2_gap)
    fr, to = rows(prob, "total-current", "le")
    got = row_terms(prob, [fr], ["l(1)", "im(ss_fr(1))", "re(ss_fr(1))", "w(1)"])[0]
    assert got == pytest.approx({"l(1)": 1.0, "im(ss_fr(1))": -1.8, "re(ss_fr(1))": 0.0, "w(1)": 0.81,
                                 "const": -(0.8 / 0.94) ** 2})
    assert (0.8 / 0.94) ** 2 == pytest.approx(0.72431, abs=1e-5)


def test_total_current_zero_shunt_reduces_to_series_bound():
    net = two_bus_zero_shunt()
    prob, art = build("bfm-improved", net, cuts=False)
    fr, to = rows(prob, "total-current", "le")
    assert fr.expr.terms == {art.l_var[1].index: 1.0}
    assert fr.expr.constant == pytest.approx(-(2.0 / 0.9) ** 2)


def test_bim_improved_has_no_current_variable(case2_gap):
    prob, art = build("bim-improved", case2_gap)
    assert len(rows(prob, "total-current", "le")) == 2
    assert not art.l_var
    assert not any(v.name.startswith("l(") for v in prob.variables)


def test_parallel_link_rows(case2_parallel, case2_gap):
    prob, _ = build("bfm-improved", case2_parallel)
    assert len(rows(prob, "parallel-link")) == 2  # one complex row
    prob, _ = build("bfm-improved", case2_gap)
    assert rows(prob, "parallel-link") == []
    prob, _ = build("bim-improved", case2_parallel)
    assert rows(prob, "parallel-link") == []


def test_parallel_link_unit_taps_reduce_to_z_conj_s(case2_parallel):
    prob, art = build("bfm-improved", case2_parallel, cuts=False)
    re, im = rows(prob, "parallel-link")
    # conj(Z_l) S_l - conj(Z_k) S_k with the W_i terms cancelling
    zl, zk = 0.065 - 0.62j, 0.025 + 0.75j
    want = ComplexExpr.coerce(art.s_series_fr[2]) * zk - ComplexExpr.coerce(art.s_series_fr[1]) * zl
    assert re.expr.terms.get(art.w[1].index, 0.0) == pytest.approx(0.0, abs=1e-15)
    for got, ref in ((re.expr, want.re), (im.expr, want.im)):
        keys = set(got.terms) | set(ref.terms)
        for k in keys:
            assert got.terms.get(k, 0.0) == pytest.approx(ref.terms.get(k, 0.0), abs=1e-14)


def _three_parallel():
    buses = [Bus(1, 0.95, 1.05), Bus(2, 0.95, 1.05)]
    brs = [Branch(k, 1, 2, 0.01 + 0.1j, 0.05j, 0.05j, 1 + 0j, 1.0, -0.5, 0.5) for k in (1, 2, 3)]
    gens = [Generator(1, 1, 0, 3, -2, 2, c1=1.0)]
    return Network(100.0, buses, brs, gens, [Load(1, 2, 1.2 + 0.3j)], "three")


def test_three_identical_parallels_share_flow():
    net = _three_parallel()
    obj, sol, prob, art = run(net, "bfm-improved")
    assert len(rows(prob, "parallel-link")) == 4
    flows = [sol.value(art.series_fr(k)) for k in (1, 2, 3)]
    for f in flows[1:]:
        assert abs(f - flows[0]) <= 1e-6


def test_antiparallel_groups_are_flagged():
    net = _three_parallel()
    brs = list(net.branches)
    b = brs[1]
    brs[1] = Branch(b.id, 2, 1, b.z_series, b.y_shunt_to, b.y_shunt_from, 1 + 0j, b.s_max, -0.5, 0.5)
    net2 = Network(net.base_mva, net.buses, brs, net.generators, net.loads, "anti")
    prob, art = build("bfm-improved", net2)
    assert len(art.notes) == 1 and "antiparallel" in art.notes[0]
    # reversing an identical branch does not change the physics
    a = run(net, "bfm-improved")[0]
    b = run(net2, "bfm-improved")[0]
    assert a == pytest.approx(b, rel=1e-6)


def test_lnc_flag_and_monotonicity(case2_gap, case2_parallel):
    for net in (case2_gap, case2_parallel):
        for kind in KINDS:
            p_off, _ = build(kind, net, cuts=False)
            p_on, _ = build(kind, net, cuts=True)
            assert p_off.count("lnc")["inequalities"] == 0
            assert p_on.count("lnc")["inequalities"] > 0
            assert len(p_on.inequalities) - len(p_off.inequalities) == p_on.count("lnc")["inequalities"]
            off = run(net, kind, cuts=False)[0]
            on = run(net, kind, cuts=True)[0]
            assert on >= off - 1e-6 * abs(off)


def test_build_counts_are_deterministic(case2_parallel):
    for kind in KINDS:
        a, _ = build(kind, case2_parallel)
        b, _ = build(kind, case2_parallel)
        assert a.stats() == b.stats()
        assert a.dump() == b.dump()


def test_bim_equals_shared_plus_bim_rows(case2_parallel):
    shared, _ = build_shared(case2_parallel)
    full, _ = build("bim-canonical", case2_parallel, cuts=False)
    extra = {r.tag for r in full.equalities[len(shared.equalities):]}
    assert extra == {"series-flow"}
    def key(r):
        return r.tag, r.expr.constant, r.expr.terms

    assert [key(r) for r in full.equalities[: len(shared.equalities)]] == [key(r) for r in shared.equalities]


# -- optimum properties ------------------------------------------------------------------

@pytest.mark.parametrize("name", ["case2_gap", "case2_parallel"])
def test_tightening_monotone_fixtures(name, request):
    net = request.getfixturevalue(name)
    for model in ("bim", "bfm"):
        c = run(net, f"{model}-canonical")[0]
        i = run(net, f"{model}-improved")[0]
        assert i >= c - 1e-6 * abs(c)


def test_parallel_dominance(case2_parallel):
    bim = run(case2_parallel, "bim-canonical")[0]
    bfm = run(case2_parallel, "bfm-canonical")[0]
    bfm_i = run(case2_parallel, "bfm-improved")[0]
    assert bim > bfm + 1.0
    assert bfm_i == pytest.approx(bim, rel=1e-5)


@pytest.mark.parametrize("name", ["case2_gap", "case2_parallel"])
def test_implied_current_nonnegative_at_bim_improved(name, request):
    net = request.getfixturevalue(name)
    _, sol, prob, art = run(net, "bim-improved")
    for k, expr in art.l_s.items():
        assert expr.evaluate(sol.primal) >= -1e-8


def test_parallel_link_residual_at_bfm_improved(case2_parallel):
    _, sol, prob, art = run(case2_parallel, "bfm-improved")
    res = max(abs(r.expr.evaluate(sol.primal)) for r in rows(prob, "parallel-link"))
    assert res <= 1e-8


def test_optimal_points_are_feasible(case2_gap):
    for kind in KINDS:
        _, sol, prob, art = run(case2_gap, kind)
        assert check_feasibility(prob, sol.primal).ok(1e-8)
        for c in prob.cones:
            assert c.y.evaluate(sol.primal) >= -1e-8 and c.z.evaluate(sol.primal) >= -1e-8


@pytest.mark.parametrize("seed", range(6))
def test_radial_equivalence_small_random(seed):
    rng = np.random.default_rng(NETWORK_SEED + seed)
    net = random_network(rng, int(rng.integers(2, 7)))
    a = run(net, "bim-canonical")[0]
    b = run(net, "bfm-canonical")[0]
    assert abs(a - b) <= 1e-5 * abs(a)


@pytest.mark.parametrize("seed", range(6))
def test_monotone_small_random_meshed(seed):
    rng = np.random.default_rng(NETWORK_SEED + 1000 + seed)
    net = random_network(rng, int(rng.integers(3, 7)), extra_branches=2, parallels=1)
    for model in ("bim", "bfm"):
        c = run(net, f"{model}-canonical")[0]
        i = run(net, f"{model}-improved")[0]
        assert i >= c - 1e-6 * abs(c)


# -- AC lift --------------------------------------------------------------------------------

def test_flat_start_lift():
    net = Network(100.0, [Bus(1, 0.9, 1.1), Bus(2, 0.9, 1.1)], [Branch(1, 1, 2, 0.01 + 0.1j)],
                  [Generator(1, 1, -1, 1, -1, 1)])
    pt = lift_ac_point(net, {1: 1 + 0j, 2: 1 + 0j})
    assert pt.w == {1: 1.0, 2: 1.0}
    assert pt.series_fr[1] == 0 and pt.total_to[1] == 0 and pt.l_s[1] == 0
    assert pt.gen[1] == 0


@given(st.floats(0.9, 1.1), st.floats(0.9, 1.1), st.floats(-0.5, 0.5), st.integers(0, 3))
def test_lift_is_rank_one(v1, v2, th, kind_idx):
    net = _three_parallel()
    net = Network(net.base_mva, [Bus(1, 0.8, 1.2), Bus(2, 0.8, 1.2)], net.branches,
                  [Generator(1, 1, -50, 50, -50, 50, 1.0), Generator(2, 2, -50, 50, -50, 50, 1.0)], net.loads)
    prob, art = build(KINDS[kind_idx], net, cuts=False)
    x = lift_ac_point(net, {1: v1 * np.exp(1j * th), 2: v2 + 0j}).assignment(prob, art)
    for c in prob.cones:
        if c.tag in ("wij-soc", "bfm-soc"):
            lhs = sum(e.evaluate(x) ** 2 for e in c.x)
            assert lhs == pytest.approx(c.y.evaluate(x) * c.z.evaluate(x), rel=1e-12, abs=1e-14)


def _two_bus_pf_point(net, v1, v2, p2):
    Y = ybus(2, [(0, 1, br.z_series, br.y_shunt_from, br.y_shunt_to, br.tap) for br in net.branches])
    return newton_pf(Y, np.array([v1, v2]), np.zeros(2), np.array([0.0, p2]), [1])


def random_two_bus(rng):
    buses = [Bus(1, 0.9, 1.1), Bus(2, 0.9, 1.1)]
    n_br = int(rng.integers(1, 4))
    brs = []
    for k in range(n_br):
        zmag = rng.uniform(0.05, 0.5)
        z = zmag * np.exp(1j * rng.uniform(0.8, 1.5))
        f, t = (1, 2) if rng.random() < 0.7 else (2, 1)
        tap = rng.uniform(0.95, 1.05) * np.exp(1j * math.radians(rng.uniform(-3, 3)))
        brs.append(Branch(k + 1, f, t, complex(z), complex(rng.uniform(0, 0.02), rng.uniform(0, 0.3)),
                          complex(0, rng.uniform(0, 0.3)), complex(tap), 50.0, -math.pi / 4, math.pi / 4))
    gens = [Generator(1, 1, -50, 50, -50, 50, 1.0, 0.1), Generator(2, 2, -50, 50, -50, 50, 2.0, 0.1)]
    return Network(100.0, buses, brs, gens, [Load(1, 2, 0.3 + 0.1j)], "pf2")


@settings(max_examples=25)
@given(st.integers(0, 10_000))
def test_newton_points_lift_to_feasible_points(seed):
    rng = np.random.default_rng(seed)
    net = random_two_bus(rng)
    # orient the Newton model the same way as each branch
    Y_branches = []
    for br in net.branches:
        f, t = (0, 1) if br.from_bus == 1 else (1, 0)
        Y_branches.append((f, t, br.z_series, br.y_shunt_from, br.y_shunt_to, br.tap))
    Y = ybus(2, Y_branches)
    vm = rng.uniform(0.92, 1.08, 2)
    U = newton_pf(Y, vm, np.zeros(2), np.array([0.0, rng.uniform(-0.4, 0.4)]), [1])
    if abs(np.angle(U[1] * np.conj(U[0]))) > math.pi / 4 - 0.05:
        return
    pt = lift_ac_point(net, {1: U[0], 2: U[1]})
    # the lift reproduces the oracle injections
    S = U * np.conj(Y @ U)
    assert abs(sum(pt.total_fr[b.id] for b in net.branches if b.from_bus == 1)
               + sum(pt.total_to[b.id] for b in net.branches if b.to_bus == 1) - S[0]) <= 1e-12
    for kind in KINDS:
        prob, art = build(kind, net, cuts=True)
        assert check_feasibility(prob, pt.assignment(prob, art)).ok(1e-8), kind


def test_relaxations_bound_the_oracle_ac_optimum(case2_gap, case2_parallel):
    for net in (case2_gap, case2_parallel):
        ac = brute_force_two_bus(net)
        pt = lift_ac_point(net, ac.voltages)
        for kind in KINDS:
            obj, sol, prob, art = run(net, kind)
            assert obj <= ac.cost + 1e-6 * abs(ac.cost)
            x = pt.assignment(prob, art)
            assert check_feasibility(prob, x).ok(1e-8), kind
