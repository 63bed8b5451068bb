"""Second-order cone relaxations of AC-OPF as :class:`ConicProblem` instances.

Four variants are built from one shared core:

* bus injection model (BIM): lifted cross products ``W_ij`` per bus pair;
* branch flow model (BFM): lifted series current ``L`` per branch;
* the improved variants add total-current limits implied by the apparent
  power ratings, and (BFM only) consistency of ``W_ij`` across parallel
  branches.

Series powers are variables.  Total powers are variables tied to the series
powers by the shunt link rows.  The constant part of the cost stays out of
the problem and is reported separately.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .conic import ComplexExpr, ConicProblem, LinearExpr, Var
from .netmodel import Branch, Network, SeriesCurrentBound, branch_bounds, connected_pairs, parallel_groups


class FormulationKind(str, enum.Enum):
    BIM_CANONICAL = "bim-canonical"
    BFM_CANONICAL = "bfm-canonical"
    BIM_IMPROVED = "bim-improved"
    BFM_IMPROVED = "bfm-improved"

    def __str__(self):
        return self.value

    @property
    def model(self) -> str:
        return self.value.split("-")[0]

    @property
    def improved(self) -> bool:
        return self.value.endswith("improved")


@dataclass
class FormulationArtifacts:
    """Map from network entities to IR variables and expressions.

    Complex quantities are :class:`ComplexExpr`; ``w_ij``/``w_ji`` are given
    in each branch's own orientation.
    """

    network: Network
    kind: FormulationKind | None = None
    cuts: bool = False
    w: dict[int, Var] = field(default_factory=dict)
    pair_vars: dict[tuple[int, int], tuple[Var, Var]] = field(default_factory=dict)
    w_ij: dict[int, ComplexExpr] = field(default_factory=dict)
    w_ji: dict[int, ComplexExpr] = field(default_factory=dict)
    l_s: dict[int, LinearExpr] = field(default_factory=dict)
    l_var: dict[int, Var] = field(default_factory=dict)
    s_series_fr: dict[int, tuple[Var, Var]] = field(default_factory=dict)
    s_series_to: dict[int, tuple[Var, Var]] = field(default_factory=dict)
    s_total_fr: dict[int, tuple[Var, Var]] = field(default_factory=dict)
    s_total_to: dict[int, tuple[Var, Var]] = field(default_factory=dict)
    pg: dict[int, Var] = field(default_factory=dict)
    qg: dict[int, Var] = field(default_factory=dict)
    cost_epigraph: dict[int, Var] = field(default_factory=dict)
    bounds: dict[int, SeriesCurrentBound] = field(default_factory=dict)
    objective_constant: float = 0.0
    notes: list[str] = field(default_factory=list)

    def branch(self, branch_id: int) -> Branch:
        return self._branches[branch_id]

    def __post_init__(self):
        self._branches = {br.id: br for br in self.network.branches}

    def series_fr(self, branch_id: int) -> ComplexExpr:
        return ComplexExpr.coerce(self.s_series_fr[branch_id])

    def series_to(self, branch_id: int) -> ComplexExpr:
        return ComplexExpr.coerce(self.s_series_to[branch_id])

    def total_current_sq(self, branch_id: int) -> tuple[LinearExpr, LinearExpr]:
        """Squared total current magnitudes at both ends, as linear expressions.

        The from-side value is measured on the bus side of the transformer.
        """
        br = self.branch(branch_id)
        t2 = abs(br.tap) ** 2
        L = self.l_s[branch_id]
        wi = LinearExpr.of(self.w[br.from_bus])
        wj = LinearExpr.of(self.w[br.to_bus])
        fr = (L + _herm2(br.y_shunt_from, self.series_fr(branch_id)) + wi * (abs(br.y_shunt_from) ** 2 / t2)) / t2
        to = L + _herm2(br.y_shunt_to, self.series_to(branch_id)) + wj * abs(br.y_shunt_to) ** 2
        return fr, to


def _herm2(y: complex, s: ComplexExpr) -> LinearExpr:
    """``y*s + conj(y*s)`` = ``2*Re(y*s)``."""
    return (s * y).re * 2.0


def _pair_of(br: Branch) -> frozenset:
    return frozenset((br.from_bus, br.to_bus))


# -- shared core -----------------------------------------------------------------

def build_shared(network: Network, name: str = "") -> tuple[ConicProblem, FormulationArtifacts]:
    """Generators, cost, voltage magnitudes, flow limits, KCL and shunt links."""
    prob = ConicProblem(name or network.name)
    art = FormulationArtifacts(network)
    art.objective_constant = network.objective_constant
    art.bounds = branch_bounds(network)

    for b in network.buses:
        art.w[b.id] = prob.add_variable(f"w({b.id})", b.vmin**2, b.vmax**2)

    cost = LinearExpr()
    for g in network.generators:
        art.pg[g.id] = prob.add_variable(f"pg({g.id})", g.pmin, g.pmax)
        art.qg[g.id] = prob.add_variable(f"qg({g.id})", g.qmin, g.qmax)
        before = prob.num_variables
        cost = cost + prob.epigraph_quadratic(g.c2, g.c1, art.pg[g.id])
        if prob.num_variables > before:
            art.cost_epigraph[g.id] = prob.variables[-1]
    prob.set_objective(cost)

    for br in network.branches:
        k = br.id
        art.s_series_fr[k] = prob.add_complex_pair(f"ss_fr({k})")
        art.s_series_to[k] = prob.add_complex_pair(f"ss_to({k})")
        art.s_total_fr[k] = prob.add_complex_pair(f"st_fr({k})")
        art.s_total_to[k] = prob.add_complex_pair(f"st_to({k})")
        t2 = abs(br.tap) ** 2
        wi = ComplexExpr.coerce(art.w[br.from_bus])
        wj = ComplexExpr.coerce(art.w[br.to_bus])
        prob.add_complex_linear_eq(
            ComplexExpr.coerce(art.s_total_fr[k]) - wi * (br.y_shunt_from.conjugate() / t2)
            - ComplexExpr.coerce(art.s_series_fr[k]),
            tag="shunt-link",
        )
        prob.add_complex_linear_eq(
            ComplexExpr.coerce(art.s_total_to[k]) - wj * br.y_shunt_to.conjugate()
            - ComplexExpr.coerce(art.s_series_to[k]),
            tag="shunt-link",
        )
        if br.s_max is not None:
            for p, q in (art.s_total_fr[k], art.s_total_to[k]):
                prob.add_rotated_cone([p, q], br.s_max, br.s_max, tag="flow-limit")

    balance = {b.id: ComplexExpr() for b in network.buses}
    for br in network.branches:
        balance[br.from_bus] = balance[br.from_bus] + ComplexExpr.coerce(art.s_total_fr[br.id])
        balance[br.to_bus] = balance[br.to_bus] + ComplexExpr.coerce(art.s_total_to[br.id])
    for b in network.buses:
        if b.bus_shunt != 0:
            balance[b.id] = balance[b.id] + ComplexExpr.coerce(art.w[b.id]) * b.bus_shunt.conjugate()
    for ld in network.loads:
        balance[ld.bus] = balance[ld.bus] + ld.s_d
    for g in network.generators:
        balance[g.bus] = balance[g.bus] - ComplexExpr(art.pg[g.id], art.qg[g.id])
    for b in network.buses:
        prob.add_complex_linear_eq(balance[b.id], tag="kcl")
    return prob, art


def _angle_rows(prob: ConicProblem, w: ComplexExpr, amin: float, amax: float, tag: str = "angle"):
    prob.add_le(w.re * math.tan(amin) - w.im, tag)
    prob.add_le(w.im - w.re * math.tan(amax), tag)


# -- canonical builders ----------------------------------------------------------

def _add_bim(prob: ConicProblem, art: FormulationArtifacts) -> None:
    net = art.network
    for i, j in connected_pairs(net.branches):
        vm = net.bus(i).vmax * net.bus(j).vmax
        wr, wi = prob.add_complex_pair(f"w({i},{j})", (-vm, vm), (-vm, vm))
        art.pair_vars[(i, j)] = (wr, wi)
        prob.add_rotated_cone([wr, wi], art.w[i], art.w[j], tag="wij-soc")
    pair_key = {frozenset(p): p for p in art.pair_vars}

    for br in net.branches:
        k = br.id
        key = pair_key[_pair_of(br)]
        wpair = ComplexExpr.coerce(art.pair_vars[key])
        w_ij = wpair if key[0] == br.from_bus else wpair.conj()
        art.w_ij[k] = w_ij
        art.w_ji[k] = w_ij.conj()

        t, t2 = br.tap, abs(br.tap) ** 2
        ys_c = br.y_series.conjugate()
        wi = ComplexExpr.coerce(art.w[br.from_bus])
        wj = ComplexExpr.coerce(art.w[br.to_bus])
        prob.add_complex_linear_eq(
            ComplexExpr.coerce(art.s_series_fr[k]) - (wi / t2 - w_ij / t) * ys_c, tag="series-flow"
        )
        prob.add_complex_linear_eq(
            ComplexExpr.coerce(art.s_series_to[k]) - (wj - w_ij.conj() / t.conjugate()) * ys_c,
            tag="series-flow",
        )
        # |I_s|^2 in the BIM variables; only used by the improved limits
        re_tw = (w_ij * t.conjugate()).re
        art.l_s[k] = (wi.re / t2 - re_tw * (2.0 / t2) + wj.re) * abs(br.y_series) ** 2
        _angle_rows(prob, w_ij, br.angle_min, br.angle_max)


def _add_bfm(prob: ConicProblem, art: FormulationArtifacts) -> None:
    for br in art.network.branches:
        k = br.id
        bound = art.bounds[k]
        L = prob.add_variable(f"l({k})", 0.0, bound.l_s_max if bound.finite else math.inf)
        art.l_var[k] = L
        art.l_s[k] = LinearExpr.of(L)

        t, t2 = br.tap, abs(br.tap) ** 2
        z = br.z_series
        sf = ComplexExpr.coerce(art.s_series_fr[k])
        st = ComplexExpr.coerce(art.s_series_to[k])
        wi = LinearExpr.of(art.w[br.from_bus])
        wj = LinearExpr.of(art.w[br.to_bus])

        prob.add_eq(wj - wi / t2 + (sf * z.conjugate()).re * 2.0 - LinearExpr.of(L, abs(z) ** 2), tag="ohm")
        prob.add_complex_linear_eq(sf + st - ComplexExpr.coerce(L) * z, tag="loss")
        prob.add_rotated_cone([sf.re, sf.im], wi / t2, L, tag="bfm-soc")

        w_ij = ComplexExpr.coerce(wi) * (t / t2) - sf * (z.conjugate() * t)
        w_ji = ComplexExpr.coerce(wj) * t.conjugate() - st * (z.conjugate() * t.conjugate())
        art.w_ij[k] = w_ij
        art.w_ji[k] = w_ji
        _angle_rows(prob, w_ij, br.angle_min, br.angle_max)
        _angle_rows(prob, w_ji.conj(), br.angle_min, br.angle_max)


def build_bim_canonical(network: Network) -> tuple[ConicProblem, FormulationArtifacts]:
    prob, art = build_shared(network)
    art.kind = FormulationKind.BIM_CANONICAL
    _add_bim(prob, art)
    return prob, art


def build_bfm_canonical(network: Network) -> tuple[ConicProblem, FormulationArtifacts]:
    prob, art = build_shared(network)
    art.kind = FormulationKind.BFM_CANONICAL
    _add_bfm(prob, art)
    return prob, art


# -- strengthening ---------------------------------------------------------------

def add_total_current_limits(prob: ConicProblem, art: FormulationArtifacts, network: Network) -> None:
    """Two rows per rated branch bounding the squared total current at each end."""
    for br in network.branches:
        if br.s_max is None:
            continue
        t2 = abs(br.tap) ** 2
        fr, to = art.total_current_sq(br.id)
        lim_fr = (br.s_max / network.bus(br.from_bus).vmin) ** 2
        lim_to = (br.s_max / network.bus(br.to_bus).vmin) ** 2
        # scaled by |T|^2 so the row reads L + ... <= |T|^2 (S/Umin)^2
        prob.add_le(fr * t2 - lim_fr * t2, tag="total-current")
        prob.add_le(to - lim_to, tag="total-current")


def add_parallel_links(prob: ConicProblem, art: FormulationArtifacts, network: Network) -> None:
    """Equal ``W_ij`` expressions across consecutive members of each parallel group.

    A member oriented against the group's first branch is linked through the
    conjugate of its expression; such groups are recorded in ``art.notes``.
    """
    for group in parallel_groups(network):
        if any(group.reversed):
            art.notes.append(f"antiparallel group {group.pair}: branches {list(group.branch_ids)} "
                             "linked through conjugated W_ij")
        oriented = [
            art.w_ij[bid].conj() if rev else art.w_ij[bid]
            for bid, rev in zip(group.branch_ids, group.reversed)
        ]
        for a, b in zip(oriented, oriented[1:]):
            prob.add_complex_linear_eq(a - b, tag="parallel-link")


def _lnc_rows(prob, wf, wt, w: ComplexExpr, vf, vt, amin, amax):
    vf_lb, vf_ub = vf
    vt_lb, vt_ub = vt
    phi = (amax + amin) / 2
    d = (amax - amin) / 2
    sf, st = vf_lb + vf_ub, vt_lb + vt_ub
    cd = math.cos(d)
    lhs = (w.re * math.cos(phi) + w.im * math.sin(phi)) * (sf * st)
    rhs_prod = vf_lb * vt_lb - vf_ub * vt_ub
    # expr >= const  <=>  const - expr <= 0
    e1 = lhs - wf * (vt_ub * cd * st) - wt * (vf_ub * cd * sf)
    prob.add_le(-e1 + vf_ub * vt_ub * cd * rhs_prod, tag="lnc")
    e2 = lhs - wf * (vt_lb * cd * st) - wt * (vf_lb * cd * sf)
    prob.add_le(-e2 - vf_lb * vt_lb * cd * rhs_prod, tag="lnc")


def add_lnc_cuts(prob: ConicProblem, art: FormulationArtifacts, network: Network) -> None:
    """Lifted nonlinear cuts on ``(W_i, W_j, W_ij)``.

    BIM: once per bus pair over the shared variables, using the intersection
    of the angle windows of its branches.  BFM: per branch over the ``W_ij``
    expression.
    """
    def bounds(bus_id):
        b = network.bus(bus_id)
        return b.vmin, b.vmax

    if art.pair_vars:
        windows: dict[tuple[int, int], tuple[float, float]] = {}
        key_of = {frozenset(p): p for p in art.pair_vars}
        for br in network.branches:
            key = key_of[_pair_of(br)]
            lo, hi = (br.angle_min, br.angle_max) if key[0] == br.from_bus else (-br.angle_max, -br.angle_min)
            old = windows.get(key, (-math.inf, math.inf))
            windows[key] = (max(old[0], lo), min(old[1], hi))
        for (i, j), (lo, hi) in windows.items():
            if lo > hi:
                continue
            w = ComplexExpr.coerce(art.pair_vars[(i, j)])
            _lnc_rows(prob, LinearExpr.of(art.w[i]), LinearExpr.of(art.w[j]), w, bounds(i), bounds(j), lo, hi)
    else:
        for br in network.branches:
            _lnc_rows(prob, LinearExpr.of(art.w[br.from_bus]), LinearExpr.of(art.w[br.to_bus]),
                      art.w_ij[br.id], bounds(br.from_bus), bounds(br.to_bus),
                      br.angle_min, br.angle_max)


def build(kind: FormulationKind | str, network: Network, cuts: bool = True) -> tuple[ConicProblem, FormulationArtifacts]:
    """Build and seal one of the four relaxations."""
    kind = FormulationKind(kind)
    if kind.model == "bim":
        prob, art = build_bim_canonical(network)
    else:
        prob, art = build_bfm_canonical(network)
    art.kind = kind
    art.cuts = cuts
    if kind.improved:
        add_total_current_limits(prob, art, network)
        if kind.model == "bfm":
            add_parallel_links(prob, art, network)
    if cuts:
        add_lnc_cuts(prob, art, network)
    prob.name = f"{network.name}:{kind}" if network.name else str(kind)
    return prob.seal(), art


# -- AC lift ---------------------------------------------------------------------

@dataclass
class LiftedPoint:
    """Every lifted quantity computed from bus voltages by circuit laws."""

    network: Network
    voltages: dict[int, complex]
    w: dict[int, float]
    w_ij: dict[int, complex]
    series_fr: dict[int, complex]
    series_to: dict[int, complex]
    total_fr: dict[int, complex]
    total_to: dict[int, complex]
    l_s: dict[int, float]
    gen: dict[int, complex]

    def assignment(self, problem: ConicProblem, art: FormulationArtifacts) -> np.ndarray:
        """Dense point for ``problem`` built with artifacts ``art``."""
        x = np.full(problem.num_variables, np.nan)

        def put(pair, z):
            x[pair[0].index] = z.real
            x[pair[1].index] = z.imag

        for b, v in art.w.items():
            x[v.index] = self.w[b]
        for (i, j), pair in art.pair_vars.items():
            put(pair, self.voltages[i] * self.voltages[j].conjugate())
        for k in art.s_series_fr:
            put(art.s_series_fr[k], self.series_fr[k])
            put(art.s_series_to[k], self.series_to[k])
            put(art.s_total_fr[k], self.total_fr[k])
            put(art.s_total_to[k], self.total_to[k])
        for k, v in art.l_var.items():
            x[v.index] = self.l_s[k]
        for g, v in art.pg.items():
            x[v.index] = self.gen[g].real
            x[art.qg[g].index] = self.gen[g].imag
        for g, v in art.cost_epigraph.items():
            x[v.index] = self.gen[g].real ** 2
        return x


def lift_ac_point(network: Network, voltages: Mapping[int, complex]) -> LiftedPoint:
    """Lift complex bus voltages to the relaxation variables.

    Generator output at each bus covers the net injection, split evenly
    between the generators there.
    """
    U = {b.id: complex(voltages[b.id]) for b in network.buses}
    w = {i: abs(u) ** 2 for i, u in U.items()}
    w_ij, sf, st, tf, tt, ls = {}, {}, {}, {}, {}, {}
    inj = {i: 0j for i in U}
    for br in network.branches:
        k = br.id
        ui, uj = U[br.from_bus], U[br.to_bus]
        t = br.tap
        i_s = br.y_series * (ui / t - uj)
        i_sh_fr = br.y_shunt_from * ui / t
        i_sh_to = br.y_shunt_to * uj
        sf[k] = (ui / t) * i_s.conjugate()
        st[k] = uj * (-i_s).conjugate()
        tf[k] = (ui / t) * (i_s + i_sh_fr).conjugate()
        tt[k] = uj * (-i_s + i_sh_to).conjugate()
        ls[k] = abs(i_s) ** 2
        w_ij[k] = ui * uj.conjugate()
        inj[br.from_bus] += tf[k]
        inj[br.to_bus] += tt[k]
    for b in network.buses:
        inj[b.id] += b.bus_shunt.conjugate() * w[b.id]
    for ld in network.loads:
        inj[ld.bus] += ld.s_d
    at_bus: dict[int, list[int]] = {}
    for g in network.generators:
        at_bus.setdefault(g.bus, []).append(g.id)
    gen = {}
    for bus, ids in at_bus.items():
        for g in ids:
            gen[g] = inj[bus] / len(ids)
    return LiftedPoint(network, U, w, w_ij, sf, st, tf, tt, ls, gen)
