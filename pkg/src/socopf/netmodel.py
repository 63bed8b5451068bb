"""Per-unit network model: buses, Pi-section branches, generators and loads.

Everything here is immutable once built.  Bounds implied by the data (series
current limits derived from apparent-power ratings) are computed on demand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

ANGLE_LIMIT = math.pi / 4


@dataclass(frozen=True)
class Bus:
    """A network node with voltage magnitude bounds in p.u.

    ``bus_shunt`` is the fixed shunt admittance ``gs + j*bs``.
    """

    id: int
    vmin: float
    vmax: float
    bus_shunt: complex = 0j


@dataclass(frozen=True)
class Branch:
    """Pi-section with an ideal transformer on the from side.

    Attributes
    ----------
    z_series : complex
        Series impedance.
    y_shunt_from, y_shunt_to : complex
        Shunt admittances; may differ and may be conductive.
    tap : complex
        Complex ratio ``|T| * exp(j*shift)``.
    s_max : float or None
        Apparent power rating; ``None`` means unlimited.
    angle_min, angle_max : float
        Bounds on the angle difference in radians.
    """

    id: int
    from_bus: int
    to_bus: int
    z_series: complex
    y_shunt_from: complex = 0j
    y_shunt_to: complex = 0j
    tap: complex = 1 + 0j
    s_max: float | None = None
    angle_min: float = -ANGLE_LIMIT
    angle_max: float = ANGLE_LIMIT

    @property
    def y_series(self) -> complex:
        return 1 / self.z_series


@dataclass(frozen=True)
class Generator:
    id: int
    bus: int
    pmin: float
    pmax: float
    qmin: float
    qmax: float
    c1: float = 0.0
    c2: float = 0.0
    c0: float = 0.0


@dataclass(frozen=True)
class Load:
    id: int
    bus: int
    s_d: complex


@dataclass(frozen=True)
class Network:
    base_mva: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...] = ()
    generators: tuple[Generator, ...] = ()
    loads: tuple[Load, ...] = ()
    name: str = ""
    _bus_index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        for attr in ("buses", "branches", "generators", "loads"):
            object.__setattr__(self, attr, tuple(getattr(self, attr)))
        object.__setattr__(
            self, "_bus_index", {b.id: k for k, b in enumerate(self.buses)}
        )

    def bus(self, bus_id: int) -> Bus:
        return self.buses[self._bus_index[bus_id]]

    def bus_position(self, bus_id: int) -> int:
        """Position of ``bus_id`` in ``buses``."""
        return self._bus_index[bus_id]

    @property
    def objective_constant(self) -> float:
        return sum(g.c0 for g in self.generators)


@dataclass(frozen=True)
class Violation:
    entity: str
    id: int
    rule: str

    def __str__(self):
        return f"{self.entity} {self.id}: {self.rule}"


@dataclass(frozen=True)
class ParallelGroup:
    """Branches sharing an unordered bus pair.

    ``pair`` is the canonical ``(i, j)`` orientation, taken from the first
    member; ``reversed[k]`` is True when ``branch_ids[k]`` runs ``j -> i``.
    """

    pair: tuple[int, int]
    branch_ids: tuple[int, ...]
    reversed: tuple[bool, ...]

    def __len__(self):
        return len(self.branch_ids)


@dataclass(frozen=True)
class SeriesCurrentBound:
    """Current limits implied by an apparent-power rating (all in p.u.)."""

    i_tot_from_max: float
    i_tot_to_max: float
    i_sh_from_max: float
    i_sh_to_max: float
    i_s_max: float
    l_s_max: float

    @property
    def finite(self) -> bool:
        return math.isfinite(self.i_s_max)

    @classmethod
    def unbounded(cls) -> "SeriesCurrentBound":
        inf = math.inf
        return cls(inf, inf, inf, inf, inf, inf)


def validate(network: Network) -> list[Violation]:
    """Return every broken invariant of ``network``; empty when consistent."""
    out: list[Violation] = []
    if not network.buses:
        out.append(Violation("network", 0, "no buses"))
    if not network.base_mva > 0:
        out.append(Violation("network", 0, "base_mva must be positive"))

    seen = set()
    for b in network.buses:
        if b.id in seen:
            out.append(Violation("bus", b.id, "duplicate id"))
        seen.add(b.id)
        if not b.vmin > 0:
            out.append(Violation("bus", b.id, "vmin must be positive"))
        if b.vmin > b.vmax:
            out.append(Violation("bus", b.id, "vmin exceeds vmax"))

    def dangling(kind, obj, bus_id):
        if bus_id not in seen:
            out.append(Violation(kind, obj.id, f"unknown bus {bus_id}"))
            return True
        return False

    ids = set()
    for br in network.branches:
        if br.id in ids:
            out.append(Violation("branch", br.id, "duplicate id"))
        ids.add(br.id)
        dangling("branch", br, br.from_bus)
        dangling("branch", br, br.to_bus)
        if br.from_bus == br.to_bus:
            out.append(Violation("branch", br.id, "from_bus equals to_bus"))
        if br.z_series == 0:
            out.append(Violation("branch", br.id, "zero series impedance"))
        if abs(br.tap) == 0:
            out.append(Violation("branch", br.id, "zero tap magnitude"))
        if br.s_max is not None and br.s_max < 0:
            out.append(Violation("branch", br.id, "negative s_max"))
        if br.angle_min > br.angle_max:
            out.append(Violation("branch", br.id, "angle_min exceeds angle_max"))
        if br.angle_min < -ANGLE_LIMIT - 1e-12 or br.angle_max > ANGLE_LIMIT + 1e-12:
            out.append(Violation("branch", br.id, "angle bounds outside +-pi/4"))

    ids = set()
    for g in network.generators:
        if g.id in ids:
            out.append(Violation("generator", g.id, "duplicate id"))
        ids.add(g.id)
        dangling("generator", g, g.bus)
        if g.pmin > g.pmax:
            out.append(Violation("generator", g.id, "pmin exceeds pmax"))
        if g.qmin > g.qmax:
            out.append(Violation("generator", g.id, "qmin exceeds qmax"))
        if g.c2 < 0:
            out.append(Violation("generator", g.id, "negative quadratic cost"))

    for d in network.loads:
        dangling("load", d, d.bus)
    return out


def parallel_groups(network: Network) -> list[ParallelGroup]:
    """Group branches by unordered bus pair, omitting singletons."""
    groups: dict[frozenset, list[Branch]] = {}
    for br in network.branches:
        groups.setdefault(frozenset((br.from_bus, br.to_bus)), []).append(br)
    out = []
    for members in groups.values():
        if len(members) < 2:
            continue
        pair = (members[0].from_bus, members[0].to_bus)
        out.append(
            ParallelGroup(
                pair=pair,
                branch_ids=tuple(b.id for b in members),
                reversed=tuple(b.from_bus != pair[0] for b in members),
            )
        )
    return out


def series_current_bound(branch: Branch, from_bus: Bus, to_bus: Bus) -> SeriesCurrentBound:
    """Bound the series current of ``branch`` from its apparent-power rating.

    The total current at each terminal is at most ``s_max / vmin``; the shunt
    current at most ``|Y_sh| * vmax`` (divided by ``|T|`` on the from side).
    The series current is bounded by the sum of both at the tighter end.
    """
    if branch.s_max is None:
        return SeriesCurrentBound.unbounded()
    if from_bus.vmin <= 0 or to_bus.vmin <= 0:
        raise ValueError(f"branch {branch.id}: vmin must be positive to bound current")
    t = abs(branch.tap)
    i_tot_fr = branch.s_max / from_bus.vmin
    i_tot_to = branch.s_max / to_bus.vmin
    i_sh_fr = abs(branch.y_shunt_from) * from_bus.vmax / t
    i_sh_to = abs(branch.y_shunt_to) * to_bus.vmax
    i_s = min(t * i_tot_fr + i_sh_fr, i_tot_to + i_sh_to)
    return SeriesCurrentBound(i_tot_fr, i_tot_to, i_sh_fr, i_sh_to, i_s, i_s * i_s)


def branch_bounds(network: Network) -> dict[int, SeriesCurrentBound]:
    return {
        br.id: series_current_bound(br, network.bus(br.from_bus), network.bus(br.to_bus))
        for br in network.branches
    }


def clamp_angles(angle_min: float, angle_max: float) -> tuple[float, float, bool]:
    """Clamp an angle-difference window to +-pi/4; the flag reports clamping."""
    lo = max(angle_min, -ANGLE_LIMIT)
    hi = min(angle_max, ANGLE_LIMIT)
    return lo, hi, (lo != angle_min or hi != angle_max)


def connected_pairs(branches: Iterable[Branch]) -> list[tuple[int, int]]:
    """Distinct bus pairs in first-seen orientation."""
    seen: dict[frozenset, tuple[int, int]] = {}
    for br in branches:
        seen.setdefault(frozenset((br.from_bus, br.to_bus)), (br.from_bus, br.to_bus))
    return list(seen.values())


def is_radial(network: Network) -> bool:
    """True when the network graph is a forest with no parallel branches."""
    parent = {b.id: b.id for b in network.buses}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for br in network.branches:
        ra, rb = find(br.from_bus), find(br.to_bus)
        if ra == rb:
            return False
        parent[ra] = rb
    return True
