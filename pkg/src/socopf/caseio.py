"""MATPOWER case files: parsing, conversion to :class:`Network`, writing.

Only the numeric subset is understood: ``mpc.baseMVA = <number>;`` and
bracketed matrices ``mpc.<name> = [ ... ];``.  Other assignments (strings,
cell arrays, function headers) are skipped.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .netmodel import Branch, Bus, Generator, Load, Network, clamp_angles

log = logging.getLogger(__name__)

BUS_COLUMNS = ("BUS_I", "BUS_TYPE", "PD", "QD", "GS", "BS", "BUS_AREA", "VM", "VA",
               "BASE_KV", "ZONE", "VMAX", "VMIN")
GEN_COLUMNS = ("GEN_BUS", "PG", "QG", "QMAX", "QMIN", "VG", "MBASE", "GEN_STATUS",
               "PMAX", "PMIN")
BRANCH_COLUMNS = ("F_BUS", "T_BUS", "BR_R", "BR_X", "BR_B", "RATE_A", "RATE_B", "RATE_C",
                  "TAP", "SHIFT", "BR_STATUS", "ANGMIN", "ANGMAX")
GENCOST_COLUMNS = ("MODEL", "STARTUP", "SHUTDOWN", "NCOST")
BRANCH_SHUNT_COLUMNS = ("F_BUS", "T_BUS", "G_FR", "B_FR", "G_TO", "B_TO")

COLUMNS = {
    "bus": BUS_COLUMNS,
    "gen": GEN_COLUMNS,
    "branch": BRANCH_COLUMNS,
    "gencost": GENCOST_COLUMNS,
    "branch_shunt": BRANCH_SHUNT_COLUMNS,
}
# ANGMIN/ANGMAX are optional in old files
MIN_WIDTH = {"bus": 13, "gen": 10, "branch": 11, "gencost": 4, "branch_shunt": 6}
REQUIRED = ("bus", "gen", "branch", "gencost")

FIXTURES = ("case2_parallel", "case2_gap")

REPORT_FIELDS = ("case", "formulation", "status", "objective", "ac_objective",
                 "gap_percent", "time_s", "iterations")


class ParseError(ValueError):
    """Malformed case text; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class CaseError(ValueError):
    """Case parsed but cannot be turned into a network."""


@dataclass
class RawCase:
    """Numeric tables of a case file in MATPOWER column order."""

    base_mva: float
    bus: np.ndarray
    gen: np.ndarray
    branch: np.ndarray
    gencost: np.ndarray
    name: str = ""
    extra: dict[str, np.ndarray] = field(default_factory=dict)

    def table(self, name: str) -> np.ndarray:
        if name in REQUIRED:
            return getattr(self, name)
        return self.extra[name]

    def column(self, table: str, col: str) -> np.ndarray:
        """Column ``col`` (e.g. ``"VMAX"``) of ``table`` (e.g. ``"bus"``)."""
        m = self.table(table)
        k = COLUMNS[table].index(col)
        if k >= m.shape[1]:
            raise KeyError(f"{table} has no column {col}")
        return m[:, k]

    def __eq__(self, other):
        if not isinstance(other, RawCase):
            return NotImplemented
        return (
            self.base_mva == other.base_mva
            and self.name == other.name
            and all(np.array_equal(self.table(t), other.table(t)) for t in REQUIRED)
            and self.extra.keys() == other.extra.keys()
            and all(np.array_equal(v, other.extra[k]) for k, v in self.extra.items())
        )


# -- parsing -----------------------------------------------------------------

_ASSIGN = re.compile(r"\bmpc\.(\w+)\s*=\s*")
_FUNC = re.compile(r"^\s*function\s+\w+\s*=\s*(\w+)", re.M)
_NUMBER = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$|^[+-]?(Inf|inf|NaN|nan)$")


def _strip_comments(text: str) -> str:
    """Blank out ``%`` comments, keeping quoted strings and line structure."""
    out = []
    for line in text.splitlines():
        quote = False
        cut = len(line)
        for k, ch in enumerate(line):
            if ch == "'":
                quote = not quote
            elif ch == "%" and not quote:
                cut = k
                break
        out.append(line[:cut])
    return "\n".join(out)


def _line_of(text: str, pos: int) -> int:
    return text.count("\n", 0, pos) + 1


def _matching(text: str, start: int, open_ch: str, close_ch: str) -> int:
    depth = 0
    for k in range(start, len(text)):
        ch = text[k]
        if ch == open_ch:
            depth += 1
        elif ch == close_ch:
            depth -= 1
            if depth == 0:
                return k
    raise ParseError(f"unterminated '{open_ch}'", _line_of(text, start))


def _parse_matrix(text: str, start: int, end: int, name: str) -> np.ndarray:
    rows: list[list[float]] = []
    body = text[start:end]
    line0 = _line_of(text, start)
    for k, line in enumerate(body.split("\n")):
        for chunk in line.split(";"):
            tokens = chunk.replace(",", " ").split()
            if not tokens:
                continue
            row = []
            for tok in tokens:
                if not _NUMBER.match(tok):
                    raise ParseError(f"non-numeric token {tok!r} in mpc.{name}", line0 + k)
                row.append(float(tok))
            rows.append(row)
    if not rows:
        return np.zeros((0, MIN_WIDTH.get(name, 0)))
    width = len(rows[0])
    for r in rows:
        if len(r) != width:
            raise ParseError(f"ragged rows in mpc.{name} ({len(r)} vs {width} columns)", line0)
    return np.array(rows, dtype=float)


def parse_matpower(text: str) -> RawCase:
    """Read the numeric tables of a MATPOWER ``.m`` case."""
    clean = _strip_comments(text)
    m = _FUNC.search(clean)
    name = m.group(1) if m else ""
    found: dict[str, np.ndarray] = {}
    base = None
    pos = 0
    while True:
        m = _ASSIGN.search(clean, pos)
        if m is None:
            break
        key, vstart = m.group(1), m.end()
        line = _line_of(clean, m.start())
        ch = clean[vstart: vstart + 1]
        if ch == "[":
            close = _matching(clean, vstart, "[", "]")
            found[key] = _parse_matrix(clean, vstart + 1, close, key)
            pos = close + 1
        elif ch == "{":
            pos = _matching(clean, vstart, "{", "}") + 1
        else:
            semi = clean.find(";", vstart)
            stop = semi if semi >= 0 else clean.find("\n", vstart)
            stop = len(clean) if stop < 0 else stop
            value = clean[vstart:stop].strip()
            if key == "baseMVA":
                if not _NUMBER.match(value):
                    raise ParseError(f"baseMVA is not a number: {value!r}", line)
                base = float(value)
            pos = stop + 1

    if base is None:
        raise ParseError("missing mpc.baseMVA", _line_of(clean, len(clean)))
    for key in REQUIRED:
        if key not in found:
            raise ParseError(f"missing mpc.{key}", _line_of(clean, len(clean)))
    for key, mat in found.items():
        need = MIN_WIDTH.get(key)
        if need and mat.shape[0] and mat.shape[1] < need:
            raise ParseError(f"mpc.{key} has {mat.shape[1]} columns, need at least {need}")
    extra = {k: v for k, v in found.items() if k not in REQUIRED}
    return RawCase(base, found["bus"], found["gen"], found["branch"], found["gencost"], name, extra)


# -- conversion ----------------------------------------------------------------

def _cost(row: np.ndarray, base: float, k: int) -> tuple[float, float, float]:
    model, n = int(row[0]), int(row[3])
    if model != 2:
        raise CaseError(f"gencost row {k}: only polynomial costs (model 2) are supported, got model {model}")
    coeffs = row[4: 4 + n]
    if len(coeffs) < n:
        raise CaseError(f"gencost row {k}: expected {n} coefficients")
    coeffs = coeffs[::-1]  # c0, c1, c2, ...
    if np.any(coeffs[3:] != 0):
        raise CaseError(f"gencost row {k}: polynomial degree above 2")
    c = np.zeros(3)
    c[: min(3, n)] = coeffs[:3]
    return float(c[2] * base**2), float(c[1] * base), float(c[0])


def to_network(raw: RawCase) -> Network:
    """Per-unit network from raw tables; out-of-service rows are dropped."""
    base = raw.base_mva
    if not base > 0:
        raise CaseError("baseMVA must be positive")
    col = raw.column

    ids = col("bus", "BUS_I").astype(int)
    pd, qd = col("bus", "PD"), col("bus", "QD")
    gs, bs = col("bus", "GS"), col("bus", "BS")
    buses = [
        Bus(int(i), float(lo), float(hi), complex(g, b) / base)
        for i, lo, hi, g, b in zip(ids, col("bus", "VMIN"), col("bus", "VMAX"), gs, bs)
    ]
    known = set(ids.tolist())
    loads = [
        Load(k + 1, int(i), complex(p, q) / base)
        for k, (i, p, q) in enumerate((i, p, q) for i, p, q in zip(ids, pd, qd) if p != 0 or q != 0)
    ]

    gens = []
    if raw.gen.shape[0] and raw.gencost.shape[0] < raw.gen.shape[0]:
        raise CaseError(f"gencost has {raw.gencost.shape[0]} rows for {raw.gen.shape[0]} generators")
    for k, row in enumerate(raw.gen):
        bus = int(row[0])
        if bus not in known:
            raise CaseError(f"gen row {k + 1}: unknown bus {bus}")
        if row[7] <= 0:
            continue
        c2, c1, c0 = _cost(raw.gencost[k], base, k + 1)
        gens.append(Generator(k + 1, bus, row[9] / base, row[8] / base, row[4] / base,
                              row[3] / base, c1, c2, c0))

    shunt_ext = raw.extra.get("branch_shunt")
    if shunt_ext is not None and shunt_ext.shape[0] != raw.branch.shape[0]:
        raise CaseError("branch_shunt must have one row per branch row")
    branches = []
    clamped_rows: list[int] = []
    for k, row in enumerate(raw.branch):
        f, t = int(row[0]), int(row[1])
        for b in (f, t):
            if b not in known:
                raise CaseError(f"branch row {k + 1}: unknown bus {b}")
        if row[10] <= 0:
            continue
        z = complex(row[2], row[3])
        if shunt_ext is not None:
            ext = shunt_ext[k]
            if int(ext[0]) != f or int(ext[1]) != t:
                raise CaseError(f"branch_shunt row {k + 1} does not match branch {f}-{t}")
            y_fr, y_to = complex(ext[2], ext[3]), complex(ext[4], ext[5])
        else:
            y_fr = y_to = complex(0.0, row[4] / 2)
        ratio = row[8] if row[8] != 0 else 1.0
        tap = ratio * complex(math.cos(math.radians(row[9])), math.sin(math.radians(row[9])))
        s_max = row[5] / base if row[5] > 0 else None
        if raw.branch.shape[1] > 12 and not (row[11] == 0 and row[12] == 0):
            amin, amax = math.radians(row[11]), math.radians(row[12])
        else:
            amin, amax = -math.inf, math.inf
        lo, hi, clamped = clamp_angles(amin, amax)
        if clamped:
            clamped_rows.append(k + 1)
        branches.append(Branch(k + 1, f, t, z, y_fr, y_to, tap, s_max, lo, hi))

    if clamped_rows:
        log.warning("%s: angle limits of %d branch(es) clamped to +/-45 degrees (rows %s%s)",
                    raw.name or "case", len(clamped_rows), ", ".join(map(str, clamped_rows[:5])),
                    ", ..." if len(clamped_rows) > 5 else "")
    return Network(base, buses, branches, gens, loads, raw.name)


def load_case(path) -> Network:
    return to_network(parse_matpower(Path(path).read_text()))


# -- writing -------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def _matrix(name: str, rows: Iterable[Iterable[float]]) -> str:
    body = "".join("\t" + "\t".join(_fmt(v) for v in r) + ";\n" for r in rows)
    return f"mpc.{name} = [\n{body}];\n"


def render_matpower(network: Network) -> str:
    """Write ``network`` as case text; inverse of parse + to_network.

    Shunts that are not a symmetric pure susceptance go to ``mpc.branch_shunt``.
    """
    base = network.base_mva
    load_at: dict[int, complex] = {}
    for ld in network.loads:
        load_at[ld.bus] = load_at.get(ld.bus, 0j) + ld.s_d
    gen_buses = {g.bus for g in network.generators}
    bus_rows = []
    for k, b in enumerate(network.buses):
        kind = 3 if k == 0 else (2 if b.id in gen_buses else 1)
        s = load_at.get(b.id, 0j) * base
        y = b.bus_shunt * base
        bus_rows.append([b.id, kind, s.real, s.imag, y.real, y.imag, 1, 1, 0, 1, 1, b.vmax, b.vmin])
    gen_rows, cost_rows = [], []
    for g in network.generators:
        gen_rows.append([g.bus, 0, 0, g.qmax * base, g.qmin * base, 1, base, 1, g.pmax * base, g.pmin * base])
        cost_rows.append([2, 0, 0, 3, g.c2 / base**2, g.c1 / base, g.c0])
    branch_rows, shunt_rows = [], []
    symmetric = all(
        br.y_shunt_from == br.y_shunt_to and br.y_shunt_from.real == 0 for br in network.branches
    )
    for br in network.branches:
        ratio = abs(br.tap)
        shift = math.degrees(math.atan2(br.tap.imag, br.tap.real))
        rate = br.s_max * base if br.s_max is not None else 0
        b = 2 * br.y_shunt_from.imag if symmetric else 0.0
        branch_rows.append([br.from_bus, br.to_bus, br.z_series.real, br.z_series.imag, b,
                            rate, rate, rate, ratio, shift, 1,
                            math.degrees(br.angle_min), math.degrees(br.angle_max)])
        shunt_rows.append([br.from_bus, br.to_bus, br.y_shunt_from.real, br.y_shunt_from.imag,
                           br.y_shunt_to.real, br.y_shunt_to.imag])
    name = network.name or "case"
    parts = [
        f"function mpc = {name}\n",
        "mpc.version = '2';\n",
        f"mpc.baseMVA = {_fmt(base)};\n",
        _matrix("bus", bus_rows),
        _matrix("gen", gen_rows),
        _matrix("branch", branch_rows),
        _matrix("gencost", cost_rows),
    ]
    if not symmetric:
        parts.append(_matrix("branch_shunt", shunt_rows))
    return "".join(parts)


# -- fixtures ------------------------------------------------------------------

def fixture_text(name: str) -> str:
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; choose from {', '.join(FIXTURES)}")
    return resources.files("socopf.data").joinpath(f"{name}.m").read_text()


def fixture(name: str) -> Network:
    """One of the bundled two-bus networks, ``case2_parallel`` or ``case2_gap``."""
    return to_network(parse_matpower(fixture_text(name)))


def fixture_ac_objectives() -> dict[str, float]:
    """Published AC upper bounds of the bundled fixtures."""
    text = resources.files("socopf.data").joinpath("ac_objectives.json").read_text()
    return {k: float(v) for k, v in json.loads(text).items()}


def load_manifest(path) -> dict[str, float]:
    """Flat JSON object mapping case basename to AC objective."""
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise CaseError(f"{path}: manifest must be a JSON object")
    return {str(k): float(v) for k, v in data.items()}


# -- reports -------------------------------------------------------------------

def _row(report) -> dict:
    d = report if isinstance(report, Mapping) else report.as_dict()
    return {k: d.get(k) for k in REPORT_FIELDS}


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def reports_to_json(reports) -> str:
    rows = [{k: _json_value(v) for k, v in _row(r).items()} for r in reports]
    return json.dumps(rows, indent=2) + "\n"


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=REPORT_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow({k: ("" if v is None else v) for k, v in _row(r).items()})
    return buf.getvalue()
