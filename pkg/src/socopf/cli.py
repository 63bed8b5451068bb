"""Command-line front end.

    socopf solve CASE [--form F] [--cuts on|off] [--ac-obj X] [--currents]
    socopf suite DIR  [--form F] [--manifest FILE] [--workers N]
    socopf currents CASE [--form F]

``CASE`` is a path to a MATPOWER file or the name of a bundled fixture.
Exit codes: 0 success, 1 usage, 2 parse error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import random
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .caseio import (FIXTURES, CaseError, ParseError, fixture, fixture_ac_objectives, load_case,
                     load_manifest, parse_matpower, reports_to_csv, reports_to_json)
from .formulations import FormulationKind, build
from .netmodel import Network
from .solver import SolverSettings, Status, solve

log = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_SOLVER = 0, 1, 2, 3
SIDECAR = "ac_objectives.json"
ALL_FORMS = tuple(FormulationKind)


@dataclass
class GapReport:
    case: str
    formulation: str
    status: str
    objective: float
    ac_objective: float | None
    gap_percent: float | None
    time_s: float | None
    iterations: int
    build_time_s: float | None = None
    cuts: bool = True

    @property
    def ok(self) -> bool:
        return self.status in (Status.OPTIMAL.value, Status.ALMOST_OPTIMAL.value)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class CurrentReport:
    case: str
    formulation: str
    branch: int
    from_bus: int
    to_bus: int
    i_from: float
    i_to: float
    limit_from: float | None
    limit_to: float | None

    def as_dict(self) -> dict:
        return asdict(self)


def gap_percent(ac: float | None, soc: float) -> float | None:
    """Relative gap ``100 (ac - soc) / ac``; exceeds 100 when ``soc < 0 < ac``."""
    if ac is None or ac == 0 or not math.isfinite(soc):
        return None
    return 100.0 * (ac - soc) / ac


# -- case and AC-objective lookup ---------------------------------------------

def case_name(case) -> str:
    if isinstance(case, Network):
        return case.name or "case"
    p = Path(case)
    return p.stem if p.suffix == ".m" or p.exists() else str(case)


def resolve_case(case) -> Network:
    """Network from a Network, a path, or a fixture name."""
    if isinstance(case, Network):
        return case
    p = Path(case)
    if p.exists():
        return load_case(p)
    if str(case) in FIXTURES:
        return fixture(str(case))
    raise FileNotFoundError(f"no such case file or fixture: {case}")


def _keys(name: str):
    yield name
    for prefix in ("pglib_opf_case", "pglib_opf_", "case"):
        if name.startswith(prefix):
            yield name[len(prefix):]


def lookup_ac(name: str, manifest: dict[str, float] | None = None, directory: Path | None = None):
    """AC objective from a manifest, a sidecar next to the case, or the fixtures."""
    sources = []
    if manifest:
        sources.append(manifest)
    if directory is not None and (directory / SIDECAR).is_file():
        sources.append(load_manifest(directory / SIDECAR))
    sources.append(fixture_ac_objectives())
    for src in sources:
        for key in _keys(name):
            if key in src:
                return src[key]
    return None


# -- operations -----------------------------------------------------------------

def _settings(tol: float, max_iters: int) -> SolverSettings:
    return SolverSettings(feas_tol=tol, gap_tol=tol, max_iters=max_iters)


def solve_case(network: Network, form, cuts: bool = True, settings: SolverSettings | None = None):
    """Build and solve; returns ``(solution, artifacts, build_time)``."""
    t0 = time.perf_counter()
    prob, art = build(form, network, cuts=cuts)
    build_time = time.perf_counter() - t0
    for note in art.notes:
        log.warning("%s: %s", network.name or "case", note)
    return solve(prob, settings), art, build_time


def run_case(case, form="bim-canonical", *, cuts: bool = True, ac_objective: float | None = None,
             manifest: dict[str, float] | None = None, settings: SolverSettings | None = None,
             timing: bool = True) -> GapReport:
    """Solve one case in one formulation and compare against the AC objective."""
    kind = FormulationKind(form)
    network = resolve_case(case)
    name = case_name(case)
    if ac_objective is None:
        directory = None if isinstance(case, Network) else Path(case).parent
        ac_objective = lookup_ac(name, manifest, directory)
    sol, art, build_time = solve_case(network, kind, cuts, settings)
    obj = sol.objective + art.objective_constant if sol.status.solved else sol.objective
    return GapReport(
        case=name,
        formulation=kind.value,
        status=sol.status.value,
        objective=float(obj),
        ac_objective=ac_objective,
        gap_percent=gap_percent(ac_objective, obj) if sol.status.solved else None,
        time_s=round(sol.solve_time, 4) if timing else None,
        iterations=sol.iterations,
        build_time_s=round(build_time, 4) if timing else None,
        cuts=cuts,
    )


def report_currents(case, form="bim-canonical", *, cuts: bool = True,
                    settings: SolverSettings | None = None) -> list[CurrentReport]:
    """Total current magnitudes at both ends of each branch at the optimum.

    Alongside each value is the limit implied by the rating and the minimum
    voltage at that end (``None`` for unrated branches).
    """
    kind = FormulationKind(form)
    network = resolve_case(case)
    sol, art, _ = solve_case(network, kind, cuts, settings)
    if not sol.status.solved:
        raise RuntimeError(f"solve ended with status {sol.status}")
    out = []
    for br in network.branches:
        fr, to = art.total_current_sq(br.id)
        i_fr = math.sqrt(max(fr.evaluate(sol.primal), 0.0))
        i_to = math.sqrt(max(to.evaluate(sol.primal), 0.0))
        lim_fr = lim_to = None
        if br.s_max is not None:
            lim_fr = br.s_max / network.bus(br.from_bus).vmin
            lim_to = br.s_max / network.bus(br.to_bus).vmin
        out.append(CurrentReport(case_name(case), kind.value, br.id, br.from_bus, br.to_bus,
                                 i_fr, i_to, lim_fr, lim_to))
    return out


def _case_size(path: Path) -> tuple[int, str]:
    try:
        return parse_matpower(path.read_text()).bus.shape[0], path.name
    except (ParseError, OSError):
        return sys.maxsize, path.name


def _suite_job(args) -> list[GapReport]:
    path, forms, cuts, ac, settings, timing = args
    name = path.stem
    try:
        network = load_case(path)
    except (ParseError, CaseError, OSError) as exc:
        log.error("%s: %s", path.name, exc)
        return [GapReport(name, str(f), "ParseError", math.nan, ac, None, None, 0, None, cuts) for f in forms]
    reports = []
    for f in forms:
        try:
            rep = run_case(network, f, cuts=cuts, ac_objective=ac, settings=settings, timing=timing)
            rep.case = name
        except Exception as exc:  # isolate per case; the suite continues
            log.error("%s %s: %s", path.name, f, exc)
            rep = GapReport(name, str(f), "Error", math.nan, ac, None, None, 0, None, cuts)
        reports.append(rep)
    return reports


def run_suite(directory, forms=ALL_FORMS, *, cuts: bool = True, manifest: dict[str, float] | None = None,
              settings: SolverSettings | None = None, workers: int = 1, timing: bool = True) -> list[GapReport]:
    """Every ``.m`` file in ``directory``, smallest case first."""
    directory = Path(directory)
    paths = sorted(directory.glob("*.m"), key=_case_size)
    if not paths:
        raise FileNotFoundError(f"no .m case files in {directory}")
    forms = [FormulationKind(f) for f in forms]
    jobs = [(p, forms, cuts, lookup_ac(p.stem, manifest, directory), settings, timing) for p in paths]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_suite_job, jobs))
    else:
        results = [_suite_job(j) for j in jobs]
    return [r for batch in results for r in batch]


# -- output ---------------------------------------------------------------------------

def _cell(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6g}"
    return str(v)


def format_table(rows, fields) -> str:
    cells = [[_cell(r.get(f)) for f in fields] for r in rows]
    widths = [max([len(f)] + [len(c[k]) for c in cells]) for k, f in enumerate(fields)]
    lines = ["  ".join(f.ljust(w) for f, w in zip(fields, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in cells]
    return "\n".join(lines) + "\n"


def render(reports, fmt: str) -> str:
    rows = [r.as_dict() for r in reports]
    if reports and isinstance(reports[0], CurrentReport):
        fields = list(rows[0])
        if fmt == "json":
            import json
            return json.dumps(rows, indent=2) + "\n"
        if fmt == "csv":
            import csv
            import io
            buf = io.StringIO()
            w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
            w.writeheader()
            w.writerows({k: ("" if v is None else v) for k, v in r.items()} for r in rows)
            return buf.getvalue()
        return format_table(rows, fields)
    if fmt == "json":
        return reports_to_json(reports)
    if fmt == "csv":
        return reports_to_csv(reports)
    return format_table(rows, ["case", "formulation", "status", "objective", "ac_objective",
                               "gap_percent", "time_s", "iterations"])


# -- argument parsing ----------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--form", default="all",
                        choices=[f.value for f in FormulationKind] + ["all"],
                        help="relaxation to build (default: all)")
    common.add_argument("--cuts", choices=["on", "off"], default="on",
                        help="lifted nonlinear cuts on the voltage products (default: on)")
    common.add_argument("--output", choices=["json", "csv", "table"], default="table")
    common.add_argument("--tol", type=_positive_float, default=1e-8,
                        help="feasibility and relative gap tolerance")
    common.add_argument("--max-iters", type=_positive_int, default=200)
    common.add_argument("--seed", type=int, default=0,
                        help="seed for any randomized step; solves are deterministic")
    common.add_argument("--no-time", action="store_true",
                        help="omit timings so reports are byte-stable")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = _Parser(prog="socopf", description="Second-order cone relaxations of AC optimal power flow.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", parents=[common], help="solve one case")
    p.add_argument("case", help="MATPOWER file or fixture name (" + ", ".join(FIXTURES) + ")")
    p.add_argument("--ac-obj", type=float, help="AC objective for the gap")
    p.add_argument("--manifest", type=Path, help="JSON object mapping case name to AC objective")
    p.add_argument("--currents", action="store_true", help="also print total branch currents")

    p = sub.add_parser("suite", parents=[common], help="solve every case in a directory")
    p.add_argument("directory", type=Path)
    p.add_argument("--manifest", type=Path, help="JSON object mapping case name to AC objective")
    p.add_argument("--workers", type=_positive_int, default=1, help="cases solved in parallel")

    p = sub.add_parser("currents", parents=[common], help="total branch currents at the optimum")
    p.add_argument("case")
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, --version and usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    random.seed(args.seed)
    np.random.seed(args.seed)
    settings = _settings(args.tol, args.max_iters)
    cuts = args.cuts == "on"
    forms = ALL_FORMS if args.form == "all" else (FormulationKind(args.form),)
    timing = not args.no_time

    try:
        manifest = load_manifest(args.manifest) if getattr(args, "manifest", None) else None
    except (OSError, ValueError) as exc:
        print(f"socopf: cannot read manifest: {exc}", file=sys.stderr)
        return EXIT_PARSE

    try:
        if args.command == "suite":
            reports = run_suite(args.directory, forms, cuts=cuts, manifest=manifest,
                                settings=settings, workers=args.workers, timing=timing)
            sys.stdout.write(render(reports, args.output))
            return EXIT_OK if all(r.ok for r in reports) else EXIT_SOLVER

        network = resolve_case(args.case)
        name = case_name(args.case)
        if args.command == "currents":
            rows = [r for f in forms for r in report_currents(network, f, cuts=cuts, settings=settings)]
            for r in rows:
                r.case = name
            sys.stdout.write(render(rows, args.output))
            return EXIT_OK

        ac = args.ac_obj
        if ac is None:
            ac = lookup_ac(name, manifest, None if args.case in FIXTURES else Path(args.case).parent)
        reports = []
        for f in forms:
            rep = run_case(network, f, cuts=cuts, ac_objective=ac, settings=settings, timing=timing)
            rep.case = name
            reports.append(rep)
        sys.stdout.write(render(reports, args.output))
        if args.currents:
            rows = [r for f in forms for r in report_currents(network, f, cuts=cuts, settings=settings)]
            for r in rows:
                r.case = name
            sys.stdout.write(render(rows, args.output))
        return EXIT_OK if all(r.ok for r in reports) else EXIT_SOLVER
    except FileNotFoundError as exc:
        print(f"socopf: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, CaseError) as exc:
        print(f"socopf: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (RuntimeError, ValueError, ArithmeticError) as exc:
        print(f"socopf: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
