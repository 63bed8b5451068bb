"""Solver-agnostic conic program: bounded variables, linear rows, rotated cones.

Complex quantities are expanded to (real, imaginary) pairs of linear
expressions; :class:`ComplexExpr` does the bookkeeping so formulation code can
be written with complex coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence, Union

import numpy as np
import scipy.sparse as sp

Number = Union[int, float]


@dataclass(frozen=True)
class Var:
    """Handle for a real decision variable registered in a problem."""

    index: int
    name: str

    def __add__(self, other):
        return LinearExpr.of(self) + other

    __radd__ = __add__

    def __sub__(self, other):
        return LinearExpr.of(self) - other

    def __rsub__(self, other):
        return LinearExpr.coerce(other) - LinearExpr.of(self)

    def __mul__(self, k):
        return LinearExpr.of(self) * k

    __rmul__ = __mul__

    def __neg__(self):
        return LinearExpr.of(self) * -1.0


class LinearExpr:
    """``constant + sum(coef * var)`` with zero coefficients dropped."""

    __slots__ = ("constant", "terms")

    def __init__(self, constant: float = 0.0, terms: Mapping[int, float] | None = None):
        self.constant = float(constant)
        self.terms = {k: float(v) for k, v in (terms or {}).items() if v != 0.0}

    @classmethod
    def of(cls, var: Var, coef: float = 1.0) -> "LinearExpr":
        return cls(0.0, {var.index: coef})

    @classmethod
    def coerce(cls, x) -> "LinearExpr":
        if isinstance(x, LinearExpr):
            return x
        if isinstance(x, Var):
            return cls.of(x)
        if isinstance(x, (int, float, np.floating, np.integer)):
            return cls(float(x))
        raise TypeError(f"cannot build a linear expression from {type(x).__name__}")

    def copy(self) -> "LinearExpr":
        e = LinearExpr(self.constant)
        e.terms = dict(self.terms)
        return e

    def _iadd_scaled(self, other: "LinearExpr", k: float) -> "LinearExpr":
        self.constant += k * other.constant
        terms = self.terms
        for idx, v in other.terms.items():
            nv = terms.get(idx, 0.0) + k * v
            if nv == 0.0:
                terms.pop(idx, None)
            else:
                terms[idx] = nv
        return self

    def __add__(self, other):
        return self.copy()._iadd_scaled(LinearExpr.coerce(other), 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        return self.copy()._iadd_scaled(LinearExpr.coerce(other), -1.0)

    def __rsub__(self, other):
        return LinearExpr.coerce(other) - self

    def __mul__(self, k):
        k = float(k)
        if k == 0.0:
            return LinearExpr()
        e = LinearExpr(self.constant * k)
        e.terms = {i: v * k for i, v in self.terms.items()}
        return e

    __rmul__ = __mul__

    def __truediv__(self, k):
        return self * (1.0 / float(k))

    def __neg__(self):
        return self * -1.0

    def evaluate(self, point: np.ndarray) -> float:
        return self.constant + sum(v * point[i] for i, v in self.terms.items())

    @property
    def is_constant(self) -> bool:
        return not self.terms

    def __repr__(self):
        body = " + ".join(f"{v:g}*x{i}" for i, v in sorted(self.terms.items()))
        return f"LinearExpr({self.constant:g}{' + ' + body if body else ''})"


def lin_sum(items: Iterable) -> LinearExpr:
    out = LinearExpr()
    for it in items:
        out._iadd_scaled(LinearExpr.coerce(it), 1.0)
    return out


class ComplexExpr:
    """Pair of real linear expressions standing for ``re + j*im``."""

    __slots__ = ("re", "im")

    def __init__(self, re=0.0, im=0.0):
        self.re = LinearExpr.coerce(re)
        self.im = LinearExpr.coerce(im)

    @classmethod
    def coerce(cls, x) -> "ComplexExpr":
        if isinstance(x, ComplexExpr):
            return x
        if isinstance(x, tuple) and len(x) == 2:
            return cls(x[0], x[1])
        if isinstance(x, (complex, np.complexfloating)):
            return cls(x.real, x.imag)
        return cls(x, 0.0)

    def __add__(self, other):
        o = ComplexExpr.coerce(other)
        return ComplexExpr(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __sub__(self, other):
        o = ComplexExpr.coerce(other)
        return ComplexExpr(self.re - o.re, self.im - o.im)

    def __rsub__(self, other):
        return ComplexExpr.coerce(other) - self

    def __mul__(self, a):
        # (ar + j ai)(zr + j zi) = (ar zr - ai zi) + j (ar zi + ai zr)
        a = complex(a)
        return ComplexExpr(
            self.re * a.real - self.im * a.imag,
            self.im * a.real + self.re * a.imag,
        )

    __rmul__ = __mul__

    def __truediv__(self, a):
        return self * (1 / complex(a))

    def __neg__(self):
        return ComplexExpr(-self.re, -self.im)

    def conj(self) -> "ComplexExpr":
        return ComplexExpr(self.re, -self.im)

    def evaluate(self, point: np.ndarray) -> complex:
        return complex(self.re.evaluate(point), self.im.evaluate(point))


@dataclass
class Row:
    expr: LinearExpr
    tag: str = ""


@dataclass
class RotatedCone:
    """``sum(x_i**2) <= y * z`` with ``y, z >= 0``."""

    x: tuple[LinearExpr, ...]
    y: LinearExpr
    z: LinearExpr
    tag: str = ""

    @property
    def dim(self) -> int:
        return len(self.x) + 2


@dataclass
class ProblemData:
    """Matrix form ``min c'x  s.t.  A x = b,  G x + s = h,  s in K``.

    ``K`` is ``nonneg`` nonnegative rows followed by second-order cones of the
    sizes in ``soc_dims`` (each ``t >= ||u||`` with ``t`` first).
    """

    c: np.ndarray
    A: sp.csc_matrix
    b: np.ndarray
    G: sp.csc_matrix
    h: np.ndarray
    nonneg: int
    soc_dims: np.ndarray
    c0: float = 0.0
    n_equalities: int = 0
    n_bound_rows: int = 0


class ConicProblem:
    """Minimize a linear objective over bounds, linear rows and rotated cones.

    Bounds live on the variables; builders never restate a bound as a row.
    """

    def __init__(self, name: str = ""):
        self.name = name
        self.variables: list[Var] = []
        self.lower: list[float] = []
        self.upper: list[float] = []
        self.equalities: list[Row] = []
        self.inequalities: list[Row] = []
        self.cones: list[RotatedCone] = []
        self.objective = LinearExpr()
        self.epigraphs: list[tuple[Var, LinearExpr]] = []
        self._sealed = False

    # -- construction -----------------------------------------------------
    def _check_open(self):
        if self._sealed:
            raise RuntimeError("problem is sealed")

    def add_variable(self, name: str, lower: float = -math.inf, upper: float = math.inf) -> Var:
        self._check_open()
        if lower > upper:
            raise ValueError(f"{name}: lower bound {lower} exceeds upper bound {upper}")
        v = Var(len(self.variables), name)
        self.variables.append(v)
        self.lower.append(float(lower))
        self.upper.append(float(upper))
        return v

    def add_complex_pair(
        self,
        name: str,
        re_bounds: tuple[float, float] = (-math.inf, math.inf),
        im_bounds: tuple[float, float] = (-math.inf, math.inf),
    ) -> tuple[Var, Var]:
        """Allocate the real and imaginary parts of a complex variable."""
        return (
            self.add_variable(f"re({name})", *re_bounds),
            self.add_variable(f"im({name})", *im_bounds),
        )

    def tighten_bounds(self, var: Var, lower: float | None = None, upper: float | None = None):
        self._check_open()
        if lower is not None:
            self.lower[var.index] = max(self.lower[var.index], lower)
        if upper is not None:
            self.upper[var.index] = min(self.upper[var.index], upper)

    def add_eq(self, expr, tag: str = "") -> None:
        """``expr == 0``."""
        self._check_open()
        self.equalities.append(Row(LinearExpr.coerce(expr), tag))

    def add_le(self, expr, tag: str = "") -> None:
        """``expr <= 0``."""
        self._check_open()
        self.inequalities.append(Row(LinearExpr.coerce(expr), tag))

    def add_complex_linear_eq(self, terms, rhs: complex = 0j, tag: str = "") -> None:
        """Emit the real and imaginary rows of ``sum(a_k * z_k) == rhs``.

        ``terms`` is a :class:`ComplexExpr` or an iterable of
        ``(coefficient, complex_operand)`` pairs, where an operand is a
        ComplexExpr or a ``(re, im)`` tuple of variables/expressions.
        """
        if isinstance(terms, ComplexExpr):
            total = terms
        else:
            total = ComplexExpr()
            for a, z in terms:
                total = total + ComplexExpr.coerce(z) * a
        total = total - complex(rhs)
        self.add_eq(total.re, tag)
        self.add_eq(total.im, tag)

    def add_rotated_cone(self, x: Sequence, y, z, tag: str = "") -> None:
        """``sum(x_i**2) <= y*z``, with ``y, z >= 0`` made explicit if needed."""
        self._check_open()
        y = LinearExpr.coerce(y)
        z = LinearExpr.coerce(z)
        for side in (y, z):
            if not self._provably_nonneg(side):
                self.add_le(-side, tag=f"{tag}:nonneg" if tag else "cone-nonneg")
        self.cones.append(RotatedCone(tuple(LinearExpr.coerce(e) for e in x), y, z, tag))

    def epigraph_quadratic(self, c2: float, c1: float, p) -> LinearExpr:
        """Linear stand-in for ``c1*p + c2*p**2`` to be placed in a minimized objective."""
        if c2 < 0:
            raise ValueError("negative quadratic coefficient makes the objective nonconvex")
        p = LinearExpr.coerce(p)
        if c2 == 0:
            return p * c1
        name = self.variables[next(iter(p.terms))].name if len(p.terms) == 1 else "p"
        t = self.add_variable(f"sq({name})", 0.0)
        self.add_rotated_cone([p], t, 1.0, tag="epigraph")
        self.epigraphs.append((t, p))
        return p * c1 + LinearExpr.of(t, c2)

    def set_objective(self, expr) -> None:
        self._check_open()
        self.objective = LinearExpr.coerce(expr)

    def seal(self) -> "ConicProblem":
        self._sealed = True
        return self

    def repair_epigraphs(self, point: np.ndarray) -> np.ndarray:
        """Raise each epigraph variable ``t`` to ``p**2`` where it falls short.

        Only variables used by nothing but their own cone and the objective
        (with a nonnegative weight) are touched, so the result stays feasible
        for every other row and the objective can only rise.
        """
        if not self.epigraphs:
            return point
        uses: dict[int, int] = {}
        for r in self.equalities + self.inequalities:
            for i in r.expr.terms:
                uses[i] = uses.get(i, 0) + 1
        for c in self.cones:
            for e in (*c.x, c.y, c.z):
                for i in e.terms:
                    uses[i] = uses.get(i, 0) + 1
        out = np.array(point, dtype=float, copy=True)
        for t, p in self.epigraphs:
            k = t.index
            if uses.get(k, 0) != 1 or self.objective.terms.get(k, 0.0) < 0 or math.isfinite(self.upper[k]):
                continue
            out[k] = max(out[k], p.evaluate(out) ** 2)
        return out

    def _provably_nonneg(self, e: LinearExpr) -> bool:
        if e.constant < 0:
            return False
        for i, v in e.terms.items():
            if v > 0 and not self.lower[i] >= 0:
                return False
            if v < 0 and not self.upper[i] <= 0:
                return False
        return True

    # -- queries ----------------------------------------------------------
    @property
    def num_variables(self) -> int:
        return len(self.variables)

    def stats(self) -> dict:
        return {
            "variables": self.num_variables,
            "equalities": len(self.equalities),
            "inequalities": len(self.inequalities),
            "cones": len(self.cones),
            "bounded": sum(
                math.isfinite(lo) or math.isfinite(hi) for lo, hi in zip(self.lower, self.upper)
            ),
        }

    def count(self, tag: str) -> dict:
        """Rows and cones carrying ``tag``."""
        return {
            "equalities": sum(r.tag == tag for r in self.equalities),
            "inequalities": sum(r.tag == tag for r in self.inequalities),
            "cones": sum(c.tag == tag for c in self.cones),
        }

    def var_by_name(self, name: str) -> Var:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)

    def referenced(self) -> set[int]:
        used: set[int] = set(self.objective.terms)
        for r in self.equalities + self.inequalities:
            used.update(r.expr.terms)
        for c in self.cones:
            for e in (*c.x, c.y, c.z):
                used.update(e.terms)
        return used

    # -- export -------------------------------------------------------------
    def to_standard_form(self) -> ProblemData:
        """Assemble the matrix form consumed by the interior-point solver.

        Row order: ``A`` holds the equalities, then one row per fixed
        variable; ``G`` holds the finite bounds, then the inequalities, then
        the cone blocks.  Each rotated cone ``(x, y, z)`` becomes the
        second-order cone ``((y+z)/sqrt2, (y-z)/sqrt2, sqrt2*x)``.
        """
        n = self.num_variables
        if n == 0:
            raise ValueError("problem has no variables")
        c = np.zeros(n)
        for i, v in self.objective.terms.items():
            c[i] = v

        a_rows, b_vals = [], []
        for r in self.equalities:
            a_rows.append(r.expr.terms)
            b_vals.append(-r.expr.constant)
        g_rows, h_vals = [], []
        for i in range(n):
            lo, hi = self.lower[i], self.upper[i]
            if lo == hi:
                a_rows.append({i: 1.0})
                b_vals.append(lo)
                continue
            if math.isfinite(lo):
                g_rows.append({i: -1.0})
                h_vals.append(-lo)
            if math.isfinite(hi):
                g_rows.append({i: 1.0})
                h_vals.append(hi)
        n_bound_rows = len(g_rows)
        for r in self.inequalities:
            g_rows.append(r.expr.terms)
            h_vals.append(-r.expr.constant)
        nonneg = len(g_rows)

        s2 = math.sqrt(2.0)
        soc_dims = []
        for cone in self.cones:
            y, z = cone.y, cone.z
            members = [(y + z) / s2, (y - z) / s2] + [e * s2 for e in cone.x]
            for e in members:
                # s = e  <=>  -e.terms x + s = e.constant
                g_rows.append({i: -v for i, v in e.terms.items()})
                h_vals.append(e.constant)
            soc_dims.append(len(members))

        return ProblemData(
            c=c,
            A=_to_csc(a_rows, n),
            b=np.asarray(b_vals, dtype=float),
            G=_to_csc(g_rows, n),
            h=np.asarray(h_vals, dtype=float),
            nonneg=nonneg,
            soc_dims=np.asarray(soc_dims, dtype=np.int64),
            c0=self.objective.constant,
            n_equalities=len(self.equalities),
            n_bound_rows=n_bound_rows,
        )

    def dump(self) -> str:
        """Plain-text listing of variables, rows and cones.

        Format, one item per line::

            var <index> <name> <lower> <upper>
            obj <constant> [<coef>*x<index> ...]
            eq  <tag> <constant> [<coef>*x<index> ...]        # expr == 0
            le  <tag> <constant> [<coef>*x<index> ...]        # expr <= 0
            cone <tag> x=<expr>;<expr>... y=<expr> z=<expr>   # sum x^2 <= y z
        """
        def fmt(e: LinearExpr) -> str:
            parts = [repr(e.constant)] + [f"{v!r}*x{i}" for i, v in sorted(e.terms.items())]
            return " ".join(parts)

        lines = [f"# conic problem {self.name}".rstrip()]
        for v in self.variables:
            lines.append(f"var {v.index} {v.name} {self.lower[v.index]!r} {self.upper[v.index]!r}")
        lines.append(f"obj {fmt(self.objective)}")
        for r in self.equalities:
            lines.append(f"eq {r.tag or '-'} {fmt(r.expr)}")
        for r in self.inequalities:
            lines.append(f"le {r.tag or '-'} {fmt(r.expr)}")
        for c in self.cones:
            xs = ";".join(fmt(e) for e in c.x)
            lines.append(f"cone {c.tag or '-'} x={xs} y={fmt(c.y)} z={fmt(c.z)}")
        return "\n".join(lines) + "\n"


def _to_csc(rows: list[Mapping[int, float]], n: int) -> sp.csc_matrix:
    ri, ci, vals = [], [], []
    for k, terms in enumerate(rows):
        for i, v in terms.items():
            ri.append(k)
            ci.append(i)
            vals.append(v)
    return sp.csc_matrix((vals, (ri, ci)), shape=(len(rows), n))
