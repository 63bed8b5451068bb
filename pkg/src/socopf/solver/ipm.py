"""Primal-dual interior-point method on the homogeneous self-dual embedding.

Solves ``min c'x  s.t.  A x = b,  G x + s = h,  s in K`` where ``K`` is a
product of a nonnegative orthant and second-order cones.  Search directions
use Nesterov-Todd scaling and Mehrotra's predictor-corrector; each iteration
factors one sparse quasi-definite KKT matrix and reuses it for three solves.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels

log = logging.getLogger(__name__)


class Cones:
    """Nonnegative orthant of size ``nonneg`` followed by SOC blocks."""

    def __init__(self, nonneg: int, soc_dims):
        self.l = int(nonneg)
        self.dims = np.ascontiguousarray(soc_dims, dtype=np.int64)
        starts = np.concatenate([[0], np.cumsum(self.dims)[:-1]]) if len(self.dims) else np.zeros(0)
        self.offsets = np.ascontiguousarray(self.l + starts, dtype=np.int64)
        self.m = self.l + int(self.dims.sum())
        self.degree = self.l + len(self.dims)
        self.e = np.zeros(self.m)
        self.e[: self.l] = 1.0
        self.e[self.offsets] = 1.0

    def margin(self, u) -> float:
        """Smallest 'eigenvalue' of ``u``; positive iff ``u`` is interior."""
        vals = [np.inf]
        if self.l:
            vals.append(u[: self.l].min())
        if len(self.dims):
            vals.append(kernels.margins(u, self.offsets, self.dims).min())
        return float(min(vals))

    def scaling(self, s, z) -> "Scaling":
        sl, zl = s[: self.l], z[: self.l]
        lp_w = np.sqrt(sl / zl)
        lam = np.zeros(self.m)
        lam[: self.l] = np.sqrt(sl * zl)
        eta = w = np.zeros(0)
        if len(self.dims):
            eta, w, lam_soc = kernels.nt_scaling(s, z, self.offsets, self.dims)
            lam[self.l:] = lam_soc[self.l:]
        return Scaling(self, lp_w, eta, w, lam)

    def prod(self, u, v):
        out = kernels.jordan_product(u, v, self.offsets, self.dims) if len(self.dims) else np.zeros(self.m)
        out[: self.l] = u[: self.l] * v[: self.l]
        return out

    def divide(self, lam, v):
        out = kernels.jordan_divide(lam, v, self.offsets, self.dims) if len(self.dims) else np.zeros(self.m)
        out[: self.l] = v[: self.l] / lam[: self.l]
        return out

    def max_step(self, u, d) -> float:
        alpha = np.inf
        if self.l:
            neg = d[: self.l] < 0
            if neg.any():
                alpha = float(np.min(-u[: self.l][neg] / d[: self.l][neg]))
        if len(self.dims):
            alpha = min(alpha, kernels.max_step(u, d, self.offsets, self.dims))
        return alpha


@dataclass
class Scaling:
    cones: Cones
    lp_w: np.ndarray
    eta: np.ndarray
    w: np.ndarray
    lam: np.ndarray

    def apply(self, v, inverse=False):
        c = self.cones
        out = (
            kernels.apply_scaling(v, self.eta, self.w, c.offsets, c.dims, inverse)
            if len(c.dims)
            else v.copy()
        )
        out[: c.l] = v[: c.l] / self.lp_w if inverse else v[: c.l] * self.lp_w
        return out

    def squared_blocks(self):
        c = self.cones
        soc = (
            kernels.scaling_squared(self.eta, self.w, c.offsets, c.dims)
            if len(c.dims)
            else np.zeros(0)
        )
        return np.concatenate([self.lp_w**2, soc])


@dataclass
class IPMResult:
    status: str
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    s: np.ndarray
    iterations: int
    pcost: float = math.nan
    dcost: float = math.nan
    info: dict = field(default_factory=dict)


def ruiz(A, G, cones: Cones, sweeps: int):
    """Row/column equilibration of ``[A; G]`` keeping each SOC block uniform."""
    n = A.shape[1]
    pa, m = A.shape[0], G.shape[0]
    M = sp.vstack([A, G]).tocsc()
    D = np.ones(n)
    E = np.ones(pa + m)
    block_of = np.full(m, -1, dtype=np.int64)
    for k, (o, d) in enumerate(zip(cones.offsets, cones.dims)):
        block_of[o: o + d] = k
    for _ in range(sweeps):
        absM = abs(M)
        rn = np.asarray(absM.max(axis=1).todense()).ravel()
        cn = np.asarray(absM.max(axis=0).todense()).ravel()
        g = rn[pa:]
        if len(cones.dims):
            soc_part = block_of >= 0
            bmax = np.zeros(len(cones.dims))
            np.maximum.at(bmax, block_of[soc_part], g[soc_part])
            g[soc_part] = bmax[block_of[soc_part]]
        rn[pa:] = g
        rn[rn == 0] = 1.0
        cn[cn == 0] = 1.0
        r = 1.0 / np.sqrt(rn)
        c = 1.0 / np.sqrt(cn)
        if np.all(np.abs(rn - 1) < 1e-3) and np.all(np.abs(cn - 1) < 1e-3):
            break
        M = sp.diags(r) @ M @ sp.diags(c)
        E *= r
        D *= c
    M = M.tocsr()
    return M[:pa].tocsc(), M[pa:].tocsc(), D, E[:pa], E[pa:]


class KKT:
    """``[[dI, A', G'], [A, -dI, 0], [G, 0, -W^2 - dI]]`` with a fixed pattern."""

    def __init__(self, A, G, cones: Cones, reg: float, refine: int):
        n, p, m = A.shape[1], A.shape[0], G.shape[0]
        self.n, self.p, self.m = n, p, m
        self.reg, self.refine = reg, refine
        Ac, Gc = A.tocoo(), G.tocoo()
        rows = [Ac.row + n, Ac.col, Gc.row + n + p, Gc.col]
        cols = [Ac.col, Ac.row + n, Gc.col, Gc.row + n + p]
        vals = [Ac.data, Ac.data, Gc.data, Gc.data]
        self.static = sp.csc_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n + p + m, n + p + m),
        )
        self.reg_diag = np.concatenate([np.full(n, reg), np.full(p + m, -reg)])
        # W^2 pattern: LP diagonal then dense SOC blocks
        wr = [np.arange(cones.l)]
        wc = [np.arange(cones.l)]
        for o, d in zip(cones.offsets, cones.dims):
            ii, jj = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
            wr.append(o + ii.ravel())
            wc.append(o + jj.ravel())
        self.w_rows = np.concatenate(wr).astype(np.int64) + n + p
        self.w_cols = np.concatenate(wc).astype(np.int64) + n + p
        self.size = n + p + m
        self.lu = None
        self.K = None

    def factor(self, w2_values):
        Wm = sp.csc_matrix((-w2_values, (self.w_rows, self.w_cols)), shape=(self.size, self.size))
        self.K = (self.static + Wm).tocsc()
        # bump the regularization if the factor comes out singular
        for bump in (1.0, 1e2, 1e4, 1e6):
            Kreg = (self.K + sp.diags(bump * self.reg_diag)).tocsc()
            try:
                self.lu = spla.splu(Kreg, permc_spec="COLAMD", diag_pivot_thresh=0.1)
                return
            except RuntimeError:
                if bump == 1e6:
                    raise

    def solve(self, rhs):
        u = self.lu.solve(rhs)
        target = 1e-14 * (1.0 + np.max(np.abs(rhs)))
        prev = np.inf
        for _ in range(self.refine):
            r = rhs - self.K @ u
            err = np.max(np.abs(r))
            if err <= target or err >= prev:
                break
            prev = err
            u = u + self.lu.solve(r)
        return u


def _inf_norm(v) -> float:
    return float(np.max(np.abs(v))) if v.size else 0.0


def solve_standard(data, settings, check=None) -> IPMResult:
    """Run the interior-point iterations on a :class:`~socopf.conic.ProblemData`.

    ``check`` maps an unscaled primal point to its worst absolute constraint
    violation; a point is only declared optimal when that value is within
    ``feas_tol``.
    """
    A0, G0 = data.A.tocsc(), data.G.tocsc()
    c0, b0, h0 = data.c, data.b, data.h
    for arr in (c0, b0, h0, A0.data, G0.data):
        if not np.all(np.isfinite(arr)):
            raise ValueError("problem data contains NaN or Inf")
    n, p, m = A0.shape[1], A0.shape[0], G0.shape[0]
    cones = Cones(data.nonneg, data.soc_dims)
    assert cones.m == m

    A, G, D, EA, EG = ruiz(A0, G0, cones, settings.ruiz_sweeps)
    cnorm = _inf_norm(D * c0)
    cscale = 1.0 / cnorm if cnorm > 0 else 1.0
    c = cscale * D * c0
    b = EA * b0
    h = EG * h0

    kkt = KKT(A, G, cones, settings.static_reg, settings.refine_steps)

    def unscale(x, y, z, s, tau):
        return D * x / tau, EA * y / (cscale * tau), EG * z / (cscale * tau), s / EG / tau

    # initial point from two least-squares solves with W = I
    kkt.factor(np.concatenate([np.ones(cones.l)] + [np.eye(d).ravel() for d in cones.dims]))
    u = kkt.solve(np.concatenate([np.zeros(n), b, h]))
    x = u[:n]
    s = -u[n + p:]
    u = kkt.solve(np.concatenate([-c, np.zeros(p + m)]))
    y = u[n: n + p]
    z = u[n + p:]
    # shift into the cone interior with a margin of at least one
    for v in (s, z):
        a = -cones.margin(v) if m else -1.0
        if a > -1.0:
            v += (1.0 + a) * cones.e
    tau = kappa = 1.0

    tol = settings.feas_tol
    best = None
    info = {}
    status = "IterLimit"
    it = 0
    for it in range(settings.max_iters + 1):
        rx = A.T @ y + G.T @ z + c * tau
        ry = b * tau - A @ x
        rz = h * tau - G @ x - s
        rtau = -c @ x - b @ y - h @ z - kappa
        mu = (s @ z + tau * kappa) / (cones.degree + 1)

        xo, yo, zo, so = unscale(x, y, z, s, tau)
        pres = max(
            _inf_norm(A0 @ xo - b0) / (1 + _inf_norm(b0)),
            _inf_norm(G0 @ xo + so - h0) / (1 + _inf_norm(h0)),
        )
        dres = _inf_norm(A0.T @ yo + G0.T @ zo + c0) / (1 + _inf_norm(c0))
        pcost = float(c0 @ xo)
        dcost = float(-b0 @ yo - h0 @ zo)
        gap = float(so @ zo)
        relgap = gap / max(1.0, min(abs(pcost), abs(dcost)))
        info = dict(pres=pres, dres=dres, gap=gap, relgap=relgap, tau=tau, kappa=kappa, mu=mu)
        if settings.verbose:
            log.info("it %3d pcost %+.8e dcost %+.8e pres %.1e dres %.1e gap %.1e tau %.1e",
                     it, pcost, dcost, pres, dres, gap, tau)

        if pres <= tol and dres <= tol and relgap <= settings.gap_tol:
            viol = check(xo) if check is not None else 0.0
            if viol <= tol:
                return IPMResult("Optimal", xo, yo, zo, so, it, pcost, dcost, info)
        score = max(pres, dres, relgap)
        if check is not None and score <= 100 * tol:
            score = max(score, check(xo))
        if best is None or score < best[0]:
            best = (score, it, xo, yo, zo, so, pcost, dcost, dict(info))
        elif best[0] <= 100 * tol and it - best[1] >= 5:
            break  # stalled at a usable point

        # infeasibility certificates (unnormalized by tau)
        ycert, zcert = EA * y / cscale, EG * z / cscale
        btz = float(b0 @ ycert + h0 @ zcert)
        if btz < 0 and _inf_norm(A0.T @ ycert + G0.T @ zcert) <= tol * -btz and tau < kappa:
            status = "Infeasible"
            return IPMResult(status, xo * 0, ycert / -btz, zcert / -btz, so * 0, it, math.inf, math.inf, info)
        xcert, scert = D * x, s / EG
        ctx = float(c0 @ xcert)
        if ctx < 0 and max(_inf_norm(A0 @ xcert), _inf_norm(G0 @ xcert + scert)) <= tol * -ctx and tau < kappa:
            status = "Unbounded"
            return IPMResult(status, xcert / -ctx, yo * 0, zo * 0, scert / -ctx, it, -math.inf, -math.inf, info)

        if it == settings.max_iters:
            status = "IterLimit"
            break

        # Newton system
        try:
            W = cones.scaling(s, z)
            kkt.factor(W.squared_blocks())
        except (RuntimeError, FloatingPointError, ValueError) as exc:
            log.debug("factorization failed at iteration %d: %s", it, exc)
            status = "NumericalFailure"
            break
        lam = W.lam
        u1 = kkt.solve(np.concatenate([-c, b, h]))
        x1, y1, z1 = u1[:n], u1[n: n + p], u1[n + p:]
        denom_base = c @ x1 + b @ y1 + h @ z1

        def direction(ds, dkappa, eta):
            Wlds = W.apply(cones.divide(lam, ds))
            u2 = kkt.solve(np.concatenate([-eta * rx, eta * ry, eta * rz - Wlds]))
            x2, y2, z2 = u2[:n], u2[n: n + p], u2[n + p:]
            dtau = (dkappa - tau * eta * rtau + tau * (c @ x2 + b @ y2 + h @ z2)) / (kappa - tau * denom_base)
            dx = x2 + dtau * x1
            dy = y2 + dtau * y1
            dz = z2 + dtau * z1
            dsv = W.apply(cones.divide(lam, ds) - W.apply(dz))
            dk = (dkappa - kappa * dtau) / tau
            return dx, dy, dz, dsv, dtau, dk

        def step_len(dz, dsv, dtau, dk):
            a = min(cones.max_step(s, dsv), cones.max_step(z, dz))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dk < 0:
                a = min(a, -kappa / dk)
            return a

        # predictor
        ds_aff = -cones.prod(lam, lam)
        dk_aff = -tau * kappa
        dxa, dya, dza, dsa, dta, dka = direction(ds_aff, dk_aff, 1.0)
        alpha_aff = min(1.0, step_len(dza, dsa, dta, dka))
        sigma = min(1.0, max(0.0, (1.0 - alpha_aff) ** 3))

        # corrector
        ds = ds_aff - cones.prod(W.apply(dsa, inverse=True), W.apply(dza)) + sigma * mu * cones.e
        dk = dk_aff - dta * dka + sigma * mu
        dx, dy, dz, dsv, dtau, dkap = direction(ds, dk, 1.0 - sigma)
        alpha = min(1.0, 0.99 * step_len(dz, dsv, dtau, dkap))
        if not np.isfinite(alpha) or alpha < 1e-12 or not np.all(np.isfinite(dx)):
            log.debug("step failure at iteration %d: alpha %.3e", it, alpha)
            status = "NumericalFailure"
            break

        # roundoff can land a full step on the cone boundary; back off
        for _ in range(30):
            s_new = s + alpha * dsv
            z_new = z + alpha * dz
            if cones.margin(s_new) > 0 and cones.margin(z_new) > 0:
                break
            alpha *= 0.5
        else:
            status = "NumericalFailure"
            break

        x = x + alpha * dx
        y = y + alpha * dy
        z = z_new
        s = s_new
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkap

        # rescale the embedding when tau and kappa drift
        if tau > 1e8 or (tau < 1e-8 and kappa < 1e-8):
            break

    # no clean exit: report the best iterate seen
    _, it_best, xo, yo, zo, so, pcost, dcost, info = best
    loose = 100 * tol
    if (info["pres"] <= loose and info["dres"] <= loose and info["relgap"] <= 100 * settings.gap_tol
            and (check is None or check(xo) <= loose)):
        status = "AlmostOptimal"
    elif status not in ("IterLimit", "NumericalFailure"):
        status = "NumericalFailure"
    return IPMResult(status, xo, yo, zo, so, it, pcost, dcost, info)
