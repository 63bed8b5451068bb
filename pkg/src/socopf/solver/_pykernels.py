"""Second-order cone kernels in numpy; fallback for the compiled ``_kernels``.

Every function takes ``offsets`` and ``dims`` (int64 arrays) locating each
cone block inside the flat vectors.  Blocks of equal dimension are gathered
into 2-D arrays so the work is vectorized per dimension.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=64)
def _groups_cached(key_off: bytes, key_dim: bytes):
    offsets = np.frombuffer(key_off, dtype=np.int64)
    dims = np.frombuffer(key_dim, dtype=np.int64)
    out = []
    for d in np.unique(dims):
        sel = np.flatnonzero(dims == d)
        idx = offsets[sel][:, None] + np.arange(d)[None, :]
        out.append((sel, idx))
    return out


def _groups(offsets, dims):
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    dims = np.ascontiguousarray(dims, dtype=np.int64)
    return _groups_cached(offsets.tobytes(), dims.tobytes())


def _det(u):
    # factored form avoids cancellation near the cone boundary
    nrm = np.linalg.norm(u[:, 1:], axis=1)
    return (u[:, 0] - nrm) * (u[:, 0] + nrm)


def nt_scaling(s, z, offsets, dims):
    """Nesterov-Todd scaling point of each cone pair ``(s, z)``.

    Returns ``(eta, w, lam)``: the scale factor per cone, the normalized
    scaling vector ``w`` (flat, same layout as ``s``) and ``lam = W z``.
    """
    eta = np.empty(len(dims))
    w = np.zeros_like(s)
    lam = np.zeros_like(s)
    for sel, idx in _groups(offsets, dims):
        S, Z = s[idx], z[idx]
        sd, zd = np.sqrt(_det(S)), np.sqrt(_det(Z))
        Sn, Zn = S / sd[:, None], Z / zd[:, None]
        gamma = np.sqrt(0.5 * (1.0 + np.einsum("ij,ij->i", Sn, Zn)))
        W = np.empty_like(S)
        W[:, 0] = (Sn[:, 0] + Zn[:, 0]) / (2 * gamma)
        W[:, 1:] = (Sn[:, 1:] - Zn[:, 1:]) / (2 * gamma[:, None])
        e = np.sqrt(sd / zd)
        eta[sel] = e
        w[idx] = W
        lam[idx] = _apply(W, e, Z, inverse=False)
    return eta, w, lam


def _apply(W, eta, V, inverse):
    w0, w1 = W[:, 0], W[:, 1:]
    v0, v1 = V[:, 0], V[:, 1:]
    dot = np.einsum("ij,ij->i", w1, v1)
    out = np.empty_like(V)
    if inverse:
        out[:, 0] = (w0 * v0 - dot) / eta
        out[:, 1:] = (v1 + (-v0 + dot / (1.0 + w0))[:, None] * w1) / eta[:, None]
    else:
        out[:, 0] = eta * (w0 * v0 + dot)
        out[:, 1:] = eta[:, None] * (v1 + (v0 + dot / (1.0 + w0))[:, None] * w1)
    return out


def apply_scaling(v, eta, w, offsets, dims, inverse=False):
    """``W v`` (or ``W^{-1} v``) blockwise; entries outside the cones are copied."""
    out = v.copy()
    for sel, idx in _groups(offsets, dims):
        out[idx] = _apply(w[idx], eta[sel], v[idx], inverse)
    return out


def jordan_product(u, v, offsets, dims):
    out = np.zeros_like(u)
    for _, idx in _groups(offsets, dims):
        U, V = u[idx], v[idx]
        R = np.empty_like(U)
        R[:, 0] = np.einsum("ij,ij->i", U, V)
        R[:, 1:] = U[:, :1] * V[:, 1:] + V[:, :1] * U[:, 1:]
        out[idx] = R
    return out


def jordan_divide(lam, d, offsets, dims):
    """Solve ``lam o x = d`` for ``x`` in each cone."""
    out = np.zeros_like(d)
    for _, idx in _groups(offsets, dims):
        L, D = lam[idx], d[idx]
        l0, l1 = L[:, 0], L[:, 1:]
        det = _det(L)
        x0 = (l0 * D[:, 0] - np.einsum("ij,ij->i", l1, D[:, 1:])) / det
        R = np.empty_like(D)
        R[:, 0] = x0
        R[:, 1:] = (D[:, 1:] - x0[:, None] * l1) / l0[:, None]
        out[idx] = R
    return out


def max_step(u, d, offsets, dims):
    """Largest ``alpha >= 0`` keeping ``u + alpha*d`` in every cone (``inf`` if unbounded)."""
    best = np.inf
    for _, idx in _groups(offsets, dims):
        U, D = u[idx], d[idx]
        a = _det(D)
        b = U[:, 0] * D[:, 0] - np.einsum("ij,ij->i", U[:, 1:], D[:, 1:])
        c = np.maximum(_det(U), 0.0)
        disc = b * b - a * c
        with np.errstate(divide="ignore", invalid="ignore"):
            sq = np.sqrt(np.maximum(disc, 0.0))
            q = -(b + np.where(b >= 0, sq, -sq))
            r1 = np.where(a != 0, q / a, np.inf)
            r2 = np.where(q != 0, c / q, np.inf)
        r1 = np.where(r1 > 0, r1, np.inf)
        r2 = np.where(r2 > 0, r2, np.inf)
        r = np.minimum(r1, r2)
        r = np.where((disc < 0) | ((a > 0) & (b > 0)), np.inf, r)
        if r.size:
            best = min(best, float(r.min()))
    return best


def scaling_squared(eta, w, offsets, dims):
    """Dense ``W^2 = eta^2 (2 w w' - J)`` blocks, row-major, concatenated."""
    total = int(np.sum(np.asarray(dims) ** 2))
    out = np.empty(total)
    starts = np.concatenate([[0], np.cumsum(np.asarray(dims) ** 2)[:-1]]).astype(np.int64)
    for sel, idx in _groups(offsets, dims):
        W = w[idx]
        d = W.shape[1]
        B = 2.0 * W[:, :, None] * W[:, None, :]
        B[:, 0, 0] -= 1.0
        B[:, np.arange(1, d), np.arange(1, d)] += 1.0
        B *= (eta[sel] ** 2)[:, None, None]
        pos = starts[sel][:, None] + np.arange(d * d)[None, :]
        out[pos] = B.reshape(len(sel), d * d)
    return out


def margins(u, offsets, dims):
    """``u0 - ||u1||`` per cone (positive in the interior)."""
    out = np.empty(len(dims))
    for sel, idx in _groups(offsets, dims):
        U = u[idx]
        out[sel] = U[:, 0] - np.linalg.norm(U[:, 1:], axis=1)
    return out
