"""Numba kernels: stencil application, conjugate gradients, projected SOR.

All kernels work on flat float64 arrays in row-major order (x outer, y
inner; ny == 1 for 1D grids). Off-mask nodes are zero Dirichlet data: the
operator zeroes those rows and callers keep the corresponding entries at
zero, so the masked stencil is exactly the principal submatrix of the full
one. Everything here is deterministic and single-threaded.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def apply_shifted_laplacian(x, out, nx, ny, inv_hx2, inv_hy2, alpha, beta, mask):
    """out = alpha*x + beta*(L x) on mask nodes, 0 elsewhere.

    L is the negative Laplacian (positive definite) with zero Dirichlet
    boundary; x must vanish off the mask.
    """
    for ix in range(nx):
        base = ix * ny
        for iy in range(ny):
            i = base + iy
            if not mask[i]:
                out[i] = 0.0
                continue
            s = 2.0 * inv_hx2 * x[i]
            if ix > 0:
                s -= inv_hx2 * x[i - ny]
            if ix < nx - 1:
                s -= inv_hx2 * x[i + ny]
            if ny > 1:
                s += 2.0 * inv_hy2 * x[i]
                if iy > 0:
                    s -= inv_hy2 * x[i - 1]
                if iy < ny - 1:
                    s -= inv_hy2 * x[i + 1]
            out[i] = alpha * x[i] + beta * s


@njit(cache=True)
def cg_shifted_laplacian(b, x, nx, ny, inv_hx2, inv_hy2, alpha, beta, mask, tol, maxiter):
    """Conjugate gradients for (alpha*I + beta*L) x = b on mask nodes.

    x carries the initial guess in and the solution out; b and x must be
    zero off the mask. Stops when the Euclidean residual norm is <= tol.
    Returns (iterations, residual); iterations == -1 flags a cap hit.
    """
    n = nx * ny
    r = np.empty(n)
    ap = np.empty(n)
    apply_shifted_laplacian(x, ap, nx, ny, inv_hx2, inv_hy2, alpha, beta, mask)
    rs = 0.0
    for i in range(n):
        r[i] = b[i] - ap[i] if mask[i] else 0.0
        rs += r[i] * r[i]
    if np.sqrt(rs) <= tol:
        return 0, np.sqrt(rs)
    p = r.copy()
    for k in range(maxiter):
        apply_shifted_laplacian(p, ap, nx, ny, inv_hx2, inv_hy2, alpha, beta, mask)
        pap = 0.0
        for i in range(n):
            pap += p[i] * ap[i]
        step = rs / pap
        rs_new = 0.0
        for i in range(n):
            x[i] += step * p[i]
            r[i] -= step * ap[i]
            rs_new += r[i] * r[i]
        if np.sqrt(rs_new) <= tol:
            return k + 1, np.sqrt(rs_new)
        ratio = rs_new / rs
        rs = rs_new
        for i in range(n):
            p[i] = r[i] + ratio * p[i]
    return -1, np.sqrt(rs)


@njit(cache=True)
def apply_shifted_diag(x, out, nx, ny, inv_hx2, inv_hy2, alpha, beta, extra):
    """out = (alpha + extra)*x + beta*(L x); extra is a per-node diagonal."""
    for ix in range(nx):
        base = ix * ny
        for iy in range(ny):
            i = base + iy
            s = 2.0 * inv_hx2 * x[i]
            if ix > 0:
                s -= inv_hx2 * x[i - ny]
            if ix < nx - 1:
                s -= inv_hx2 * x[i + ny]
            if ny > 1:
                s += 2.0 * inv_hy2 * x[i]
                if iy > 0:
                    s -= inv_hy2 * x[i - 1]
                if iy < ny - 1:
                    s -= inv_hy2 * x[i + 1]
            out[i] = (alpha + extra[i]) * x[i] + beta * s


@njit(cache=True)
def cg_shifted_diag(b, x, nx, ny, inv_hx2, inv_hy2, alpha, beta, extra, tol, maxiter):
    """CG for ((alpha + extra)*I + beta*L) x = b; warm start in x.

    Returns (iterations, residual); iterations == -1 flags a cap hit.
    """
    n = nx * ny
    r = np.empty(n)
    ap = np.empty(n)
    apply_shifted_diag(x, ap, nx, ny, inv_hx2, inv_hy2, alpha, beta, extra)
    rs = 0.0
    for i in range(n):
        r[i] = b[i] - ap[i]
        rs += r[i] * r[i]
    if np.sqrt(rs) <= tol:
        return 0, np.sqrt(rs)
    p = r.copy()
    for k in range(maxiter):
        apply_shifted_diag(p, ap, nx, ny, inv_hx2, inv_hy2, alpha, beta, extra)
        pap = 0.0
        for i in range(n):
            pap += p[i] * ap[i]
        step = rs / pap
        rs_new = 0.0
        for i in range(n):
            x[i] += step * p[i]
            r[i] -= step * ap[i]
            rs_new += r[i] * r[i]
        if np.sqrt(rs_new) <= tol:
            return k + 1, np.sqrt(rs_new)
        ratio = rs_new / rs
        rs = rs_new
        for i in range(n):
            p[i] = r[i] + ratio * p[i]
    return -1, np.sqrt(rs)


@njit(cache=True)
def lcp_residual(u, rhs, nx, ny, inv_hx2, inv_hy2, diag, constrained, obstacle):
    """Natural residual of the step LCP for A = diag(I) pattern + stencil.

    A has diagonal `diag` and the stencil off-diagonals -1/h^2 per axis.
    At constrained nodes the score is min(obstacle - u, rhs - Au)
    (both must be >= 0 and complementary); elsewhere it is the plain
    equation residual rhs - Au. Returns max |score|.
    """
    res = 0.0
    for ix in range(nx):
        base = ix * ny
        for iy in range(ny):
            i = base + iy
            au = diag * u[i]
            if ix > 0:
                au -= inv_hx2 * u[i - ny]
            if ix < nx - 1:
                au -= inv_hx2 * u[i + ny]
            if ny > 1:
                if iy > 0:
                    au -= inv_hy2 * u[i - 1]
                if iy < ny - 1:
                    au -= inv_hy2 * u[i + 1]
            r = rhs[i] - au
            if constrained[i]:
                gap = obstacle - u[i]
                score = gap if gap < r else r
            else:
                score = r
            if score < 0.0:
                score = -score
            if score > res:
                res = score
    return res


@njit(cache=True)
def psor_solve(u, rhs, nx, ny, inv_hx2, inv_hy2, diag, constrained, obstacle,
               omega, tol, max_sweeps, backward):
    """Projected SOR sweeps until the LCP natural residual is <= tol.

    Sweeps are lexicographic (reversed when backward is true) with
    per-node clamping u <= obstacle at constrained nodes. u is updated in
    place from its incoming warm start. Returns (sweeps, residual);
    sweeps == -1 flags a cap hit.
    """
    n = nx * ny
    for sweep in range(max_sweeps):
        for idx in range(n):
            i = n - 1 - idx if backward else idx
            ix = i // ny
            iy = i - ix * ny
            acc = rhs[i]
            if ix > 0:
                acc += inv_hx2 * u[i - ny]
            if ix < nx - 1:
                acc += inv_hx2 * u[i + ny]
            if ny > 1:
                if iy > 0:
                    acc += inv_hy2 * u[i - 1]
                if iy < ny - 1:
                    acc += inv_hy2 * u[i + 1]
            unew = (1.0 - omega) * u[i] + omega * acc / diag
            if constrained[i] and unew > obstacle:
                unew = obstacle
            u[i] = unew
        res = lcp_residual(u, rhs, nx, ny, inv_hx2, inv_hy2, diag,
                           constrained, obstacle)
        if res <= tol:
            return sweep + 1, res
    return -1, lcp_residual(u, rhs, nx, ny, inv_hx2, inv_hy2, diag,
                            constrained, obstacle)
