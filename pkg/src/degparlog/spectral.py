"""Principal Dirichlet eigenpair on the whole domain or on the node
subset interior to omega0.

Inverse power iteration on the discrete negative Laplacian restricted to
the region's nodes (zero Dirichlet data everywhere else), with inner
conjugate-gradient solves. The Laplacian restricted to any node subset is
a symmetric positive definite M-matrix, so the smallest eigenvalue is
simple and the all-ones start vector has positive overlap with the
eigenfunction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigurationError, SolverError
from .mesh import DomainSpec, Field, apply_shifted

__all__ = ["EigenPair", "principal_eigenpair"]

ITERATION_CAP = 10_000


@dataclass(frozen=True, eq=False)
class EigenPair:
    """(lambda1, phi1) with phi1 > 0 on the region, sup-normalized to 1.

    lambda1 is +inf (with phi1 = 0) when the requested region contains no
    interior node. residual is the weighted-l2 norm of L*phi1 - lambda1*phi1.
    """

    lambda1: float
    phi1: Field
    iterations: int
    residual: float


def principal_eigenpair(spec: DomainSpec, region: str = "omega", *,
                        tol: float = 1e-10, cg_tol: float = 1e-12,
                        max_iterations: int = ITERATION_CAP) -> EigenPair:
    """Smallest Dirichlet eigenpair of the negative Laplacian on a region.

    region "omega" uses all interior nodes; "omega0" restricts to nodes
    strictly inside the omega0 boxes and returns the +inf sentinel when
    that set is empty.
    """
    grid = spec.grid
    if region == "omega":
        mask = np.ones(grid.n_total, dtype=bool)
    elif region == "omega0":
        mask = ~spec.constraint_mask.flags
        if not mask.any():
            return EigenPair(math.inf, Field.zeros(grid), 0, 0.0)
    else:
        raise ConfigurationError(f"unknown region {region!r}")

    nx, ny, ihx2, ihy2 = grid._kernel_shape()
    sqrt_vol = math.sqrt(grid.cell_volume)
    x = np.where(mask, 1.0, 0.0)
    x /= math.sqrt(float(x @ x))
    y = x.copy()
    lam = 0.0
    residual = math.inf
    iterations = 0
    for k in range(1, max_iterations + 1):
        iterations = k
        iters, cg_res = _kernels.cg_shifted_laplacian(
            x, y, nx, ny, ihx2, ihy2, 0.0, 1.0, mask, cg_tol, 20 * grid.n_total + 1000)
        if iters < 0:
            raise SolverError("inner CG stalled in inverse power iteration",
                              residual=cg_res)
        ynorm2 = float(y @ y)
        lam = float(x @ y) / ynorm2
        ynorm = math.sqrt(ynorm2)
        # L y = x up to cg_tol, so the eigen-residual of y/|y| is
        # (x - lam*y)/|y| without another operator application.
        r = x - lam * y
        sup = float(np.max(np.abs(y))) / ynorm
        residual = math.sqrt(float(r @ r)) / ynorm / sup * sqrt_vol
        x = y / ynorm
        if residual <= tol:
            break
    else:
        raise SolverError(
            f"inverse power iteration did not converge in {max_iterations} steps",
            residual=residual)

    if float(np.sum(x)) < 0:
        x = -x
    phi = x / float(np.max(x))
    r_true = apply_shifted(phi, grid, 0.0, 1.0, mask) - lam * phi
    residual = math.sqrt(float(r_true @ r_true)) * sqrt_vol
    return EigenPair(lambda1=lam, phi1=Field(grid, phi),
                     iterations=iterations, residual=residual)
