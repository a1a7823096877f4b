"""Independent oracles shared by the unit and acceptance suites: dense
step matrices, brute-force LCP enumeration, the naive Bernoulli closed
form, and a plain RK4 integrator for the reaction flow."""

import itertools
import math

import numpy as np


def dense_step_matrix(grid, a, dt):
    """Dense (1/dt) I + L - a I on the grid, row-major."""
    n = grid.n_total
    A = np.zeros((n, n))
    if grid.dim == 1:
        ih2 = 1.0 / grid.h[0] ** 2
        for i in range(n):
            A[i, i] = 1.0 / dt + 2 * ih2 - a
            if i > 0:
                A[i, i - 1] = -ih2
            if i < n - 1:
                A[i, i + 1] = -ih2
        return A
    nx, ny = grid.n
    ihx2 = 1.0 / grid.h[0] ** 2
    ihy2 = 1.0 / grid.h[1] ** 2
    for ix in range(nx):
        for iy in range(ny):
            i = ix * ny + iy
            A[i, i] = 1.0 / dt + 2 * ihx2 + 2 * ihy2 - a
            if ix > 0:
                A[i, i - ny] = -ihx2
            if ix < nx - 1:
                A[i, i + ny] = -ihx2
            if iy > 0:
                A[i, i - 1] = -ihy2
            if iy < ny - 1:
                A[i, i + 1] = -ihy2
    return A


def lcp_enumerate(A, rhs, constrained, obstacle=1.0):
    """Try every active set, solve the reduced system, and return the
    complementary feasible solution (unique for an M-matrix)."""
    n = len(rhs)
    masked = np.where(constrained)[0]
    for bits in itertools.product([False, True], repeat=len(masked)):
        active = np.zeros(n, dtype=bool)
        active[masked[list(bits)]] = True
        u = np.empty(n)
        u[active] = obstacle
        free = ~active
        if free.any():
            u[free] = np.linalg.solve(
                A[np.ix_(free, free)],
                rhs[free] - A[np.ix_(free, active)] @ u[active])
        mult = rhs - A @ u
        if np.all(u[constrained] <= obstacle + 1e-11) and np.all(mult[active] >= -1e-11):
            return u, active
    raise AssertionError("no complementary feasible active set found")


def bernoulli_exact(u, a, b, p, dt):
    """Naive closed-form Bernoulli flow, valid away from under/overflow."""
    if b == 0.0 or u == 0.0:
        return u * math.exp(a * dt)
    if a == 0.0:
        return (u ** (1 - p) + b * (p - 1) * dt) ** (-1.0 / (p - 1))
    z = b / a + (u ** (1 - p) - b / a) * math.exp(-a * (p - 1) * dt)
    return z ** (-1.0 / (p - 1))


def rk4_flow(u, a, b, p, dt, substeps=40000):
    h = dt / substeps
    for _ in range(substeps):
        k1 = a * u - b * u**p
        u2 = u + 0.5 * h * k1
        k2 = a * u2 - b * u2**p
        u3 = u + 0.5 * h * k2
        k3 = a * u3 - b * u3**p
        u4 = u + h * k3
        k4 = a * u4 - b * u4**p
        u = u + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return u
