"""The large-exponent limit objects: a parabolic variational inequality
with obstacle 1 on the constrained region, solved by implicit Euler with
projected SOR on the per-step linear complementarity problem, plus
stationary limits and coincidence sets.

Each implicit Euler step solves, for A = (1/dt)I + L - aI and
rhs = u_n/dt: find u with u <= 1 at constrained nodes, A u = rhs at
unconstrained nodes, and at constrained nodes either u < 1 with the
equation satisfied or u = 1 with a nonnegative multiplier rhs - A u.
dt < 1/a keeps A a coercive M-matrix, so the LCP has a unique solution,
PSOR converges, and the step map preserves nodewise order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigurationError, DivergenceError, SolverError
from .mesh import DomainSpec, Field, Grid, Mask, _l2
from .evolution import TimeSeries, _Recorder

__all__ = [
    "ObstacleSpec",
    "VIResult",
    "parabolic_vi_step",
    "parabolic_vi_evolve",
    "stationary_vi_solve",
    "coincidence_set",
    "complementarity_residual",
    "default_vi_dt",
]

# PSOR pins active nodes to exactly the obstacle; any small tolerance
# identifies them.
ACTIVE_TOL = 1e-12
MAX_SWEEPS = 200_000


@dataclass(frozen=True, eq=False)
class ObstacleSpec:
    """Nodes where u <= obstacle is enforced (all of the domain for the
    nondegenerate problem, the constrained region otherwise)."""

    mask: Mask
    obstacle: float = 1.0

    @classmethod
    def from_domain(cls, spec: DomainSpec) -> "ObstacleSpec":
        return cls(mask=spec.constraint_mask)

    @classmethod
    def everywhere(cls, grid: Grid) -> "ObstacleSpec":
        return cls(mask=Mask(grid, np.ones(grid.n_total, dtype=bool)))


@dataclass(eq=False)
class VIResult:
    """One accepted obstacle step or stationary limit.

    multiplier holds rhs - A*u at active nodes (nonnegative there) and 0
    elsewhere; equation_residual holds rhs - A*u everywhere and
    constrained is the obstacle region, so the complementarity residual
    can be recomputed from the result alone.
    """

    u: Field
    active_set: Mask
    multiplier: Field
    comp_residual: float
    iterations: int
    equation_residual: Field
    constrained: Mask


def _step_arrays(u_n: np.ndarray, obs: ObstacleSpec, a: float, dt: float,
                 tol: float, omega: float, backward: bool,
                 guess: np.ndarray | None = None):
    grid = obs.mask.grid
    if a > 0 and not dt < 1.0 / a:
        raise ConfigurationError(
            f"dt={dt} must be below 1/a={1.0 / a} for a coercive step")
    if not 0.0 < omega < 2.0:
        raise ConfigurationError(f"relaxation factor must lie in (0,2), got {omega}")
    nx, ny, ihx2, ihy2 = grid._kernel_shape()
    diag = 1.0 / dt - a + 2.0 * ihx2 + (2.0 * ihy2 if grid.dim == 2 else 0.0)
    rhs = u_n / dt
    scale = float(np.max(np.abs(u_n))) if u_n.size else 0.0
    # below this the absolute tolerance drowns in rounding of A*u itself,
    # which only happens when the state has grown beyond the problem scale
    floor = 0.1 * np.finfo(float).eps * diag * max(1.0, scale)
    if tol < floor:
        raise DivergenceError(
            f"state scale {scale:.3e} makes the step tolerance {tol:.1e} "
            f"unreachable; growth regime")
    u = (u_n if guess is None else guess).copy()
    sweeps, res = _kernels.psor_solve(
        u, rhs, nx, ny, ihx2, ihy2, diag, obs.mask.flags, obs.obstacle,
        omega, tol, MAX_SWEEPS, backward)
    if sweeps < 0:
        raise SolverError(
            f"projected SOR hit the sweep cap at residual {res:.3e}", residual=res)
    return u, rhs, sweeps, res


def _result_from(u: np.ndarray, rhs: np.ndarray, obs: ObstacleSpec, a: float,
                 dt: float, sweeps: int, res: float) -> VIResult:
    grid = obs.mask.grid
    nx, ny, ihx2, ihy2 = grid._kernel_shape()
    au = np.empty(grid.n_total)
    full = np.ones(grid.n_total, dtype=bool)
    _kernels.apply_shifted_laplacian(u, au, nx, ny, ihx2, ihy2, 1.0 / dt - a, 1.0, full)
    eq_res = rhs - au
    active = obs.mask.flags & (u >= obs.obstacle - ACTIVE_TOL)
    return VIResult(
        u=Field(grid, u),
        active_set=Mask(grid, active),
        multiplier=Field(grid, np.where(active, eq_res, 0.0)),
        comp_residual=res,
        iterations=sweeps,
        equation_residual=Field(grid, eq_res),
        constrained=obs.mask)


def parabolic_vi_step(u_n: Field, spec: ObstacleSpec, a: float, dt: float,
                      tol: float = 1e-9, *, omega: float = 1.5,
                      sweep_order: str = "forward") -> VIResult:
    """One implicit Euler step of the obstacle evolution via PSOR.

    Solves the step LCP to a natural residual <= tol with lexicographic
    sweeps (sweep_order "backward" reverses them, for reproducibility
    studies). The unconstrained solve is returned exactly when it stays
    below the obstacle.
    """
    if spec.mask.flags.any() and np.any(u_n.values[spec.mask.flags] > spec.obstacle + ACTIVE_TOL):
        raise ConfigurationError("previous iterate violates the obstacle")
    backward = {"forward": False, "backward": True}.get(sweep_order)
    if backward is None:
        raise ConfigurationError(f"unknown sweep order {sweep_order!r}")
    u, rhs, sweeps, res = _step_arrays(u_n.values, spec, a, dt, tol, omega, backward)
    return _result_from(u, rhs, spec, a, dt, sweeps, res)


def parabolic_vi_evolve(u0: Field, spec: ObstacleSpec, a: float, dt: float,
                        t_end: float, *, tol: float = 1e-8, omega: float = 1.5,
                        sweep_order: str = "forward", snapshot_every: int = 10,
                        stop_above: float | None = None,
                        steady_tol: float | None = None) -> TimeSeries:
    """Iterate parabolic_vi_step, recording the evolve observables plus
    the active-set measure per snapshot."""
    if np.any(u0.values < 0):
        raise ConfigurationError("initial data must be nonnegative")
    if spec.mask.flags.any() and np.any(u0.values[spec.mask.flags] > spec.obstacle + ACTIVE_TOL):
        raise ConfigurationError("initial data must respect the obstacle")
    backward = {"forward": False, "backward": True}.get(sweep_order)
    if backward is None:
        raise ConfigurationError(f"unknown sweep order {sweep_order!r}")

    grid = u0.grid
    cell = grid.cell_volume
    n_steps = max(1, int(round(t_end / dt)))
    rec = _Recorder(grid, track_active=True)
    u = u0.values.copy()
    active0 = spec.mask.flags & (u >= spec.obstacle - ACTIVE_TOL)
    rec.record(0.0, u, float(np.max(u)) if u.size else 0.0, 0.0, 0.0,
               active=float(np.count_nonzero(active0)) * cell)
    stop_reason = stop_time = None
    for step in range(1, n_steps + 1):
        t = step * dt
        u_prev = u
        u, _, sweeps, res = _step_arrays(u_prev, spec, a, dt, tol, omega, backward)
        sup = float(np.max(u))
        if not math.isfinite(sup):
            raise DivergenceError(
                f"trajectory left the finite range at step {step} (t={t:g})",
                step=step, time=t)
        dtu = _l2((u - u_prev) / dt, cell)
        if stop_above is not None and sup > stop_above:
            stop_reason, stop_time = "sup_threshold", t
        elif steady_tol is not None and dtu <= steady_tol:
            stop_reason, stop_time = "steady", t
        if step % snapshot_every == 0 or step == n_steps or stop_reason:
            active = spec.mask.flags & (u >= spec.obstacle - ACTIVE_TOL)
            rec.record(t, u, sup, dtu, 0.0,
                       active=float(np.count_nonzero(active)) * cell)
        if stop_reason:
            break
    return rec.build(stop_reason, stop_time)


def default_vi_dt(a: float) -> float:
    """Coercivity margin plus temporal accuracy: min(1/(2a), 1e-2)."""
    return min(1.0 / (2.0 * a), 1e-2) if a > 0 else 1e-2


def stationary_vi_solve(spec: ObstacleSpec, a: float, seed: Field,
                        dt: float | None = None, steady_tol: float = 1e-7, *,
                        tol: float = 1e-9, omega: float = 1.5,
                        t_max: float = 500.0) -> VIResult:
    """Long-time limit of the obstacle evolution from a nonnegative seed.

    Integrates until the backward-difference time derivative has l2 norm
    <= steady_tol and returns the terminal step. A growing l2 norm beyond
    10*sqrt(|domain|) raises DivergenceError, signalling a growth rate at
    or above the principal eigenvalue of the unconstrained region.
    """
    if np.any(seed.values < 0):
        raise ConfigurationError("seed must be nonnegative")
    if spec.mask.flags.any() and np.any(seed.values[spec.mask.flags] > spec.obstacle + ACTIVE_TOL):
        raise ConfigurationError("seed must respect the obstacle")
    if dt is None:
        dt = default_vi_dt(a)
    grid = spec.mask.grid
    growth_cap = 10.0 * math.sqrt(grid.domain_volume)
    cell = grid.cell_volume
    n_steps = max(1, int(round(t_max / dt)))
    u = seed.values.copy()
    for step in range(1, n_steps + 1):
        u_prev = u
        u, rhs, sweeps, res = _step_arrays(u_prev, spec, a, dt, tol, omega, False)
        if not math.isfinite(float(np.max(u))):
            raise DivergenceError("stationary solve diverged",
                                  step=step, time=step * dt)
        if _l2(u, cell) > growth_cap:
            raise DivergenceError(
                "l2 growth guard tripped: the growth rate is at or above the "
                "principal eigenvalue of the unconstrained region",
                step=step, time=step * dt)
        if _l2((u - u_prev) / dt, cell) <= steady_tol:
            return _result_from(u, rhs, spec, a, dt, sweeps, res)
    raise SolverError(
        f"no steady state reached before t={t_max} (steady_tol={steady_tol})")


def coincidence_set(u: Field, spec: ObstacleSpec, eps: float = 1e-6) -> Mask:
    """Constrained nodes with u >= obstacle - eps."""
    if not eps > 0:
        raise ConfigurationError(f"eps must be positive, got {eps}")
    return Mask(u.grid, spec.mask.flags & (u.values >= spec.obstacle - eps))


def complementarity_residual(r: VIResult) -> float:
    """Natural residual recomputed from a VIResult: max over constrained
    nodes of |min(obstacle - u, rhs - A u)|, and the plain equation
    residual at unconstrained nodes."""
    eq = r.equation_residual.values
    gap = 1.0 - r.u.values
    score = np.where(r.constrained.flags, np.minimum(gap, eq), eq)
    return float(np.max(np.abs(score))) if score.size else 0.0
