"""Convergence studies: the large-exponent limit, the long-time
trichotomy, coincidence-set convergence, and the commuting limit diagram.

Each study returns a SweepReport holding aligned metric columns, scalar
metrics, and named pass/fail checks; the CLI serializes reports to JSON
and CSV. Studies are deterministic: solvers are deterministic, sweep
entries are merged keyed by parameter value, and thread fan-out does not
change results.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DivergenceError
from .evolution import EvolveParams, TimeSeries, evolve
from .mesh import DomainSpec, Field, Mask, _h1_semi, _l2, norm
from .obstacle import (
    ObstacleSpec,
    coincidence_set,
    default_vi_dt,
    parabolic_vi_evolve,
    stationary_vi_solve,
)
from .spectral import EigenPair, principal_eigenpair

__all__ = [
    "ProblemSetup",
    "Check",
    "SweepReport",
    "p_sweep",
    "longtime_study",
    "coincidence_convergence",
    "commuting_diagram",
    "decay_rate_fit",
    "subsolution_certificate",
]


@dataclass(frozen=True, eq=False)
class ProblemSetup:
    """Shared run configuration: domain, rates, steps, seeds, tolerances."""

    spec: DomainSpec
    a: float
    dt: float = 1e-3
    t_end: float = 2.0
    snapshot_every: int = 10
    u0_kind: str = "phi1"  # phi1 | constant | field
    u0_scale: float = 0.5
    u0_field: Field | None = None
    cg_tol: float = 1e-10
    vi_dt: float | None = None
    vi_tol: float = 1e-8
    vi_omega: float = 1.5
    steady_tol: float = 1e-7
    eps: float = 1e-6
    t_max: float = 500.0

    def build_u0(self, eig: EigenPair) -> Field:
        if self.u0_kind == "phi1":
            return Field(self.spec.grid, self.u0_scale * eig.phi1.values)
        if self.u0_kind == "constant":
            return Field.constant(self.spec.grid, self.u0_scale)
        if self.u0_kind == "field":
            if self.u0_field is None:
                raise ConfigurationError("u0_kind 'field' needs u0_field")
            return self.u0_field
        raise ConfigurationError(f"unknown u0 kind {self.u0_kind!r}")


@dataclass
class Check:
    name: str
    passed: bool
    detail: str


@dataclass(eq=False)
class SweepReport:
    """Tabular study output plus named assertions."""

    kind: str
    table: dict[str, list]
    metrics: dict[str, float]
    checks: list[Check]
    meta: dict
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "table": {k: list(v) for k, v in self.table.items()},
            "metrics": dict(self.metrics),
            "checks": [vars(c) for c in self.checks],
            "meta": dict(self.meta),
            "notes": list(self.notes),
            "passed": self.passed,
        }


def _meta(problem: ProblemSetup, eig_omega: EigenPair,
          eig_omega0: EigenPair | None = None, **extra) -> dict:
    grid = problem.spec.grid
    meta = {
        "dim": grid.dim,
        "extents": [list(e) for e in grid.extents],
        "n": list(grid.n),
        "omega0": [[list(side) for side in box] for box in problem.spec.omega0],
        "b_kind": problem.spec.b_kind,
        "a": problem.a,
        "dt": problem.dt,
        "t_end": problem.t_end,
        "snapshot_every": problem.snapshot_every,
        "u0_kind": problem.u0_kind,
        "u0_scale": problem.u0_scale,
        "cg_tol": problem.cg_tol,
        "vi_dt": problem.vi_dt if problem.vi_dt is not None else default_vi_dt(problem.a),
        "vi_tol": problem.vi_tol,
        "vi_omega": problem.vi_omega,
        "steady_tol": problem.steady_tol,
        "eps": problem.eps,
        "lambda1_omega": eig_omega.lambda1,
    }
    if eig_omega0 is not None:
        meta["lambda1_omega0"] = (
            eig_omega0.lambda1 if math.isfinite(eig_omega0.lambda1) else "inf")
    meta.update(extra)
    return meta


def _h1_distance(f: Field, g: Field) -> float:
    return _h1_semi(f.values - g.values, f.grid)


def _l2_distance(f: Field, g: Field) -> float:
    return _l2(f.values - g.values, f.grid.cell_volume)


def _trajectory_h1_error(series: TimeSeries, reference: TimeSeries) -> float:
    """Rectangle-rule l2-in-time H1 distance over common snapshot times."""
    if series.times.shape != reference.times.shape or np.any(series.times != reference.times):
        raise ConfigurationError("trajectories were recorded at different times")
    widths = np.diff(series.times)
    total = 0.0
    for k in range(1, len(series.times)):
        err = _h1_distance(series.snapshots[k], reference.snapshots[k])
        total += err * err * widths[k - 1]
    return math.sqrt(total)


def _mask_sup_excess(series: TimeSeries, mask: Mask, t_from: float) -> float:
    """max(0, max over snapshots with t >= t_from of u - 1 on the mask)."""
    if not mask.flags.any():
        return 0.0
    worst = 0.0
    for t, snap in zip(series.times, series.snapshots):
        if t < t_from:
            continue
        worst = max(worst, float(np.max(snap.values[mask.flags])) - 1.0)
    return max(0.0, worst)


def p_sweep(problem: ProblemSetup, p_list, *, monotone_from: float = 8.0,
            ratio_check: tuple[float, float, float] | None = (256.0, 8.0, 0.25),
            sup_excess_cap: float = 0.05, threads: int = 1) -> SweepReport:
    """Run the logistic evolution for each p against the obstacle
    evolution on identical grids and steps; E(p) is the l2-in-time H1
    distance and the sup-excess quantifies constraint violation on the
    constrained region over the second half of the horizon."""
    p_list = sorted(float(p) for p in p_list)
    if not p_list:
        raise ConfigurationError("p_list is empty")
    spec = problem.spec
    eig = principal_eigenpair(spec)
    u0 = problem.build_u0(eig)
    obs = ObstacleSpec.from_domain(spec)
    try:
        limit = parabolic_vi_evolve(
            u0, obs, problem.a, problem.dt, problem.t_end, tol=problem.vi_tol,
            omega=problem.vi_omega, snapshot_every=problem.snapshot_every)
    except DivergenceError as div:
        return SweepReport(
            kind="psweep",
            table={"p": [], "E": [], "sup_excess": []},
            metrics={"E_last": math.nan},
            checks=[Check("sweep_completed", False,
                          f"reference obstacle run diverged: {div}")],
            meta=_meta(problem, eig, principal_eigenpair(spec, "omega0"),
                       p_list=list(p_list)),
            notes=[f"sweep aborted by divergence in the reference run: {div}"])

    def run_one(p: float):
        params = EvolveParams(a=problem.a, p=p, dt=problem.dt, t_end=problem.t_end,
                              snapshot_every=problem.snapshot_every,
                              cg_tol=problem.cg_tol)
        series = evolve(u0, spec, params)
        return (_trajectory_h1_error(series, limit),
                _mask_sup_excess(series, spec.constraint_mask, problem.t_end / 2.0))

    errors: list[float] = []
    excesses: list[float] = []
    notes: list[str] = []
    completed: list[float] = []
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [(p, pool.submit(run_one, p)) for p in p_list]
            for p, fut in futures:
                try:
                    err, exc = fut.result()
                except DivergenceError as div:
                    notes.append(f"sweep aborted by divergence at p={p:g}: {div}")
                    break
                completed.append(p)
                errors.append(err)
                excesses.append(exc)
    else:
        for p in p_list:
            try:
                err, exc = run_one(p)
            except DivergenceError as div:
                notes.append(f"sweep aborted by divergence at p={p:g}: {div}")
                break
            completed.append(p)
            errors.append(err)
            excesses.append(exc)

    checks = []
    if len(completed) == len(p_list):
        tail = [(p, e) for p, e in zip(completed, errors) if p >= monotone_from]
        mono = all(b[1] <= a[1] for a, b in zip(tail, tail[1:]))
        checks.append(Check(
            "E_nonincreasing",
            mono,
            f"E over p >= {monotone_from}: " + ", ".join(f"{e:.4g}" for _, e in tail)))
        if ratio_check is not None:
            p_hi, p_lo, ratio = ratio_check
            if p_hi in completed and p_lo in completed:
                e_hi = errors[completed.index(p_hi)]
                e_lo = errors[completed.index(p_lo)]
                checks.append(Check(
                    "E_ratio",
                    e_hi <= ratio * e_lo,
                    f"E({p_hi:g})={e_hi:.4g} vs {ratio}*E({p_lo:g})={ratio * e_lo:.4g}"))
        checks.append(Check(
            "mask_sup_excess",
            excesses[-1] <= sup_excess_cap,
            f"excess at p={completed[-1]:g} is {excesses[-1]:.4g} (cap {sup_excess_cap})"))
    else:
        checks.append(Check("sweep_completed", False,
                            f"completed {len(completed)} of {len(p_list)} entries"))

    return SweepReport(
        kind="psweep",
        table={"p": completed, "E": errors, "sup_excess": excesses},
        metrics={"E_last": errors[-1] if errors else math.nan},
        checks=checks,
        meta=_meta(problem, eig, principal_eigenpair(spec, "omega0"),
                   p_list=p_list),
        notes=notes)


def longtime_study(problem: ProblemSetup, regime: str, *,
                   growth_threshold: float = 2.0, rate_rtol: float = 0.10,
                   fit_window: tuple[float, float] | None = None,
                   h1_cap: float = 1e-3, sup_tol: float = 1e-2,
                   t_end: float | None = None) -> SweepReport:
    """Long-time behaviour of the obstacle evolution in one of the three
    growth regimes, which must bracket a consistently with the computed
    eigenvalues before any run starts."""
    spec = problem.spec
    a = problem.a
    eig = principal_eigenpair(spec)
    eig0 = principal_eigenpair(spec, "omega0")
    lam, lam0 = eig.lambda1, eig0.lambda1
    expected = ("subcritical" if a < lam
                else "intermediate" if a < lam0 else "supercritical")
    if regime != expected:
        raise ConfigurationError(
            f"regime {regime!r} inconsistent with lambda1(omega)={lam:.6g}, "
            f"lambda1(omega0)={lam0:.6g}, a={a:.6g} (computed: {expected})")
    obs = ObstacleSpec.from_domain(spec)
    u0 = problem.build_u0(eig)
    vi_dt = problem.vi_dt if problem.vi_dt is not None else default_vi_dt(a)
    horizon = t_end if t_end is not None else problem.t_end
    checks: list[Check] = []
    metrics: dict[str, float] = {}
    notes: list[str] = []

    if regime == "subcritical":
        series = parabolic_vi_evolve(
            u0, obs, a, vi_dt, horizon, tol=problem.vi_tol,
            omega=problem.vi_omega, snapshot_every=problem.snapshot_every)
        window = fit_window if fit_window is not None else (horizon / 4.0, horizon)
        rate = -decay_rate_fit(series, window)
        target = lam - a
        metrics["decay_rate"] = rate
        metrics["decay_rate_target"] = target
        checks.append(Check(
            "decay_rate",
            abs(rate - target) <= rate_rtol * abs(target),
            f"fitted {rate:.6g} vs lambda1-a={target:.6g} (rtol {rate_rtol})"))
        table = {"t": list(series.times), "l2": list(series.l2),
                 "h1": list(series.h1), "sup": list(series.sup)}
    elif regime == "intermediate":
        w = stationary_vi_solve(obs, a, u0, vi_dt, problem.steady_tol,
                                tol=problem.vi_tol, omega=problem.vi_omega,
                                t_max=problem.t_max)
        series = parabolic_vi_evolve(
            u0, obs, a, vi_dt, horizon, tol=problem.vi_tol,
            omega=problem.vi_omega, snapshot_every=problem.snapshot_every)
        terminal = _h1_distance(series.final, w.u)
        sup_w = norm(w.u, "linf")
        metrics["terminal_h1_distance"] = terminal
        metrics["w_sup"] = sup_w
        metrics["w_active_measure"] = w.active_set.measure
        checks.append(Check(
            "terminal_h1",
            terminal <= h1_cap,
            f"|u(T)-w|_H1 = {terminal:.4g} (cap {h1_cap})"))
        if not spec.omega0:
            checks.append(Check(
                "w_sup_is_one",
                abs(sup_w - 1.0) <= sup_tol,
                f"|w|_inf = {sup_w:.6g} (within {sup_tol} of 1)"))
        table = {"t": list(series.times), "l2": list(series.l2),
                 "h1": list(series.h1), "sup": list(series.sup)}
    else:
        series = parabolic_vi_evolve(
            u0, obs, a, vi_dt, horizon, tol=problem.vi_tol,
            omega=problem.vi_omega, snapshot_every=problem.snapshot_every,
            stop_above=growth_threshold)
        hit = series.stop_reason == "sup_threshold"
        metrics["growth_hit_time"] = series.stop_time if hit else math.nan
        checks.append(Check(
            "growth_detected",
            hit,
            f"sup crossed {growth_threshold} at t="
            f"{series.stop_time if hit else 'never'} (horizon {horizon})"))
        table = {"t": list(series.times), "l2": list(series.l2),
                 "h1": list(series.h1), "sup": list(series.sup)}

    return SweepReport(
        kind="longtime",
        table=table,
        metrics=metrics,
        checks=checks,
        meta=_meta(problem, eig, eig0, regime=regime,
                   growth_threshold=growth_threshold),
        notes=notes)


def coincidence_convergence(problem: ProblemSetup, *, terminal_cells: float = 2.0,
                            tail_fraction: float = 0.5) -> SweepReport:
    """Symmetric-difference measure between the transient coincidence set
    and the stationary one, along the trajectory (nondegenerate only)."""
    spec = problem.spec
    if not spec.constraint_mask.flags.all():
        raise ConfigurationError(
            "coincidence convergence needs the nondegenerate problem "
            "(constraint on every node)")
    a = problem.a
    eig = principal_eigenpair(spec)
    obs = ObstacleSpec.from_domain(spec)
    u0 = problem.build_u0(eig)
    vi_dt = problem.vi_dt if problem.vi_dt is not None else default_vi_dt(a)
    w = stationary_vi_solve(obs, a, u0, vi_dt, problem.steady_tol,
                            tol=problem.vi_tol, omega=problem.vi_omega,
                            t_max=problem.t_max)
    target = coincidence_set(w.u, obs, problem.eps)
    series = parabolic_vi_evolve(
        u0, obs, a, vi_dt, problem.t_end, tol=problem.vi_tol,
        omega=problem.vi_omega, snapshot_every=problem.snapshot_every)
    cell = spec.grid.cell_volume
    sym = []
    for snap in series.snapshots:
        mask = coincidence_set(snap, obs, problem.eps)
        sym.append(float(np.count_nonzero(mask.flags ^ target.flags)) * cell)

    terminal = sym[-1]
    cap = terminal_cells * cell
    tail_start = tail_fraction * series.times[-1]
    tail = [m for t, m in zip(series.times, sym) if t >= tail_start]
    mono = all(b <= a_ for a_, b in zip(tail, tail[1:]))
    notes = []
    if target.measure <= 4 * cell:
        notes.append(
            f"near-critical regime: stationary coincidence set measure "
            f"{target.measure:.3g} is within quantization of empty")
    checks = [
        Check("terminal_symmetric_difference", terminal <= cap,
              f"terminal measure {terminal:.4g} (cap {cap:.4g} = "
              f"{terminal_cells:g} cells)"),
        Check("eventually_nonincreasing", mono,
              f"{len(tail)} tail samples from t={tail_start:g}"),
    ]
    return SweepReport(
        kind="coincidence",
        table={"t": list(series.times), "sym_diff": sym,
               "active_measure": list(series.active_measure)},
        metrics={"terminal_sym_diff": terminal,
                 "stationary_active_measure": target.measure},
        checks=checks,
        meta=_meta(problem, eig, principal_eigenpair(spec, "omega0"),
                   terminal_cells=terminal_cells),
        notes=notes)


def commuting_diagram(problem: ProblemSetup, p_max: float, *,
                      t_max_transient: float = 2.0,
                      steady_tol: float | None = None,
                      discrepancy_cap: float = 5e-2) -> SweepReport:
    """Compare the two limit orders: the long-time limit of the logistic
    run at p_max (corner A) against the long-time obstacle limit (corner
    B), plus the transient distance at a common finite horizon."""
    spec = problem.spec
    a = problem.a
    eig = principal_eigenpair(spec)
    obs = ObstacleSpec.from_domain(spec)
    u0 = problem.build_u0(eig)
    stol = steady_tol if steady_tol is not None else problem.steady_tol
    vi_dt = problem.vi_dt if problem.vi_dt is not None else default_vi_dt(a)
    checks: list[Check] = []
    metrics: dict[str, float] = {}
    notes: list[str] = []
    try:
        series_a = evolve(
            u0, spec,
            EvolveParams(a=a, p=p_max, dt=problem.dt, t_end=problem.t_max,
                         snapshot_every=problem.snapshot_every,
                         cg_tol=problem.cg_tol),
            steady_tol=stol)
        if series_a.stop_reason != "steady":
            notes.append("corner A hit the horizon before the steady tolerance")
        corner_a = series_a.final
        corner_b = stationary_vi_solve(obs, a, u0, vi_dt, stol,
                                       tol=problem.vi_tol, omega=problem.vi_omega,
                                       t_max=problem.t_max).u
        transient_p = evolve(
            u0, spec,
            EvolveParams(a=a, p=p_max, dt=problem.dt, t_end=t_max_transient,
                         snapshot_every=problem.snapshot_every,
                         cg_tol=problem.cg_tol))
        transient_vi = parabolic_vi_evolve(
            u0, obs, a, problem.dt, t_max_transient, tol=problem.vi_tol,
            omega=problem.vi_omega, snapshot_every=problem.snapshot_every)
        discrepancy = _l2_distance(corner_a, corner_b)
        transient = _l2_distance(transient_p.final, transient_vi.final)
        metrics["discrepancy_l2"] = discrepancy
        metrics["transient_l2"] = transient
        metrics["steady_time_logistic"] = (
            series_a.stop_time if series_a.stop_time is not None else math.nan)
        checks.append(Check(
            "diagram_discrepancy",
            discrepancy <= discrepancy_cap,
            f"|A-B|_2 = {discrepancy:.4g} (cap {discrepancy_cap})"))
        pts = spec.grid.coords()
        table = {"x": [float(v) for v in pts[:, 0]]}
        if spec.grid.dim == 2:
            table["y"] = [float(v) for v in pts[:, 1]]
        table["corner_A"] = list(corner_a.values)
        table["corner_B"] = list(corner_b.values)
    except DivergenceError as exc:
        notes.append(f"diagram aborted by divergence (regime note): {exc}")
        checks.append(Check("diagram_completed", False, str(exc)))
        table = {}
    return SweepReport(
        kind="diagram",
        table=table,
        metrics=metrics,
        checks=checks,
        meta=_meta(problem, eig, principal_eigenpair(spec, "omega0"),
                   p_max=p_max, t_max_transient=t_max_transient),
        notes=notes)


def decay_rate_fit(series: TimeSeries, window: tuple[float, float]) -> float:
    """Least-squares slope of log(l2 norm) over the window."""
    t0, t1 = window
    sel = (series.times >= t0) & (series.times <= t1)
    if int(np.count_nonzero(sel)) < 3:
        raise ValueError("decay fit needs at least 3 samples in the window")
    values = series.l2[sel]
    if np.any(values <= 0):
        raise ValueError("decay fit needs positive l2 values on the window")
    return float(np.polyfit(series.times[sel], np.log(values), 1)[0])


def subsolution_certificate(spec: DomainSpec, eig: EigenPair, a: float, p: float,
                            *, c_max: float = 1.0, bisection_steps: int = 60) -> float:
    """Largest c in (0, c_max] whose scaled eigenfunction certificate is
    nonnegative, found by bisection (the margin decreases in c)."""
    from .evolution import subsolution_margin

    if not a > eig.lambda1:
        raise ConfigurationError("certificate needs a above lambda1")
    if subsolution_margin(spec, eig, c_max, a, p) >= 0:
        return c_max
    lo, hi = 0.0, c_max
    for _ in range(bisection_steps):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if subsolution_margin(spec, eig, mid, a, p) >= 0:
            lo = mid
        else:
            hi = mid
    if lo == 0.0:
        raise ConfigurationError("no positive certificate scale found")
    return lo
