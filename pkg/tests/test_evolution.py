import math

import numpy as np
import pytest

from degparlog import (
    ConfigurationError,
    DivergenceError,
    EvolveParams,
    Field,
    build_grid,
    diffusion_step_implicit,
    evolve,
    heat_supersolution,
    norm,
    principal_eigenpair,
    reaction_step_exact,
    sample_domain,
    smallest_laplacian_eigenvalue,
    subsolution_margin,
)
from oracles import bernoulli_exact, rk4_flow

from degparlog.evolution import _reaction
from degparlog.spectral import EigenPair
from degparlog.mesh import apply_shifted


def grid1(n=3):
    return build_grid(1, (0, 1), n)


def const_spec(g, b0=1.0):
    return sample_domain(g, (), "constant", b0)


def test_reaction_pins():
    g = grid1()
    spec = const_spec(g)
    out = reaction_step_exact(Field.constant(g, 0.5), spec, a=1.0, p=3.0, dt=1.0)
    assert out.values[0] == pytest.approx((1 + 3 * math.exp(-2)) ** -0.5, rel=1e-12)
    assert out.values[0] == pytest.approx(0.8433475, abs=1e-6)

    out = reaction_step_exact(Field.constant(g, 0.5),
                              sample_domain(g, ((0.0, 1.0),), "indicator"),
                              a=1.0, p=3.0, dt=1.0)
    assert out.values[0] == pytest.approx(0.5 * math.e, rel=1e-12)

    for dt in (1e-3, 0.37, 2.0):
        out = reaction_step_exact(Field.constant(g, math.sqrt(2)), const_spec(g),
                                  a=2.0, p=3.0, dt=dt)
        assert out.values[0] == pytest.approx(math.sqrt(2), rel=1e-12)


def test_reaction_matches_closed_form_randomized():
    rng = np.random.RandomState(42)
    g = grid1(1)
    checked = 0
    while checked < 100:
        u = rng.uniform(0.05, 3.0)
        a = rng.uniform(0.0, 5.0) * rng.choice([0.0, 1.0])
        b = rng.choice([0.0, rng.uniform(0.1, 3.0)])
        p = rng.uniform(1.2, 12.0)
        dt = rng.uniform(1e-3, 1.0)
        expected = bernoulli_exact(u, a, b, p, dt)
        if not (1e-12 < expected < 1e12):
            continue
        spec = (const_spec(g, b) if b > 0
                else sample_domain(g, ((0.0, 1.0),), "indicator"))
        got = reaction_step_exact(Field.constant(g, u), spec, a, p, dt).values[0]
        assert got == pytest.approx(expected, rel=1e-12), (u, a, b, p, dt)
        checked += 1
    # fixed point and pure-exponential branches at exact parameters
    assert reaction_step_exact(Field.constant(g, 2.0 ** (1 / 4)), const_spec(g, 1.0),
                               2.0, 5.0, 0.7).values[0] == pytest.approx(2.0 ** 0.25, rel=1e-12)


def test_reaction_matches_independent_integrator():
    g = grid1(1)
    cases = [
        (0.7, 2.0, 1.0, 3.0, 0.5),
        (1.4, 0.0, 0.8, 2.5, 0.8),
        (0.3, -1.0, 0.5, 4.0, 0.6),
        (2.5, 3.0, 2.0, 2.0, 0.4),
    ]
    for u, a, b, p, dt in cases:
        spec = const_spec(g, b)
        got = reaction_step_exact(Field.constant(g, u), spec, a, p, dt).values[0]
        assert got == pytest.approx(rk4_flow(u, a, b, p, dt), rel=1e-9), (u, a, b, p, dt)


def test_reaction_tiny_values_drop_absorption():
    g = grid1(1)
    out = _reaction(np.array([1e-305]), np.array([1.0]), 2.0, 3.0, 0.5)
    assert out[0] == pytest.approx(1e-305 * math.exp(1.0), rel=1e-12)
    out = _reaction(np.array([0.0]), np.array([1.0]), 2.0, 3.0, 0.5)
    assert out[0] == 0.0


def test_reaction_large_p_stable():
    g = grid1(1)
    for u in (1e-9, 0.5, 1.0, 1.01):
        got = reaction_step_exact(Field.constant(g, u), const_spec(g), 20.0, 512.0,
                                  1e-3).values[0]
        assert math.isfinite(got) and got >= 0
    # deep in the stiff regime the flow lands on the fixed point
    got = reaction_step_exact(Field.constant(g, 1.01), const_spec(g, 1.0),
                              20.0, 512.0, 10.0).values[0]
    assert got == pytest.approx(20.0 ** (1 / 511.0), rel=1e-9)


def test_reaction_rejects_negative():
    g = grid1()
    f = Field(g, [0.5, -0.1, 0.2])
    with pytest.raises(ValueError):
        reaction_step_exact(f, const_spec(g), 1.0, 2.0, 0.1)


def test_diffusion_pins():
    g = grid1()
    assert np.all(diffusion_step_implicit(Field.zeros(g), 0.1).values == 0.0)
    f = Field.from_callable(g, lambda x: np.sin(np.pi * x))
    lam = smallest_laplacian_eigenvalue(g)
    out = diffusion_step_implicit(f, 0.1)
    factor = 1.0 / (1.0 + 0.1 * lam)
    assert factor == pytest.approx(0.5161936, abs=1e-6)
    assert np.max(np.abs(out.values - factor * f.values)) < 1e-11


def test_diffusion_residual_contract():
    rng = np.random.RandomState(5)
    for g in [grid1(17), build_grid(2, ((0, 1), (0, 2)), (6, 9))]:
        u = Field(g, rng.randn(g.n_total))
        for cg_tol in (1e-8, 1e-12):
            out = diffusion_step_implicit(u, 0.05, cg_tol=cg_tol)
            resid = apply_shifted(out.values, g, 1.0, 0.05) - u.values
            assert math.sqrt(float(resid @ resid) * g.cell_volume) <= cg_tol


def test_evolve_pure_heat_chain():
    g = grid1()
    f = Field.from_callable(g, lambda x: np.sin(np.pi * x))
    ts = heat_supersolution(f, a=0.0, dt=0.01, t_end=0.1, snapshot_every=5)
    lam = smallest_laplacian_eigenvalue(g)
    for t, l2 in zip(ts.times, ts.l2):
        n = round(t / 0.01)
        assert l2 == pytest.approx(ts.l2[0] / (1 + 0.01 * lam) ** n, rel=1e-9)


def test_heat_supersolution_eigen_factor():
    g = grid1(15)
    f = Field.from_callable(g, lambda x: np.sin(np.pi * x))
    a, dt = 3.0, 0.05
    ts = heat_supersolution(f, a=a, dt=dt, t_end=5 * dt, snapshot_every=1)
    lam = smallest_laplacian_eigenvalue(g)
    factor = math.exp(a * dt) / (1 + dt * lam)
    for k in range(1, len(ts.times)):
        assert ts.sup[k] == pytest.approx(ts.sup[k - 1] * factor, rel=1e-9)


def test_heat_supersolution_a0_sup_nonincreasing():
    g = grid1(31)
    rng = np.random.RandomState(1)
    f = Field(g, rng.uniform(0, 2, g.n_total))
    ts = heat_supersolution(f, a=0.0, dt=0.02, t_end=0.4, snapshot_every=2)
    assert np.all(np.diff(ts.sup) <= 1e-14)


def test_evolve_zero_stays_zero():
    g = grid1(15)
    spec = sample_domain(g, ((0.4, 0.6),), "indicator", 1.0)
    ts = evolve(Field.zeros(g), spec, EvolveParams(a=5.0, p=4.0, dt=0.05, t_end=1.0))
    assert all(np.all(s.values == 0.0) for s in ts.snapshots)


def test_evolve_observables_invariants():
    g = grid1(31)
    spec = const_spec(g)
    eig = principal_eigenpair(spec)
    ts = evolve(Field(g, 0.5 * eig.phi1.values), spec,
                EvolveParams(a=15.0, p=6.0, dt=0.01, t_end=0.5, snapshot_every=7))
    assert np.all(np.diff(ts.times) > 0)
    assert np.all(np.diff(ts.cum_bupp1) >= 0)
    assert ts.dtu_l2[0] == 0.0
    for arr in (ts.sup, ts.l2, ts.h1, ts.dtu_l2, ts.cum_bupp1):
        assert np.all(np.isfinite(arr))
    assert ts.times[-1] == pytest.approx(0.5)


def test_evolve_validates_initial_data():
    g = grid1(9)
    spec = const_spec(g)
    params = EvolveParams(a=1.0, p=2.0, dt=0.1, t_end=1.0)
    with pytest.raises(ConfigurationError):
        evolve(Field(g, [-0.1] + [0.0] * 8), spec, params)
    with pytest.raises(ConfigurationError):
        evolve(Field(g, [1.5] + [0.0] * 8), spec, params)
    # above 1 is allowed strictly inside omega0
    deg = sample_domain(g, ((0.3, 0.7),), "indicator", 1.0)
    inside = ~deg.constraint_mask.flags
    vals = np.where(inside, 1.5, 0.5)
    evolve(Field(g, vals), deg, params)


def test_evolve_params_validation():
    with pytest.raises(ConfigurationError):
        EvolveParams(a=1.0, p=1.0, dt=0.1, t_end=1.0)
    with pytest.raises(ConfigurationError):
        EvolveParams(a=1.0, p=2.0, dt=0.0, t_end=1.0)
    with pytest.raises(ConfigurationError):
        EvolveParams(a=1.0, p=2.0, dt=0.5, t_end=0.1)
    with pytest.raises(ConfigurationError):
        EvolveParams(a=20.0, p=2.0, dt=0.1, t_end=1.0)  # dt above 1/max(a,1)
    EvolveParams(a=20.0, p=2.0, dt=0.05, t_end=1.0)


def test_divergence_error_carries_step():
    g = grid1(5)
    f = Field.constant(g, 1e308)
    with pytest.raises(DivergenceError) as err:
        heat_supersolution(f, a=1.0, dt=1.0, t_end=3.0)
    assert err.value.step == 1


def test_comparison_principle_randomized():
    rng = np.random.RandomState(11)
    g = grid1(63)
    for trial in range(6):
        a = rng.uniform(0, 20)
        p = rng.uniform(1.5, 40)
        dt = rng.uniform(0.2, 0.9) / max(a, 1.0)
        t_end = dt * rng.randint(5, 25)
        boxed = trial % 2 == 0
        spec = (sample_domain(g, ((0.3, 0.5),), "indicator", rng.uniform(0.5, 2))
                if boxed else const_spec(g, rng.uniform(0.5, 2)))
        vals = rng.uniform(0, 1, g.n_total)
        if boxed:
            vals[~spec.constraint_mask.flags] *= 2.0
        u0 = Field(g, vals)
        ts = evolve(u0, spec, EvolveParams(a=a, p=p, dt=dt, t_end=t_end,
                                           snapshot_every=3))
        hs = heat_supersolution(u0, a, dt, t_end, snapshot_every=3)
        for s, h in zip(ts.snapshots, hs.snapshots):
            assert float(np.min(h.values - s.values)) >= -1e-8


def test_comparison_principle_2d():
    rng = np.random.RandomState(12)
    g = build_grid(2, ((0, 1), (0, 1)), (13, 13))
    spec = sample_domain(g, (((0.3, 0.7), (0.3, 0.7)),), "indicator", 1.0)
    vals = rng.uniform(0, 1, g.n_total)
    u0 = Field(g, vals)
    ts = evolve(u0, spec, EvolveParams(a=10.0, p=16.0, dt=0.02, t_end=0.4,
                                       snapshot_every=4))
    hs = heat_supersolution(u0, 10.0, 0.02, 0.4, snapshot_every=4)
    for s, h in zip(ts.snapshots, hs.snapshots):
        assert float(np.min(h.values - s.values)) >= -1e-8


def test_uniform_bound_nondegenerate():
    g = grid1(63)
    a = 2 * math.pi**2
    b0 = 1.0
    spec = const_spec(g, b0)
    x = g.axis_coords(0)
    u0 = Field(g, np.minimum(1.0, np.abs(np.sin(3 * np.pi * x))))
    for p in (2.0, 8.0, 64.0, 512.0):
        ts = evolve(u0, spec, EvolveParams(a=a, p=p, dt=0.01, t_end=2.0,
                                           snapshot_every=10))
        bound = max(1.0, (a / b0) ** (1.0 / (p - 1.0)))
        assert max(float(np.max(s.values)) for s in ts.snapshots) <= bound + 1e-6


def test_energy_budget():
    g = grid1(63)
    a = 12.0
    spec = const_spec(g, 1.0)
    rng = np.random.RandomState(4)
    u0 = Field(g, rng.uniform(0, 1, g.n_total))
    t_end = 1.0
    for p in (2.0, 32.0, 512.0):
        ts = evolve(u0, spec, EvolveParams(a=a, p=p, dt=0.01, t_end=t_end,
                                           snapshot_every=10))
        sup_bound = max(float(np.max(s.values)) for s in ts.snapshots)
        budget = 0.5 * norm(u0, "l2") ** 2 + a * t_end * g.domain_volume * sup_bound**2
        assert ts.cum_bupp1[-1] <= budget


def test_dt_refinement_first_order():
    # The per-step heat factor e^(a dt)/(1+dt lambda) is first-order
    # accurate, so halving dt roughly halves the distance to a 4x-finer
    # run of the same scheme.
    g = grid1(127)
    spec = const_spec(g)
    eig = principal_eigenpair(spec)
    u0 = Field(g, 0.5 * eig.phi1.values)
    a, p = 2 * math.pi**2, 8.0

    def final(dt):
        ts = evolve(u0, spec, EvolveParams(a=a, p=p, dt=dt, t_end=1.0,
                                           snapshot_every=10**9))
        return ts.final.values

    errs = []
    for dt in (0.02, 0.01):
        errs.append(norm(Field(g, final(dt) - final(dt / 4)), "l2"))
    ratio = errs[0] / errs[1]
    assert 1.7 < ratio < 3.5


def test_subsolution_margin_pins():
    g = grid1(9)
    spec = const_spec(g, 1.0)
    phi = Field.from_callable(g, lambda x: np.sin(np.pi * x))
    eig = EigenPair(lambda1=math.pi**2, phi1=phi, iterations=0, residual=0.0)
    a = 2 * math.pi**2
    margin = subsolution_margin(spec, eig, c=0.5, a=a, p=3.0)
    assert margin == pytest.approx(math.pi**2 - 0.25, abs=1e-12)
    assert margin == pytest.approx(9.6196044, abs=1e-7)
    # c -> 0 limit recovers the spectral gap
    assert subsolution_margin(spec, eig, c=1e-12, a=a, p=3.0) == pytest.approx(
        a - math.pi**2, rel=1e-12)
    with pytest.raises(ValueError):
        subsolution_margin(spec, eig, c=0.0, a=a, p=3.0)


def test_subsolution_orbit_stays_above():
    g = grid1(63)
    spec = const_spec(g)
    eig = principal_eigenpair(spec)
    a = 2 * math.pi**2
    for p in (3.0, 10.0):
        c = 1.0
        assert subsolution_margin(spec, eig, c, a, p) >= 0
        floor = c * eig.phi1.values
        ts = evolve(Field(g, floor), spec,
                    EvolveParams(a=a, p=p, dt=0.01, t_end=2.0, snapshot_every=10))
        for s in ts.snapshots:
            assert float(np.min(s.values - floor)) >= -1e-8


def test_evolve_large_p_sup_bracket():
    # Large-p nondegenerate run settles between the obstacle level and
    # the reaction fixed point.
    g = grid1(63)
    spec = const_spec(g)
    eig = principal_eigenpair(spec)
    a = 2 * math.pi**2
    ts = evolve(Field(g, 0.5 * eig.phi1.values), spec,
                EvolveParams(a=a, p=100.0, dt=0.01, t_end=5.0, snapshot_every=100))
    sup = ts.sup[-1]
    assert 1.0 - 0.05 <= sup <= a ** (1.0 / 99.0)


def test_evolve_steady_stop():
    g = grid1(31)
    spec = const_spec(g)
    eig = principal_eigenpair(spec)
    ts = evolve(Field(g, 0.5 * eig.phi1.values), spec,
                EvolveParams(a=2 * math.pi**2, p=4.0, dt=0.01, t_end=50.0,
                             snapshot_every=50),
                steady_tol=1e-9)
    assert ts.stop_reason == "steady"
    assert ts.times[-1] < 50.0


def test_evolve_stop_above():
    g = grid1(31)
    spec = sample_domain(g, ((0.1, 0.9),), "indicator", 1.0)
    eig = principal_eigenpair(spec)
    ts = evolve(Field(g, 0.9 * eig.phi1.values), spec,
                EvolveParams(a=30.0, p=8.0, dt=0.01, t_end=20.0, snapshot_every=10),
                stop_above=2.0)
    assert ts.stop_reason == "sup_threshold"
    assert ts.sup[-1] > 2.0
