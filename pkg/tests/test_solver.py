from types import SimpleNamespace

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from wickcgl.dyadic import BesovParams, besov_norm, partition_for
from wickcgl.errors import BlowUpError, ConfigurationError, InputError
from wickcgl.ou import OUState, wick_bundle
from wickcgl.solver import (GalerkinOperators, Simulation, SolverConfig, SplitState, critical_p,
                            cubic_flow_values, dissipativity_delta, lp_energy_residual,
                            nonlinearity_psi, scalar_mode0_rhs, step_galerkin_sde, step_shifted)
from wickcgl.spectral import Grid, PhysParams, SpectralField, cutoff_array
from wickcgl import studies


def _field(grid, rng, scale=0.3):
    c = (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)) * grid.mask * scale
    return SpectralField(grid, c)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        SolverConfig(scheme="rk4")
    with pytest.raises(ConfigurationError):
        SolverConfig(h=0.0)
    with pytest.raises(ConfigurationError):
        SolverConfig(h=0.1, T=0.01)
    with pytest.raises(ConfigurationError):
        SolverConfig(lp_exponents=(1,))
    assert SolverConfig(h=1e-3, T=0.25).steps == 250


def test_frozen_constants():
    assert critical_p(1.0) == pytest.approx(6.82842712474619, rel=1e-14)
    assert dissipativity_delta(1.0, 4.0) == pytest.approx(0.5857864376269049, rel=1e-14)
    assert dissipativity_delta(1.0, critical_p(1.0)) == pytest.approx(0.0, abs=1e-12)


def test_cubic_flow_frozen():
    out = cubic_flow_values(np.array([1 + 1j]), 0.5, 1 + 0.5j, 0.01)
    assert out[0] == pytest.approx(0.9950862 + 0.98537797j, abs=1e-7)


def test_cubic_flow_matches_ode():
    v0, c, nu, h = 0.8 - 0.6j, 0.3, 1.2 + 0.7j, 0.05
    f = lambda t, y: (-nu * (abs(complex(*y)) ** 2 - 2 * c) * complex(*y))
    sol = solve_ivp(lambda t, y: [f(t, y).real, f(t, y).imag], (0, h), [v0.real, v0.imag],
                    rtol=1e-12, atol=1e-14)
    ref = complex(*sol.y[:, -1])
    assert cubic_flow_values(np.array([v0]), c, nu, h)[0] == pytest.approx(ref, abs=1e-10)


def test_psi_without_noise_is_deterministic_cubic(rng):
    grid = Grid(4)
    params = PhysParams(1.0, 1 + 0.5j, 0.2)
    Y = _field(grid, rng)
    zb = wick_bundle(grid.zeros(), 0.0)
    got = nonlinearity_psi(Y, zb, params).coeffs
    Yv = Y.to_grid()
    want = grid.from_grid((1 + params.lam) * Yv - params.nu * np.abs(Yv) ** 2 * Yv)
    assert np.allclose(got, want, atol=1e-12)


def test_psi_with_zero_remainder(rng):
    grid = Grid(4)
    params = PhysParams(1.0, 1 - 0.3j, -0.4)
    Z = _field(grid, rng)
    zb = wick_bundle(Z, 0.7)
    got = nonlinearity_psi(grid.zeros(), zb, params).to_grid()
    want = (1 + params.lam) * Z.to_grid() - params.nu * zb.z21.to_grid()
    assert np.allclose(got, want, atol=1e-12)


def test_psi_vanishes_when_linear_and_cubic_parts_cancel(rng):
    grid = Grid(4)
    params = SimpleNamespace(mu=1.0, nu=0j, lam=-1 + 0j)
    zb = wick_bundle(_field(grid, rng), 0.5)
    assert np.abs(nonlinearity_psi(_field(grid, rng), zb, params).coeffs).max() == 0


def test_psi_grid_mismatch():
    with pytest.raises(InputError):
        nonlinearity_psi(Grid(4).zeros(), wick_bundle(Grid(8).zeros(), 0.0), PhysParams())


def test_linear_decay_of_remainder(rng):
    grid = Grid(6)
    params = SimpleNamespace(mu=1.0, nu=0j, lam=-1 + 0j)
    h = 1e-2
    ops = GalerkinOperators(grid, params, h)
    Y = _field(grid, rng)
    state = SplitState(0.0, Y, OUState(0.0, grid.zeros(), 0), 0.0)
    for _ in range(5):
        state = step_shifted(state, ops)
    assert np.allclose(state.Y.coeffs, np.exp(-5 * h * ops.lamA) * Y.coeffs, atol=1e-14)


def test_galerkin_linear_flow_exact(rng):
    grid = Grid(6)
    params = SimpleNamespace(mu=0.7, nu=0j, lam=0.3 - 0.2j)
    h = 5e-3
    ops = GalerkinOperators(grid, params, h)
    u = _field(grid, rng)
    v = u
    for _ in range(7):
        v = step_galerkin_sde(v, 0.4, h, None, params, ops)
    assert np.allclose(v.coeffs, np.exp(-7 * h * ops.L) * u.coeffs, atol=1e-14)


def test_constant_shift_changes_drift_linearly(rng):
    grid = Grid(6)
    params = PhysParams(1.0, 1.3 + 0.4j, 0.0)
    ops = GalerkinOperators(grid, params, 1e-3)
    u = _field(grid, rng)
    dc = 0.37
    diff = ops.cubic_drift(u.coeffs, 0.2 + dc) - ops.cubic_drift(u.coeffs, 0.2)
    assert np.allclose(diff, 2 * params.nu * dc * cutoff_array(grid) * u.coeffs, atol=1e-12)


def _one_step_mode0(h, y0, params):
    cfg = SolverConfig(params=params, n=4, h=h, T=h, noise=False, c_value=0.0)
    sim = Simulation(cfg).initialise(u0=cfg.grid.mode((0, 0), y0))
    sim.advance()
    return sim.u.coeffs[0, 4, 4]


def test_mode0_local_error_is_second_order():
    params = PhysParams(1.0, 1 + 0.5j, 0.3 + 0.1j)
    y0 = 0.9 + 0.4j
    errs = []
    for h in (1e-2, 5e-3, 2.5e-3):
        f = lambda t, y: scalar_mode0_rhs(complex(*y), params.lam, params.nu)
        sol = solve_ivp(lambda t, y: [f(t, y).real, f(t, y).imag], (0, h), [y0.real, y0.imag],
                        rtol=1e-13, atol=1e-15)
        errs.append(abs(_one_step_mode0(h, y0, params) - complex(*sol.y[:, -1])))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios > 3.4) & (ratios < 4.6)), ratios


def test_large_data_comes_down_noise_free():
    params = PhysParams(1.0, 1.0, 0.0)
    h = 1e-3
    cfg = SolverConfig(params=params, n=4, h=h, T=0.05, noise=False, scheme="galerkin_cubic_flow",
                       c_value=0.0)
    sim = Simulation(cfg).initialise(u0=cfg.grid.mode((0, 0), 1e4))
    for k in range(1, cfg.steps + 1):
        sim.advance()
        assert abs(sim.u.coeffs[0, 4, 4]) <= (2 * k * h) ** -0.5 * (1 + 1e-9)


def test_determinism_and_replica_split():
    cfg = SolverConfig(n=6, h=1e-3, T=0.01, replicas=4, seed=9)
    a = Simulation(cfg).initialise()
    a.run()
    b = Simulation(cfg).initialise()
    b.run()
    assert np.array_equal(a.u.coeffs, b.u.coeffs)
    parts = [Simulation(cfg, replicas=r).initialise() for r in ([0, 1], [2, 3])]
    for s in parts:
        s.run()
    assert np.array_equal(np.concatenate([s.u.coeffs for s in parts]), a.u.coeffs)


@pytest.mark.parametrize("scheme", ["split_exp_euler", "galerkin_sde", "galerkin_cubic_flow"])
def test_schemes_run_and_stay_finite(scheme):
    cfg = SolverConfig(n=6, h=1e-3, T=0.02, replicas=2, scheme=scheme, seed=4)
    res = Simulation(cfg).initialise().run()
    assert not res.blowups
    assert all(np.isfinite(r["Y_Lp2"]).all() for r in res.samples)


def test_blowup_is_recorded_and_raised():
    cfg = SolverConfig(params=PhysParams(1.0, 1.0, 0.0), n=4, h=0.5, T=5.0, noise=False,
                       scheme="galerkin_sde", replicas=2, c_value=0.0)
    u0 = np.stack([cfg.grid.mode((0, 0), 1e3).coeffs, cfg.grid.zeros().coeffs])
    sim = Simulation(cfg).initialise(u0=u0)
    res = sim.run()
    assert [b.replica for b in res.blowups] == [0]
    assert list(sim.alive) == [False, True]
    with pytest.raises(BlowUpError):
        Simulation(cfg).initialise(u0=u0).run(raise_on_blowup=True)


def test_energy_residual_zero_for_zero_trajectory():
    grid = Grid(4)
    traj = [(k * 1e-3, grid.zeros(), grid.zeros()) for k in range(4)]
    _, res = lp_energy_residual(traj, 2.0, PhysParams(), 0.0)
    assert np.all(res == 0)
    with pytest.raises(InputError):
        lp_energy_residual(traj[:1], 2.0, PhysParams(), 0.0)


def test_energy_residual_shrinks_with_h():
    out = studies.energy_residual_study(hs=(2e-3, 1e-3), ps=(2,))
    assert out["passed"], out


def test_dissipativity_on_random_fields():
    out = studies.dissipativity_check(fields=20)
    assert out["passed"] and out["violations"] == 0


def test_short_time_continuity_of_ou_shift():
    cfg = SolverConfig(n=16, h=1e-3, T=0.064, replicas=16, seed=21)
    sim = Simulation(cfg).initialise()
    part = partition_for(16)
    sup = np.zeros(cfg.replicas)
    marks = {4: None, 16: None, 64: None}
    for k in range(1, 65):
        sim.advance()
        sup = np.maximum(sup, besov_norm(sim.state.ou.Z, BesovParams(-0.5), part))
        if k in marks:
            marks[k] = sup.mean()
    ts = np.array(list(marks)) * cfg.h
    slope = np.polyfit(np.log(ts), np.log(list(marks.values())), 1)[0]
    assert slope > 0.05, slope
