"""Finite-difference diffusion-decay solver and its closed-form checks."""

import math

import numpy as np
import pytest

from decaylab import (
    BoundaryCondition,
    DomainError,
    FieldGrid,
    InvalidConfig,
    PdeParams,
    PointSource,
    SimulationConfig,
    UnstableTimestep,
    WindowTooSmall,
    bessel_k0,
    closure_decay,
    max_stable_dt,
    recover_kappa_eff,
    solve_transient,
    steady_state_green,
)


def uniform_grid(dim, cells, h, value=0.0):
    g = FieldGrid.zeros(dim, cells, h)
    g.values += value
    return g


class TestGridAndConfigValidation:
    def test_grid_dim_and_spacing(self):
        with pytest.raises(InvalidConfig):
            FieldGrid.zeros(3, (4, 4, 4), 1.0)
        with pytest.raises(InvalidConfig):
            FieldGrid.zeros(1, 10, 0.0)
        with pytest.raises(InvalidConfig):
            FieldGrid(dim=2, spacing_km=1.0, values=np.zeros(5))

    def test_cell_centers_and_volume(self):
        g = FieldGrid.zeros(1, 4, 0.5)
        assert g.axis_centers().tolist() == [0.25, 0.75, 1.25, 1.75]
        assert g.cell_volume == 0.5
        g2 = FieldGrid.zeros(2, (3, 3), 2.0)
        assert g2.cell_volume == 4.0

    def test_cell_of_and_bounds(self):
        g = FieldGrid.zeros(1, 10, 1.0)
        assert g.cell_of((3.7,)) == (3,)
        with pytest.raises(InvalidConfig):
            g.cell_of((10.5,))

    def test_radii_2d(self):
        g = FieldGrid.zeros(2, (3, 3), 1.0)
        r = g.radii_from((1.5, 1.5))
        assert r[1, 1] == 0.0
        assert r[0, 0] == pytest.approx(math.sqrt(2.0))
        assert r[0, 1] == pytest.approx(1.0)

    def test_total_mass(self):
        g = uniform_grid(2, (4, 5), 0.5, value=2.0)
        assert g.total_mass() == pytest.approx(2.0 * 20 * 0.25)

    def test_point_source_validation(self):
        with pytest.raises(InvalidConfig):
            PointSource((1.0,), strength=-1.0)
        with pytest.raises(InvalidConfig):
            PointSource((1.0,), start=2.0, end=1.0)
        s = PointSource((1.0,), start=1.0, end=2.0)
        assert s.active_at(1.0) and s.active_at(1.999)
        assert not s.active_at(2.0) and not s.active_at(0.999)

    def test_pde_params_validation(self):
        with pytest.raises(InvalidConfig):
            PdeParams(diffusion_d=0.0, decay_kappa=0.1)
        with pytest.raises(InvalidConfig):
            PdeParams(diffusion_d=1.0, decay_kappa=-0.1)
        assert PdeParams(100.0, 4.0).kappa_eff == pytest.approx(0.2)

    def test_simulation_config_validation(self):
        with pytest.raises(InvalidConfig):
            SimulationConfig(dt_years=0.0, t_end_years=1.0)
        with pytest.raises(InvalidConfig):
            SimulationConfig(dt_years=0.1, t_end_years=-1.0)
        cfg = SimulationConfig(dt_years=0.1, t_end_years=1.0, boundary="absorbing")
        assert cfg.boundary is BoundaryCondition.ABSORBING


class TestStability:
    def test_stable_dt_bound_formula(self):
        g1 = FieldGrid.zeros(1, 100, 0.5)
        assert max_stable_dt(g1, PdeParams(100.0, 0.0)) == pytest.approx(0.00125)
        g2 = FieldGrid.zeros(2, (50, 50), 1.0)
        assert max_stable_dt(g2, PdeParams(200.0, 0.0)) == pytest.approx(1.0 / 800.0)

    def test_oversized_timestep_refused(self):
        g = FieldGrid.zeros(1, 50, 1.0)
        params = PdeParams(100.0, 0.0)
        bound = max_stable_dt(g, params)
        with pytest.raises(UnstableTimestep, match="stability bound"):
            solve_transient(g, params, SimulationConfig(bound * 1.01, 1.0))

    def test_timestep_at_bound_accepted(self):
        g = uniform_grid(1, 50, 1.0, value=1.0)
        params = PdeParams(100.0, 0.0)
        bound = max_stable_dt(g, params)
        res = solve_transient(g, params, SimulationConfig(bound, bound * 10))
        assert np.all(np.isfinite(res.final.values))


class TestConservationAndDecay:
    def test_zero_flux_conserves_mass_1d(self):
        rng = np.random.default_rng(0)
        g = FieldGrid(dim=1, spacing_km=0.5, values=rng.uniform(0.5, 2.0, 200))
        params = PdeParams(diffusion_d=40.0, decay_kappa=0.0)
        res = solve_transient(
            g, params, SimulationConfig(0.9 * max_stable_dt(g, params), 0.5)
        )
        assert np.allclose(res.mass, res.mass[0], rtol=1e-12)

    def test_zero_flux_conserves_mass_2d(self):
        rng = np.random.default_rng(1)
        g = FieldGrid(dim=2, spacing_km=1.0, values=rng.uniform(0.5, 2.0, (40, 30)))
        params = PdeParams(diffusion_d=50.0, decay_kappa=0.0)
        res = solve_transient(
            g, params, SimulationConfig(0.9 * max_stable_dt(g, params), 0.2)
        )
        assert np.allclose(res.mass, res.mass[0], rtol=1e-12)

    def test_uniform_field_decays_geometrically(self):
        # flat field: the Laplacian vanishes, each step is *(1 - kappa dt)
        g = uniform_grid(1, 64, 1.0, value=3.0)
        kappa, dt = 0.3, 0.002
        params = PdeParams(diffusion_d=10.0, decay_kappa=kappa)
        res = solve_transient(g, params, SimulationConfig(dt, 100 * dt))
        n = np.arange(res.mass.size)
        expected = res.mass[0] * (1.0 - kappa * dt) ** n
        assert np.allclose(res.mass, expected, rtol=1e-12)

    def test_max_principle_without_sources(self):
        rng = np.random.default_rng(7)
        g = FieldGrid(dim=1, spacing_km=1.0, values=rng.uniform(0.0, 5.0, 100))
        params = PdeParams(diffusion_d=30.0, decay_kappa=0.1)
        dt = max_stable_dt(g, params)
        u = g.values.copy()
        res = solve_transient(g, params, SimulationConfig(dt, 50 * dt))
        assert res.final.values.max() <= u.max() + 1e-12
        assert res.final.values.min() >= 0.0

    def test_absorbing_loses_mass_faster_than_zero_flux(self):
        rng = np.random.default_rng(9)
        vals = rng.uniform(1.0, 2.0, 120)
        params = PdeParams(diffusion_d=25.0, decay_kappa=0.05)
        runs = {}
        for bc in (BoundaryCondition.ZERO_FLUX, BoundaryCondition.ABSORBING):
            g = FieldGrid(dim=1, spacing_km=1.0, values=vals.copy())
            dt = 0.9 * max_stable_dt(g, params)
            runs[bc] = solve_transient(g, params, SimulationConfig(dt, 1.0, boundary=bc))
        assert (
            runs[BoundaryCondition.ABSORBING].mass[-1]
            < runs[BoundaryCondition.ZERO_FLUX].mass[-1]
        )

    def test_input_grid_not_modified(self):
        g = uniform_grid(1, 30, 1.0, value=1.0)
        before = g.values.copy()
        params = PdeParams(10.0, 0.2)
        solve_transient(g, params, SimulationConfig(0.001, 0.05))
        assert np.array_equal(g.values, before)


class TestSourceDeposit:
    def test_always_on_source_injects_strength_per_unit_time(self):
        # kappa = 0, zero flux: mass grows by strength * dt per step
        g = FieldGrid.zeros(1, 101, 0.5)
        params = PdeParams(
            diffusion_d=20.0, decay_kappa=0.0,
            sources=(PointSource((25.25,), strength=4.0),),
        )
        dt = 0.5 * max_stable_dt(g, params)
        res = solve_transient(g, params, SimulationConfig(dt, 200 * dt))
        assert res.mass[-1] == pytest.approx(4.0 * dt * 200, rel=1e-12)
        steps = np.diff(res.mass)
        assert np.allclose(steps, 4.0 * dt, rtol=1e-9)

    def test_windowed_source_active_interval(self):
        g = FieldGrid.zeros(1, 101, 0.5)
        params = PdeParams(
            diffusion_d=20.0, decay_kappa=0.0,
            sources=(PointSource((25.25,), strength=2.0, start=0.05, end=0.10),),
        )
        res = solve_transient(g, params, SimulationConfig(0.001, 0.2))
        # deposits happen on the 50 steps whose start time falls in the window
        assert res.mass[-1] == pytest.approx(2.0 * 0.001 * 50, rel=1e-9)
        assert res.mass[40] == 0.0

    def test_source_position_outside_grid(self):
        g = FieldGrid.zeros(1, 10, 1.0)
        params = PdeParams(10.0, 0.0, sources=(PointSource((25.0,),),))
        with pytest.raises(InvalidConfig, match="outside the grid"):
            solve_transient(g, params, SimulationConfig(0.01, 0.1))

    def test_snapshots_recorded_at_stride(self):
        g = uniform_grid(1, 20, 1.0, value=1.0)
        params = PdeParams(5.0, 0.1)
        res = solve_transient(g, params, SimulationConfig(0.01, 1.0, record_every=25))
        assert len(res.snapshots) == 4
        assert res.snapshots[0][0] == pytest.approx(0.25)
        assert res.snapshots[-1][0] == pytest.approx(1.0)


class TestSteadyStateGreen:
    def test_1d_closed_form(self):
        params = PdeParams(50.0, 0.5, sources=(PointSource((0.0,), strength=5.0),))
        # T0 / (2 sqrt(D kappa)) at the source, decaying at sqrt(kappa/D)
        assert steady_state_green(params, 0.0, dim=1) == pytest.approx(0.5)
        r = np.array([0.0, 10.0, 20.0])
        prof = steady_state_green(params, r, dim=1)
        assert prof[1] == pytest.approx(0.5 * math.exp(-0.1 * 10.0), rel=1e-12)
        assert prof[2] / prof[1] == pytest.approx(math.exp(-1.0), rel=1e-12)

    def test_2d_closed_form(self):
        params = PdeParams(200.0, 0.08, sources=(PointSource((0.0, 0.0), strength=3.0),))
        keff = math.sqrt(0.08 / 200.0)
        got = steady_state_green(params, 25.0, dim=2)
        want = 3.0 / (2.0 * math.pi * 200.0) * bessel_k0(keff * 25.0)
        assert got == pytest.approx(want, rel=1e-12)

    def test_domain_errors(self):
        params = PdeParams(50.0, 0.5, sources=(PointSource((0.0,), strength=1.0),))
        with pytest.raises(DomainError):
            steady_state_green(params, -1.0, dim=1)
        with pytest.raises(DomainError):
            steady_state_green(params, 0.0, dim=2)
        with pytest.raises(InvalidConfig):
            steady_state_green(params, 1.0, dim=3)

    def test_requires_single_source_and_decay(self):
        no_source = PdeParams(50.0, 0.5)
        with pytest.raises(InvalidConfig):
            steady_state_green(no_source, 1.0, dim=1)
        two = PdeParams(
            50.0, 0.5, sources=(PointSource((0.0,)), PointSource((1.0,)))
        )
        with pytest.raises(InvalidConfig):
            steady_state_green(two, 1.0, dim=1)
        undamped = PdeParams(50.0, 0.0, sources=(PointSource((0.0,)),))
        with pytest.raises(DomainError):
            steady_state_green(undamped, 1.0, dim=1)


def run_1d_steady(cells=801, h=0.5, diff=50.0, kappa=0.5, t_end=30.0, strength=5.0):
    g = FieldGrid.zeros(1, cells, h)
    center = g.axis_centers()[cells // 2]
    params = PdeParams(diff, kappa, sources=(PointSource((center,), strength=strength),))
    dt = 0.9 * max_stable_dt(g, params)
    res = solve_transient(g, params, SimulationConfig(dt, t_end))
    return res.final, center, params


class TestSteadyProfile:
    def test_1d_simulation_matches_green_function(self):
        final, center, params = run_1d_steady()
        r = np.abs(final.axis_centers() - center)
        window = (r >= 3.0 * final.spacing_km) & (r <= 60.0)
        want = steady_state_green(params, r[window], dim=1)
        got = final.values[window]
        rel = np.abs(got - want) / want
        assert rel.max() < 0.02

    def test_recovered_rate_and_grid_refinement(self):
        errors = {}
        for cells, h in ((401, 1.0), (801, 0.5)):
            final, center, params = run_1d_steady(cells=cells, h=h)
            keff = recover_kappa_eff(final, (center,), window_km=(3.0, 60.0))
            errors[h] = abs(keff - params.kappa_eff) / params.kappa_eff
        assert errors[0.5] < errors[1.0]
        assert errors[0.5] < 0.02


class TestClosureDecay:
    def test_slope_recovers_decay_rate(self):
        rng = np.random.default_rng(3)
        g = FieldGrid(dim=1, spacing_km=1.0, values=rng.uniform(1.0, 3.0, 150))
        kappa, dt = 0.3, 0.001
        params = PdeParams(diffusion_d=20.0, decay_kappa=kappa)
        res = closure_decay(g, params, SimulationConfig(dt, 5.0))
        # the exact per-step factor is (1 - kappa dt); continuous-time slope
        discrete = math.log(1.0 - kappa * dt) / dt
        assert res.slope == pytest.approx(discrete, rel=1e-9)
        assert res.slope == pytest.approx(-kappa, rel=1e-3)

    def test_sources_forbidden(self):
        g = uniform_grid(1, 50, 1.0, value=1.0)
        params = PdeParams(10.0, 0.1, sources=(PointSource((25.0,)),))
        with pytest.raises(InvalidConfig, match="no active sources"):
            closure_decay(g, params, SimulationConfig(0.01, 1.0))

    def test_empty_field_has_no_slope(self):
        g = FieldGrid.zeros(1, 50, 1.0)
        with pytest.raises(WindowTooSmall):
            closure_decay(g, PdeParams(10.0, 0.1), SimulationConfig(0.01, 1.0))

    def test_absorbing_boundary_steepens_slope(self):
        vals = np.full(80, 2.0)
        params = PdeParams(diffusion_d=20.0, decay_kappa=0.2)
        slopes = {}
        for bc in (BoundaryCondition.ZERO_FLUX, BoundaryCondition.ABSORBING):
            g = FieldGrid(dim=1, spacing_km=1.0, values=vals.copy())
            res = closure_decay(g, params, SimulationConfig(0.005, 2.0, boundary=bc))
            slopes[bc] = res.slope
        assert slopes[BoundaryCondition.ABSORBING] < slopes[BoundaryCondition.ZERO_FLUX]


class TestRecoverKappaEff:
    def test_exact_exponential_field_1d(self):
        g = FieldGrid.zeros(1, 401, 0.5)
        center = g.axis_centers()[200]
        r = np.abs(g.axis_centers() - center)
        g.values = np.exp(-0.2 * r)
        assert recover_kappa_eff(g, (center,), window_km=(2.0, 50.0)) == pytest.approx(
            0.2, abs=1e-12
        )
        # default window (3 cells to half the edge distance) also exact here
        assert recover_kappa_eff(g, (center,)) == pytest.approx(0.2, abs=1e-12)

    def test_exact_exponential_field_2d(self):
        g = FieldGrid.zeros(2, (81, 81), 1.0)
        center = (g.axis_centers(0)[40], g.axis_centers(1)[40])
        g.values = np.exp(-0.3 * g.radii_from(center))
        got = recover_kappa_eff(g, center, window_km=(3.0, 20.0))
        assert got == pytest.approx(0.3, abs=1e-12)

    def test_window_validation(self):
        g = uniform_grid(1, 50, 1.0, value=1.0)
        with pytest.raises(WindowTooSmall, match="empty radial window"):
            recover_kappa_eff(g, (25.0,), window_km=(10.0, 10.0))
        with pytest.raises(WindowTooSmall, match="usable cells"):
            recover_kappa_eff(g, (25.0,), window_km=(1.0, 3.0), min_cells=30)

    def test_nonpositive_cells_excluded(self):
        g = FieldGrid.zeros(1, 100, 1.0)
        center = g.axis_centers()[50]
        r = np.abs(g.axis_centers() - center)
        g.values = np.exp(-0.1 * r)
        g.values[::7] = 0.0  # dead cells must not break the log fit
        got = recover_kappa_eff(g, (center,), window_km=(2.0, 30.0))
        assert got == pytest.approx(0.1, abs=1e-12)
