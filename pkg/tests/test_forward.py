"""Physics forward model: geometry, drain rate, and the adaptive integrator."""

import math
import time

import numpy as np
import pytest
from scipy.integrate import quad, solve_ivp

from drainback import (
    InitialCondition,
    Orifice,
    PhysicalConstants,
    SolverError,
    TankGeometry,
    cross_section_area,
    drain_rate,
    level_at,
    prism_level_closed_form,
    simulate_level,
    tank_volume,
)
from drainback.forward import DEPLETION_FLOOR

GEOM = TankGeometry(h_max=14.0, x_t=8.7, x_b=8.4)
ORIFICE = Orifice(r=0.12, c=0.6)
CONST = PhysicalConstants()


def random_tank(rng):
    h_max = float(rng.uniform(8.0, 25.0))
    x_b = float(rng.uniform(5.0, 15.0))
    x_t = x_b * float(rng.uniform(0.8, 1.3))
    return TankGeometry(h_max, x_t, x_b)


class TestGeometry:
    def test_cross_section_frozen_values(self):
        # side 8.4 at the floor, 8.7 at the rim, 8.55 halfway up
        assert math.isclose(cross_section_area(GEOM, 0.0), 70.56, rel_tol=1e-12)
        assert math.isclose(cross_section_area(GEOM, 14.0), 75.69, rel_tol=1e-12)
        assert math.isclose(cross_section_area(GEOM, 7.0), 73.1025, rel_tol=1e-12)

    def test_cross_section_is_square_of_linear_side(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            geom = random_tank(rng)
            h = float(rng.uniform(0.0, geom.h_max))
            u = h / geom.h_max
            side = u * geom.x_t + (1.0 - u) * geom.x_b
            assert math.isclose(cross_section_area(geom, h), side * side, rel_tol=1e-12)

    def test_cross_section_domain(self):
        with pytest.raises(ValueError):
            cross_section_area(GEOM, -0.1)
        with pytest.raises(ValueError):
            cross_section_area(GEOM, 14.1)

    def test_invalid_dimensions_rejected(self):
        with pytest.raises(ValueError):
            TankGeometry(0.0, 8.7, 8.4)
        with pytest.raises(ValueError):
            TankGeometry(14.0, -8.7, 8.4)
        with pytest.raises(ValueError):
            Orifice(r=0.0, c=0.5)
        with pytest.raises(ValueError):
            Orifice(r=0.1, c=1.5)
        with pytest.raises(ValueError):
            PhysicalConstants(g=0.0)

    def test_volume_matches_integral_of_area(self):
        rng = np.random.default_rng(12)
        for _ in range(10):
            geom = random_tank(rng)
            h = float(rng.uniform(0.5, geom.h_max))
            numeric, _ = quad(lambda z: cross_section_area(geom, z), 0.0, h)
            assert math.isclose(tank_volume(geom, h), numeric, rel_tol=1e-9)

    def test_volume_zero_at_empty(self):
        assert tank_volume(GEOM, 0.0) == 0.0


class TestDrainRate:
    def test_matches_torricelli_formula(self):
        h = 12.0
        area = cross_section_area(GEOM, h)
        expected = -ORIFICE.c * math.pi * ORIFICE.r**2 * math.sqrt(2 * CONST.g * h) / area
        assert math.isclose(drain_rate(GEOM, ORIFICE, CONST, h), expected, rel_tol=1e-12)

    def test_zero_at_empty(self):
        assert drain_rate(GEOM, ORIFICE, CONST, 0.0) == 0.0

    def test_negative_level_rejected(self):
        with pytest.raises(ValueError):
            drain_rate(GEOM, ORIFICE, CONST, -1.0)

    def test_overfull_level_extrapolates_walls(self):
        # calibration starting levels may exceed the sampled rim height
        rate = drain_rate(GEOM, ORIFICE, CONST, 15.0)
        side = (15.0 / 14.0) * 8.7 + (1.0 - 15.0 / 14.0) * 8.4
        expected = -ORIFICE.c * math.pi * ORIFICE.r**2 * math.sqrt(2 * CONST.g * 15.0) / side**2
        assert math.isclose(rate, expected, rel_tol=1e-12)

    def test_faster_drainage_at_higher_level(self):
        rates = [drain_rate(GEOM, ORIFICE, CONST, h) for h in (2.0, 6.0, 12.0)]
        assert rates[0] > rates[1] > rates[2]  # all negative, larger head drains faster


class TestPrismOracle:
    def test_closed_form_expression(self):
        # dh/dt = -k sqrt(h) with constant area x^2 integrates to
        # h(t) = (sqrt(h0) - k (t - t0) / 2)^2 until depletion
        x = 9.0
        k = ORIFICE.c * math.pi * ORIFICE.r**2 * math.sqrt(2 * CONST.g) / x**2
        ic = InitialCondition(t0=5.0, h0=16.0)
        t = 30.0
        expected = (math.sqrt(16.0) - k * 25.0 / 2.0) ** 2
        got = prism_level_closed_form(x, ORIFICE, CONST, ic, t)
        assert math.isclose(got, expected, rel_tol=1e-12)

    def test_initial_time_returns_initial_level(self):
        assert prism_level_closed_form(9.0, ORIFICE, CONST, InitialCondition(3.0, 7.5), 3.0) == 7.5

    def test_clamped_to_zero_after_depletion(self):
        x = 9.0
        k = ORIFICE.c * math.pi * ORIFICE.r**2 * math.sqrt(2 * CONST.g) / x**2
        ic = InitialCondition(0.0, 4.0)
        t_dep = 2.0 * math.sqrt(4.0) / k
        assert prism_level_closed_form(x, ORIFICE, CONST, ic, 2.0 * t_dep) == 0.0

    def test_integrator_matches_closed_form(self):
        """20 random prisms: numeric levels within 1e-6 relative, under 1 s."""
        rng = np.random.default_rng(2024)
        started = time.perf_counter()
        worst = 0.0
        for _ in range(20):
            x = float(rng.uniform(5.0, 15.0))
            h_max = float(rng.uniform(10.0, 25.0))
            geom = TankGeometry(h_max, x, x)
            orifice = Orifice(r=float(rng.uniform(0.05, 0.3)), c=float(rng.uniform(0.3, 0.95)))
            h0 = float(rng.uniform(2.0, h_max))
            ic = InitialCondition(t0=float(rng.uniform(-5.0, 5.0)), h0=h0)
            k = orifice.c * math.pi * orifice.r**2 * math.sqrt(2 * CONST.g) / x**2
            t_dep = 2.0 * math.sqrt(h0) / k
            t_end = ic.t0 + 0.8 * t_dep
            traj = simulate_level(geom, orifice, CONST, ic, t_end)
            ts = np.linspace(ic.t0, t_end, 50)
            exact = prism_level_closed_form(x, orifice, CONST, ic, ts)
            numeric = traj.level(ts)
            worst = max(worst, float(np.max(np.abs(numeric - exact) / exact)))
        elapsed = time.perf_counter() - started
        assert worst < 1e-6
        assert elapsed < 1.0


class TestIntegrator:
    def test_matches_reference_integrator_on_tapered_tank(self):
        # independent oracle: scipy's adaptive RK45 at tight tolerance
        ic = InitialCondition(0.0, 12.0)
        t_end = 300.0

        def rhs(_t, y):
            return [drain_rate(GEOM, ORIFICE, CONST, max(y[0], 0.0))]

        ts = np.linspace(0.0, t_end, 40)
        ref = solve_ivp(
            rhs, (0.0, t_end), [12.0], method="RK45", rtol=1e-10, atol=1e-12, t_eval=ts
        )
        traj = simulate_level(GEOM, ORIFICE, CONST, ic, t_end)
        ours = traj.level(ts)
        assert np.max(np.abs(ours - ref.y[0]) / np.maximum(ref.y[0], 1e-3)) < 1e-6

    def test_level_interpolates_knots_exactly(self):
        traj = simulate_level(GEOM, ORIFICE, CONST, InitialCondition(0.0, 12.0), 300.0)
        for k in range(len(traj.times)):
            assert traj.level(float(traj.times[k])) == pytest.approx(
                traj.levels[k], abs=1e-12
            )

    def test_level_monotone_nonincreasing(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            geom = random_tank(rng)
            orifice = Orifice(r=float(rng.uniform(0.08, 0.2)), c=float(rng.uniform(0.4, 0.9)))
            h0 = float(rng.uniform(3.0, geom.h_max))
            traj = simulate_level(geom, orifice, CONST, InitialCondition(0.0, h0), 400.0)
            ts = np.linspace(0.0, 400.0, 2000)
            levels = traj.level(ts)
            assert np.all(np.diff(levels) <= 1e-9)
            assert np.all(levels >= 0.0)

    def test_mass_balance(self):
        # volume lost equals the integral of the orifice outflow (rel 1e-4)
        ic = InitialCondition(0.0, 12.0)
        t_end = 250.0
        traj = simulate_level(GEOM, ORIFICE, CONST, ic, t_end)
        ts = np.linspace(0.0, t_end, 20001)
        levels = traj.level(ts)
        outflow = (
            ORIFICE.c * math.pi * ORIFICE.r**2 * np.sqrt(2 * CONST.g * np.maximum(levels, 0.0))
        )
        drained = float(np.trapezoid(outflow, ts))
        volume_change = tank_volume(GEOM, 12.0) - tank_volume(GEOM, float(traj.level(t_end)))
        assert math.isclose(drained, volume_change, rel_tol=1e-4)

    def test_c_r_squared_identifiability(self):
        # only the product c * r**2 enters the dynamics
        ic = InitialCondition(0.0, 12.0)
        t_end = 250.0
        base = simulate_level(GEOM, Orifice(r=0.12, c=0.6), CONST, ic, t_end)
        r2 = 0.10
        c2 = 0.6 * (0.12 / r2) ** 2
        other = simulate_level(GEOM, Orifice(r=r2, c=c2), CONST, ic, t_end)
        ts = np.linspace(0.0, t_end, 100)
        assert np.max(np.abs(base.level(ts) - other.level(ts))) < 1e-9

    def test_time_shift_invariance(self):
        ic0 = InitialCondition(0.0, 10.0)
        shift = 37.5
        ic1 = InitialCondition(shift, 10.0)
        a = simulate_level(GEOM, ORIFICE, CONST, ic0, 200.0)
        b = simulate_level(GEOM, ORIFICE, CONST, ic1, 200.0 + shift)
        ts = np.linspace(0.0, 200.0, 64)
        assert np.max(np.abs(a.level(ts) - b.level(ts + shift))) < 1e-9

    def test_depletion_detected_and_held_at_zero(self):
        ic = InitialCondition(0.0, 12.0)
        t_end = 600.0  # the reference tank runs dry near 415 s
        traj = simulate_level(GEOM, ORIFICE, CONST, ic, t_end)
        assert traj.depleted
        assert 380.0 < traj.t_depletion < 450.0
        after = traj.level(np.linspace(traj.t_depletion, t_end, 20))
        assert np.all(after == 0.0)
        just_before = traj.level(traj.t_depletion - 1.0)
        assert 0.0 <= just_before < 0.05

    def test_not_depleted_within_short_window(self):
        traj = simulate_level(GEOM, ORIFICE, CONST, InitialCondition(0.0, 12.0), 100.0)
        assert not traj.depleted
        assert traj.t_depletion is None

    def test_starts_empty_stays_empty(self):
        traj = simulate_level(GEOM, ORIFICE, CONST, InitialCondition(0.0, 0.0), 50.0)
        assert traj.depleted
        assert traj.t_depletion == 0.0
        assert np.all(traj.level(np.linspace(0.0, 50.0, 11)) == 0.0)

    def test_invalid_window_and_level_rejected(self):
        with pytest.raises(ValueError):
            simulate_level(GEOM, ORIFICE, CONST, InitialCondition(10.0, 12.0), 10.0)
        with pytest.raises(ValueError):
            simulate_level(GEOM, ORIFICE, CONST, InitialCondition(0.0, -1.0), 10.0)

    def test_query_outside_span_rejected(self):
        traj = simulate_level(GEOM, ORIFICE, CONST, InitialCondition(0.0, 12.0), 100.0)
        with pytest.raises(ValueError):
            traj.level(-5.0)
        with pytest.raises(ValueError):
            traj.level(100.5)
        with pytest.raises(ValueError):
            level_at(traj, np.array([50.0, 101.0]))

    def test_level_accepts_scalar_and_array(self):
        traj = simulate_level(GEOM, ORIFICE, CONST, InitialCondition(0.0, 12.0), 100.0)
        scalar = traj.level(50.0)
        arr = traj.level(np.array([50.0]))
        assert isinstance(scalar, float)
        assert arr.shape == (1,)
        assert scalar == arr[0]

    def test_solver_error_carries_last_state(self):
        err = SolverError("step size underflow", t_last=1.5, h_last=0.25)
        assert err.t_last == 1.5
        assert err.h_last == 0.25
        assert "1.5" in str(err)
