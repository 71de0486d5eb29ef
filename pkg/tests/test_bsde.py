import math

import numpy as np
import pytest

from youngbsde.bsde import (BsdeProblem, LinearBsdeSpec,
                            LocalizationSchedule, PicardConfig,
                            exponential_moment_diagnostic, girsanov_weight,
                            solve_bsde_with_localization, solve_linear_bsde,
                            solve_localized_bsde, tower_rule_defect)
from youngbsde.diffusion import simulate
from youngbsde.drivers import make_separable_driver, zero_driver
from youngbsde.errors import DomainError
from youngbsde.paths import TimeGrid
from youngbsde.registry import diffusion_by_name, driver_by_names
from youngbsde.young_calculus import young_sum_batch

BROWNIAN = diffusion_by_name("brownian")
GRID = TimeGrid.uniform(1.0, 32)
TIME_DRIVER = make_separable_driver(lambda x: np.ones(x.shape[0]),
                                    lambda t: t)


def brownian_batch(samples=20000, seed=5, grid=GRID, x0=0.0):
    return simulate(BROWNIAN, [x0], grid, samples, seed)


class TestGirsanov:
    def test_zero_process_unit_weight(self):
        batch = brownian_batch(100)
        g = np.zeros_like(batch.increments)
        m_t, path = girsanov_weight(g, batch.increments,
                                    np.diff(GRID.times))
        assert np.all(m_t == 1.0)
        assert np.all(path == 1.0)

    def test_deterministic_process_lognormal(self):
        batch = brownian_batch(50000)
        g = np.full_like(batch.increments, 0.4)
        m_t, _ = girsanov_weight(g, batch.increments, np.diff(GRID.times))
        log_m = np.log(m_t)
        # log M_T ~ N(-q/2, q) with q = int |G|^2 dt
        q = 0.16
        assert log_m.mean() == pytest.approx(
            -q / 2, abs=3 * math.sqrt(q / m_t.size))
        se = m_t.std(ddof=1) / math.sqrt(m_t.size)
        assert abs(m_t.mean() - 1.0) <= 3 * se

    def test_replay_identical(self):
        b1, b2 = brownian_batch(64, seed=3), brownian_batch(64, seed=3)
        g1 = 0.3 * np.cos(b1.paths[:, :-1, :])
        g2 = 0.3 * np.cos(b2.paths[:, :-1, :])
        m1, _ = girsanov_weight(g1, b1.increments, np.diff(GRID.times))
        m2, _ = girsanov_weight(g2, b2.increments, np.diff(GRID.times))
        np.testing.assert_array_equal(m1, m2)


class TestLinearSolver:
    def test_martingale_case(self):
        spec = LinearBsdeSpec(
            alpha=lambda t, x: np.zeros(x.shape[0]),
            terminal=lambda p: p[:, -1, 0], driver=TIME_DRIVER,
            diffusion=BROWNIAN, x0=np.array([0.3]))
        sol = solve_linear_bsde(spec, GRID, 20000, seed=11)
        assert abs(sol.y0 - 0.3) <= 3 * sol.y0_standard_error

    def test_unit_coefficient_time_driver(self):
        # alpha = 1, eta = t, xi = 1: the flow is e^T exactly
        spec = LinearBsdeSpec(
            alpha=lambda t, x: np.ones(x.shape[0]),
            terminal=lambda p: np.ones(p.shape[0]), driver=TIME_DRIVER,
            diffusion=BROWNIAN, x0=np.array([0.0]))
        sol = solve_linear_bsde(spec, GRID, 500, seed=1)
        assert sol.y0 == pytest.approx(math.e, rel=1e-12)

    def test_kac_potential_against_finite_differences(self):
        from youngbsde.fd import crank_nicolson_terminal_value

        driver = driver_by_names("cos", "linear")
        spec = LinearBsdeSpec(
            alpha=lambda t, x: np.ones(x.shape[0]),
            terminal=lambda p: np.ones(p.shape[0]), driver=driver,
            diffusion=BROWNIAN, x0=np.array([0.0]))
        sol = solve_linear_bsde(spec, TimeGrid.uniform(1.0, 64), 50000,
                                seed=7)
        oracle = crank_nicolson_terminal_value(
            lambda x: np.ones_like(x), lambda x: np.ones_like(x),
            lambda x: np.zeros_like(x), np.cos, 1.0, 8.0, 1200, 600)
        ref = float(oracle.at(0.0, 0.0)[0])
        assert sol.y0 == pytest.approx(ref, rel=0.02)

    def test_girsanov_drift_change_consistency(self):
        # xi = X_T under a constant drift change: E[X_T M_T] = x0 + c T
        c = 0.4
        spec = LinearBsdeSpec(
            alpha=lambda t, x: np.zeros(x.shape[0]),
            terminal=lambda p: p[:, -1, 0], driver=TIME_DRIVER,
            diffusion=BROWNIAN, x0=np.array([0.0]),
            drift_change=lambda t, x: np.full_like(x, c))
        sol = solve_linear_bsde(spec, GRID, 50000, seed=13)
        assert abs(sol.y0 - c) <= 3 * sol.y0_standard_error

    def test_interior_time_regression(self):
        spec = LinearBsdeSpec(
            alpha=lambda t, x: np.zeros(x.shape[0]),
            terminal=lambda p: p[:, -1, 0], driver=TIME_DRIVER,
            diffusion=BROWNIAN, x0=np.array([0.0]))
        sol = solve_linear_bsde(spec, GRID, 20000, seed=11,
                                eval_times=(0.0, 0.5))
        y_half = sol.y_at_times[0.5][:, 0]
        batch = brownian_batch(20000, seed=11)
        x_half = batch.paths[:, GRID.index_of(0.5), 0]
        # martingale: Y_{1/2} = X_{1/2} lies in the regression span; the
        # residual is pure coefficient noise, largest at the state tails
        assert np.mean(np.abs(y_half - x_half)) <= 0.02
        assert np.max(np.abs(y_half - x_half)) <= 0.1

    def test_alpha_bound_enforced(self):
        spec = LinearBsdeSpec(
            alpha=lambda t, x: np.full(x.shape[0], 2.0),
            terminal=lambda p: np.ones(p.shape[0]), driver=TIME_DRIVER,
            diffusion=BROWNIAN, x0=np.array([0.0]), alpha_bound=1.0)
        with pytest.raises(DomainError, match="bound"):
            solve_linear_bsde(spec, GRID, 50, seed=1)


class TestTowerRule:
    def test_deterministic_integrand_exact(self):
        batch = brownian_batch(5000)
        a = np.full((5000, 33), 1.7)
        b = np.ones((5000, 33))
        e1, e2, se = tower_rule_defect(a, b, TIME_DRIVER, batch)
        assert e1 == pytest.approx(1.7, abs=1e-12)
        # the conditioned side carries the ridge shrinkage, O(1e-8 * scale)
        assert abs(e1 - e2) <= max(3 * se, 1e-6)

    def test_terminal_measurable_integrand(self):
        batch = brownian_batch(20000)
        a = np.tile(batch.paths[:, -1, 0][:, None], (1, 33))
        b = np.ones((20000, 33))
        e1, e2, se = tower_rule_defect(a, b, TIME_DRIVER, batch)
        assert abs(e1 - e2) <= max(3 * se, 1e-10)

    def test_terminal_time_empty_interval(self):
        batch = brownian_batch(500)
        a = np.ones((500, 33))
        b = np.ones((500, 33))
        e1, e2, se = tower_rule_defect(a, b, TIME_DRIVER, batch,
                                       t_index=32)
        assert e1 == 0.0 and e2 == 0.0


class TestLocalizedSolver:
    def test_radius_must_exceed_start(self):
        problem = BsdeProblem(
            f=lambda t, x, y, z: np.zeros(x.shape[0]),
            g=lambda y: np.zeros((np.size(y), 1)),
            terminal=lambda x: x[:, 0], driver=zero_driver(),
            diffusion=BROWNIAN, x0=np.array([2.0]))
        with pytest.raises(DomainError, match="radius"):
            solve_localized_bsde(problem, 1.5, GRID, 100, seed=1)

    def test_conditional_expectation_only(self):
        problem = BsdeProblem(
            f=lambda t, x, y, z: np.zeros(x.shape[0]),
            g=lambda y: np.zeros((np.size(y), 1)),
            terminal=lambda x: x[:, 0], driver=zero_driver(),
            diffusion=BROWNIAN, x0=np.array([0.0]), lipschitz_f=1e-9)
        sol = solve_localized_bsde(problem, 6.0, GRID, 20000, seed=3)
        batch = brownian_batch(20000, seed=3)
        direct = batch.paths[:, -1, 0].mean()
        assert sol.y0 == pytest.approx(direct, abs=1e-9)
        assert sol.terminal_defect == 0.0

    def test_classical_linear_oracle(self):
        rate = 0.1
        problem = BsdeProblem(
            f=lambda t, x, y, z: rate * y,
            g=lambda y: np.zeros((np.size(y), 1)),
            terminal=lambda x: x[:, 0], driver=zero_driver(),
            diffusion=BROWNIAN, x0=np.array([1.0]),
            lipschitz_f=rate * 1.01)
        sol = solve_localized_bsde(problem, 6.0, TimeGrid.uniform(1.0, 64),
                                   20000, seed=22)
        assert sol.y0 == pytest.approx(math.exp(rate), rel=0.02)
        assert sol.converged

    def test_constant_young_coefficient_explicit_solution(self):
        driver = driver_by_names("cos", "linear")
        problem = BsdeProblem(
            f=lambda t, x, y, z: np.zeros(x.shape[0]),
            g=lambda y: np.ones((np.size(y), 1)),
            terminal=lambda x: x[:, 0], driver=driver, diffusion=BROWNIAN,
            x0=np.array([0.0]), lipschitz_f=1e-9)
        batch = brownian_batch(20000, seed=5)
        sol = solve_localized_bsde(problem, 6.0, GRID, 20000, seed=5,
                                   batch=batch)
        explicit = (batch.paths[:, -1, 0]
                    + young_sum_batch(driver, GRID.times,
                                      batch.paths)[:, 0]).mean()
        assert sol.y0 == pytest.approx(explicit, abs=1e-7)

    def test_picard_gaps_decrease(self):
        driver = driver_by_names("cos", "linear")
        problem = BsdeProblem(
            f=lambda t, x, y, z: 0.2 * y,
            g=lambda y: np.tanh(y).reshape(-1, 1),
            terminal=lambda x: x[:, 0], driver=driver, diffusion=BROWNIAN,
            x0=np.array([0.0]), lipschitz_f=0.21)
        sol = solve_localized_bsde(problem, 5.0, GRID, 5000, seed=9)
        gaps = sol.picard_gaps
        assert sol.converged
        assert all(b <= a for a, b in zip(gaps[1:-1], gaps[2:]))

    def test_martingale_residual_within_band(self):
        problem = BsdeProblem(
            f=lambda t, x, y, z: 0.1 * y,
            g=lambda y: np.zeros((np.size(y), 1)),
            terminal=lambda x: x[:, 0], driver=zero_driver(),
            diffusion=BROWNIAN, x0=np.array([0.5]), lipschitz_f=0.11)
        sol = solve_localized_bsde(problem, 6.0, GRID, 20000, seed=42)
        res = sol.martingale_residual
        z = np.abs(res["mean"]) / np.maximum(res["se"], 1e-300)
        assert np.max(z) <= 3.5

    def test_terminal_exactness_with_exits(self):
        problem = BsdeProblem(
            f=lambda t, x, y, z: np.zeros(x.shape[0]),
            g=lambda y: np.zeros((np.size(y), 1)),
            terminal=lambda x: np.abs(x[:, 0]), driver=zero_driver(),
            diffusion=BROWNIAN, x0=np.array([0.0]),
            lipschitz_terminal=1.0, lipschitz_f=1e-9)
        sol = solve_localized_bsde(problem, 1.0, GRID, 2000, seed=7)
        assert sol.terminal_defect == 0.0
        assert sol.exit_probability > 0.1

    def test_spot_check_rejects_unbounded_g(self):
        problem = BsdeProblem(
            f=lambda t, x, y, z: np.zeros(x.shape[0]),
            g=lambda y: (2.0 * np.asarray(y)).reshape(-1, 1),
            terminal=lambda x: x[:, 0], driver=zero_driver(),
            diffusion=BROWNIAN, x0=np.array([0.0]),
            coefficient_bound=1.0)
        with pytest.raises(DomainError, match="declared bound"):
            solve_localized_bsde(problem, 4.0, GRID, 100, seed=1)


class TestLinearNonlinearConsistency:
    def test_localized_solver_agrees_with_flow_formula(self):
        # the same equation solved twice: g(y) = y through the localized
        # regression scheme, alpha = 1 through the explicit flow formula
        amp = 0.5
        driver = driver_by_names("cos", "linear", amplitude=amp)
        grid = TimeGrid.uniform(1.0, 64)
        problem = BsdeProblem(
            f=lambda t, x, y, z: np.zeros(x.shape[0]),
            g=lambda y: np.asarray(y, dtype=float).reshape(-1, 1),
            terminal=lambda x: np.ones(x.shape[0]), driver=driver,
            diffusion=BROWNIAN, x0=np.array([0.0]),
            coefficient_bound=20.0, lipschitz_f=1e-9,
            lipschitz_terminal=1e-9)
        lsmc = solve_localized_bsde(problem, 6.0, grid, 40000, seed=33,
                                    picard=PicardConfig(tolerance=1e-8,
                                                        max_iterations=80))
        spec = LinearBsdeSpec(
            alpha=lambda t, x: np.ones(x.shape[0]),
            terminal=lambda p: np.ones(p.shape[0]), driver=driver,
            diffusion=BROWNIAN, x0=np.array([0.0]))
        flow = solve_linear_bsde(spec, grid, 40000, seed=3300)
        combined = math.hypot(lsmc.y0_standard_error,
                              flow.y0_standard_error)
        scheme_bias = lsmc.y0 * amp**2 / (2 * 64)
        assert abs(lsmc.y0 - flow.y0) <= 3 * combined + scheme_bias

    def test_drift_change_bound_enforced(self):
        spec = LinearBsdeSpec(
            alpha=lambda t, x: np.zeros(x.shape[0]),
            terminal=lambda p: p[:, -1, 0], driver=TIME_DRIVER,
            diffusion=BROWNIAN, x0=np.array([0.0]),
            drift_change=lambda t, x: np.full_like(x, 2.0),
            drift_change_bound=1.0)
        with pytest.raises(DomainError, match="bound"):
            solve_linear_bsde(spec, GRID, 50, seed=1)


class TestLocalizationSweep:
    def test_inert_when_coefficients_compact(self):
        # driver coefficient vanishes outside |x| <= 1 and paths are frozen
        # only beyond the smallest radius, so all radii agree
        driver = driver_by_names("tent", "linear")
        problem = BsdeProblem(
            f=lambda t, x, y, z: np.zeros(x.shape[0]),
            g=lambda y: np.ones((np.size(y), 1)),
            terminal=lambda x: np.zeros(x.shape[0]), driver=driver,
            diffusion=diffusion_by_name("drift-only"), x0=np.array([0.0]),
            lipschitz_f=1e-9, lipschitz_terminal=1e-9)
        schedule = LocalizationSchedule(radii=np.array([2.0, 3.0, 4.0]),
                                        samples=200)
        finest, table = solve_bsde_with_localization(
            problem, schedule, GRID, seed=1)
        gaps = [row["gap"] for row in table]
        assert all(g == 0.0 for g in gaps)

    def test_common_random_numbers_deterministic(self):
        driver = driver_by_names("lorentz", "linear")
        problem = BsdeProblem(
            f=lambda t, x, y, z: np.zeros(x.shape[0]),
            g=lambda y: np.ones((np.size(y), 1)),
            terminal=lambda x: x[:, 0], driver=driver, diffusion=BROWNIAN,
            x0=np.array([0.0]), lipschitz_f=1e-9)
        schedule = LocalizationSchedule(radii=np.array([1.5, 2.5]),
                                        samples=2000)
        _, t1 = solve_bsde_with_localization(problem, schedule, GRID, seed=4)
        _, t2 = solve_bsde_with_localization(problem, schedule, GRID, seed=4)
        assert [r["gap"] for r in t1] == [r["gap"] for r in t2]

    def test_growth_bound_fit_and_holdout(self):
        # fit the growth envelope on half the start points, verify on the
        # other half: |Y0(x0)| <= C (1 + |x0|^max(1, (lam+beta)/eps))
        driver = driver_by_names("lorentz", "linear")
        x0s = np.array([-2.0, -1.0, -0.5, 0.5, 1.0, 2.0])
        values = []
        for x0 in x0s:
            problem = BsdeProblem(
                f=lambda t, x, y, z: np.zeros(x.shape[0]),
                g=lambda y: np.ones((np.size(y), 1)),
                terminal=lambda x: x[:, 0], driver=driver,
                diffusion=BROWNIAN, x0=np.array([x0]), lipschitz_f=1e-9,
                growth_eps=0.5)
            sol = solve_localized_bsde(problem, abs(x0) + 4.0, GRID, 4000,
                                       seed=31, spot_check=False)
            values.append(abs(sol.y0))
        power = max(1.0, (driver.lam + driver.beta) / 0.5)
        envelope = 1.0 + np.abs(x0s) ** power
        fit_c = np.max(np.asarray(values)[::2] / envelope[::2])
        assert np.all(np.asarray(values)[1::2]
                      <= 1.5 * fit_c * envelope[1::2] + 1e-9)


class TestExponentialMoment:
    def test_zero_coefficient_is_one(self):
        batch = brownian_batch(5000)
        est = exponential_moment_diagnostic(
            np.zeros((5000, 33)), driver_by_names("cos", "linear"), batch,
            exponent=2.0, radius=3.0)
        assert est.value == pytest.approx(1.0)

    def test_deterministic_driver_closed_form(self):
        batch = brownian_batch(2000)
        a = 0.7
        est = exponential_moment_diagnostic(
            np.full((2000, 33), a), TIME_DRIVER, batch, exponent=2.0,
            radius=50.0)
        # integral is deterministic: sup_t E exp(q a (T - t)) = e^{q a T}
        assert est.value == pytest.approx(math.exp(2.0 * a), rel=1e-9)
        assert est.argmax_time == 0.0

    def test_subquadratic_growth_in_radius(self):
        from youngbsde.fractional_sheet import SheetSpec, sample_sheet

        spec = SheetSpec(0.9, [0.75], TimeGrid(np.linspace(0, 1, 6), 1.0),
                         [np.linspace(-8.0, 8.0, 9)])
        sheet = sample_sheet(spec, seed=14)
        batch = brownian_batch(4000, seed=14)
        logs = []
        for radius in (2.0, 4.0):
            est = exponential_moment_diagnostic(
                np.ones((4000, 33)), sheet, batch, exponent=1.5,
                radius=radius)
            logs.append(max(est.log_value, 1e-12))
        growth = math.log(logs[1] / logs[0]) / math.log(2.0)
        assert growth < 2.0
