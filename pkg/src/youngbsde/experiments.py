"""Experiment implementations behind the CLI: one handler per config kind.

Handlers validate their inputs, compute fully in memory, then emit CSVs in a
deterministic order; parallelism only ever spans independent jobs keyed by
their own seeds, so worker counts never change any output byte.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bsde import (BsdeProblem, LinearBsdeSpec, LocalizationSchedule,
                   PicardConfig, solve_bsde_with_localization,
                   solve_linear_bsde, tower_rule_defect)
from .config import ExperimentConfig
from .csvio import write_csv
from .diffusion import exit_tail_decay, simulate
from .drivers import save_sampled_driver
from .errors import ConfigError
from .fractional_sheet import SheetSpec, hurst_region_grid, sample_sheet
from .paths import SamplePath, TimeGrid
from .pde_fk import (NonLipschitzProblem, fk_point_estimate,
                     localization_error_experiment)
from .registry import (diffusion_by_name, driver_by_names, drift_change_function,
                       path_function, terminal_function,
                       y_coefficient_function)
from .rng import hash64
from .young_calculus import (flow_inverse, flow_product_defect,
                             nonlinear_young_integral, solve_flow)

__all__ = ["run_experiment", "RunResult", "parallel_map"]


@dataclass
class RunResult:
    files: list = field(default_factory=list)
    converged: bool = True
    notes: dict = field(default_factory=dict)


def parallel_map(fn, items, workers: int) -> list:
    """Order-preserving map over independent jobs; thread pool when asked."""
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _grid(horizon: float, steps: int) -> TimeGrid:
    return TimeGrid.uniform(horizon, steps)


# -- handlers ----------------------------------------------------------------

def _run_simulate_fbs(cfg, out: Path, workers: int) -> RunResult:
    v = cfg.values
    times = np.linspace(0.0, v["horizon"], v["time_points"])
    axes = [np.linspace(v["space_min"], v["space_max"], v["space_points"])
            for _ in range(v["sdim"])]
    spec = SheetSpec(v["h0"], [v["h"]] * v["sdim"],
                     TimeGrid(times, v["horizon"]), axes)
    jitter = None if v["jitter"] < 0 else v["jitter"]
    driver = sample_sheet(spec, seed=v["seed"], jitter=jitter)
    path = out / "sheet.csv"
    save_sampled_driver(driver, path)
    meta = write_csv(out / "sheet_meta.csv",
                     ["h0", "h", "sdim", "jitter_used", "tau", "lam", "beta"],
                     [[v["h0"], v["h"], v["sdim"],
                       driver.payload["jitter"], driver.tau, driver.lam,
                       driver.beta]])
    return RunResult(files=[path, meta])


def _run_young_integral(cfg, out: Path, workers: int) -> RunResult:
    v = cfg.values
    grid = TimeGrid(np.linspace(v["lower"], v["upper"], v["steps"] + 1),
                    v["horizon"])
    y = SamplePath(grid, path_function(v["integrand"])(grid.times))
    x = SamplePath(grid, path_function(v["space_path"])(grid.times))
    driver = driver_by_names(v["driver_space"], v["driver_time"],
                             amplitude=v["amplitude"])
    result = nonlinear_young_integral(y, x, driver, tol_abs=v["tol_abs"],
                                      tol_rel=v["tol_rel"],
                                      max_levels=v["max_levels"])
    rows = [[ch, result.value[ch], result.levels, result.cauchy_gap,
             result.converged] for ch in range(result.value.size)]
    path = write_csv(out / "integral.csv",
                     ["channel", "value", "levels", "cauchy_gap", "converged"],
                     rows)
    return RunResult(files=[path], converged=result.converged)


def _flow_alpha(kind: str, times: np.ndarray, n_dim: int) -> np.ndarray:
    m = times.size
    if n_dim == 1:
        if kind != "ones":
            raise ConfigError("n_dim=1 supports alpha_kind=ones")
        return np.ones((m, 1, 1, 1))
    rot = np.array([[0.0, 1.0], [-1.0, 0.0]])
    if kind == "constant-rotation":
        return np.broadcast_to(rot, (m, 1, 2, 2)).copy()
    if kind == "rotation-scaled":
        scale = 1.0 + 0.5 * times
        return scale[:, None, None, None] * rot[None, None, :, :]
    raise ConfigError(f"unknown alpha_kind {kind!r} for n_dim=2")


def _run_flow(cfg, out: Path, workers: int) -> RunResult:
    v = cfg.values
    grid = _grid(v["horizon"], v["steps"])
    x = SamplePath(grid, path_function(v["x_path"])(grid.times))
    driver = driver_by_names(v["driver_space"], v["driver_time"])
    alpha = _flow_alpha(v["alpha_kind"], grid.times, v["n_dim"])
    flow = solve_flow(alpha, driver, x, base_time=v["base_time"],
                      mode=v["mode"], richardson=v["richardson"])
    split_time = grid.times[int(round(v["product_split"]
                                      * (grid.times.size - 1)))]
    flow_mid = solve_flow(alpha, driver, x, base_time=split_time,
                          mode=v["mode"])
    defect = flow_product_defect(flow, flow_mid)
    inverse = flow_inverse(flow)
    inv_residual = float(np.max(np.abs(
        np.einsum("kij,kjl->kil", inverse.matrices, flow.matrices)
        - np.eye(flow.dim))))
    n = flow.dim
    header = ["time"] + [f"g{i + 1}{j + 1}" for i in range(n)
                         for j in range(n)]
    rows = [[t, *mat.ravel()] for t, mat in zip(flow.times, flow.matrices)]
    f1 = write_csv(out / "flow.csv", header, rows)
    f2 = write_csv(out / "flow_diagnostics.csv",
                   ["product_defect", "inverse_identity_residual",
                    "richardson_error", "mode", "split_time"],
                   [[defect, inv_residual,
                     flow.error_estimate if flow.error_estimate is not None
                     else float("nan"), flow.mode, split_time]])
    return RunResult(files=[f1, f2])


def _run_linear_bsde(cfg, out: Path, workers: int) -> RunResult:
    v = cfg.values
    grid = _grid(v["horizon"], v["steps"])
    diffusion = diffusion_by_name(v["diffusion"])
    driver = driver_by_names(v["driver_space"], v["driver_time"],
                             amplitude=v["amplitude"])
    terminal = terminal_function(v["terminal"])
    alpha_fn = (lambda t, x: np.zeros(x.shape[0])) if v["alpha"] == "zero" \
        else (lambda t, x: np.ones(x.shape[0]))
    spec = LinearBsdeSpec(
        alpha=alpha_fn, terminal=lambda paths: terminal(paths[:, -1, :]),
        driver=driver, diffusion=diffusion, x0=np.array([v["x0"]]),
        drift_change=drift_change_function(v["drift_change"],
                                           v["drift_change_amplitude"]),
        alpha_bound=1.0)
    sol = solve_linear_bsde(spec, grid, v["samples"], v["seed"])
    path = write_csv(out / "linear_solution.csv",
                     ["time", "y0", "standard_error", "samples"],
                     [[0.0, sol.y0, sol.y0_standard_error, v["samples"]]])
    return RunResult(files=[path])


def _run_nonlinear_bsde(cfg, out: Path, workers: int) -> RunResult:
    v = cfg.values
    grid = _grid(v["horizon"], v["steps"])
    diffusion = diffusion_by_name(v["diffusion"])
    driver = driver_by_names(v["driver_space"], v["driver_time"],
                             amplitude=v["amplitude"])
    terminal = terminal_function(v["terminal"])
    rate = v["reaction_rate"]
    problem = BsdeProblem(
        f=lambda t, x, y, z: rate * y, g=y_coefficient_function(v["g"]),
        terminal=terminal, driver=driver, diffusion=diffusion,
        x0=np.array([v["x0"]]), coefficient_bound=1.0,
        lipschitz_f=max(abs(rate), 1e-9))
    schedule = LocalizationSchedule(radii=np.asarray(v["radii"]),
                                    samples=v["samples"],
                                    min_start=abs(v["x0"]))
    picard = PicardConfig(tolerance=v["picard_tol"],
                          max_iterations=v["picard_max"])
    finest, table = solve_bsde_with_localization(
        problem, schedule, grid, v["seed"], basis_degree=v["basis_degree"],
        picard=picard)
    f1 = write_csv(out / "localization_decay.csv",
                   ["radius", "y0", "gap_to_finest", "standard_error",
                    "exit_probability", "max_abs_y"],
                   [[row["radius"], row["y0"], row["gap"], row["se"],
                     row["exit_probability"], row["max_abs_y"]]
                    for row in table])
    nb = len(finest.y_coefficients[0]) if finest.y_coefficients[0] is not None \
        else 0
    header = (["time"] + [f"y_c{i}" for i in range(nb)]
              + [f"z_c{i}" for i in range(nb)]
              + ["residual_mean", "residual_se"])
    rows = []
    res = finest.martingale_residual
    for i, t in enumerate(grid.times[:-1]):
        yc = finest.y_coefficients[i]
        zc = finest.z_coefficients[i]
        rows.append([t,
                     *(yc if yc is not None else [float("nan")] * nb),
                     *(zc[:, 0] if zc is not None else [float("nan")] * nb),
                     res["mean"][i], res["se"][i]])
    f2 = write_csv(out / "solution_coefficients.csv", header, rows)
    return RunResult(files=[f1, f2], converged=finest.converged)


def _run_pde_fk(cfg, out: Path, workers: int) -> RunResult:
    v = cfg.values
    diffusion = diffusion_by_name(v["diffusion"])
    driver = driver_by_names(v["driver_space"], v["driver_time"],
                             amplitude=v["amplitude"])
    terminal = terminal_function(v["terminal"])
    points = [(v["eval_time"], [x]) for x in v["eval_xs"]]

    def job(indexed):
        j, (t, x) = indexed
        return fk_point_estimate(diffusion, driver, terminal, t, x,
                                 v["horizon"], v["steps"], v["samples"],
                                 hash64(v["seed"], j))

    results = parallel_map(job, list(enumerate(points)), workers)
    rows = [[t, x[0], u, se, v["samples"]]
            for (t, x), (u, se) in zip(points, results)]
    path = write_csv(out / "pde_table.csv",
                     ["time", "x", "u", "standard_error", "samples"], rows)
    return RunResult(files=[path])


def _run_localization_error(cfg, out: Path, workers: int) -> RunResult:
    v = cfg.values
    diffusion = diffusion_by_name(v["diffusion"])
    terminal = terminal_function(v["terminal"])
    if v["reaction_kind"] == "zero":
        f0 = lambda t, x, y, z: np.zeros(x.shape[0])
        big_f0 = lambda t, x, y, z: np.zeros(x.shape[0])
    else:
        from .registry import space_function

        vx = space_function(v["reaction_space"])
        gy = y_coefficient_function(v["reaction_g"])
        f0 = lambda t, x, y, z: np.zeros(x.shape[0])
        big_f0 = lambda t, x, y, z: vx(x) * gy(y)[:, 0]
    problem = NonLipschitzProblem(
        f0=f0, big_f0=big_f0, terminal=terminal, diffusion=diffusion,
        horizon=v["horizon"], theta1=v["theta1"], theta2=v["theta2"],
        theta3=v["theta3"])
    report = localization_error_experiment(
        problem, v["radii"], [np.array([x]) for x in v["eval_xs"]],
        samples=v["samples"], seed=v["seed"], steps=v["steps"],
        reference_radius=v["reference_radius"],
        min_detectable_z=v["min_detectable_z"])
    fit_rows = [[pt[0], report.slopes[j], report.intercepts[j],
                 report.r_squared[j], report.reference_values[j]]
                for j, pt in enumerate(report.eval_points)]
    f1 = write_csv(out / "decay_fits.csv",
                   ["x", "slope", "intercept", "r_squared",
                    "reference_value"], fit_rows)
    gap_rows = []
    for j, pt in enumerate(report.eval_points):
        for k, r in enumerate(report.radii):
            gap_rows.append([pt[0], r, report.gaps[j, k],
                             report.gap_ses[j, k],
                             bool(report.saturated[j, k])])
    f2 = write_csv(out / "decay_gaps.csv",
                   ["x", "radius", "gap", "standard_error", "saturated"],
                   gap_rows)
    return RunResult(files=[f1, f2])


def _run_hurst_region(cfg, out: Path, workers: int) -> RunResult:
    v = cfg.values
    table = hurst_region_grid(v["d"], v["resolution"])
    path = write_csv(out / "hurst_region.csv", ["H", "H0", "admissible"],
                     [[row["h"], row["h0"], row["admissible"]]
                      for row in table])
    return RunResult(files=[path])


def _run_tower_rule(cfg, out: Path, workers: int) -> RunResult:
    v = cfg.values
    grid = _grid(v["horizon"], v["steps"])
    diffusion = diffusion_by_name(v["diffusion"])
    driver = driver_by_names(v["driver_space"], v["driver_time"])
    batch = simulate(diffusion, [v["x0"]], grid, v["samples"], v["seed"])
    x_terminal = batch.paths[:, -1, 0]
    if v["a_process"] == "terminal-linear":
        a_vals = np.tile(x_terminal[:, None], (1, grid.times.size))
    else:
        a_vals = np.tile((x_terminal**2)[:, None], (1, grid.times.size))
    b_vals = np.ones((v["samples"], grid.times.size)) \
        if v["b_process"] == "one" else batch.paths[:, :, 0]
    est1, est2, se = tower_rule_defect(a_vals, b_vals, driver, batch,
                                       t_index=v["t_index"],
                                       basis_degree=v["basis_degree"])
    z = abs(est1 - est2) / se if se > 0 else 0.0
    path = write_csv(out / "tower.csv",
                     ["estimator_raw", "estimator_conditioned",
                      "combined_standard_error", "z_score"],
                     [[est1, est2, se, z]])
    return RunResult(files=[path])


def _run_exit_decay(cfg, out: Path, workers: int) -> RunResult:
    v = cfg.values
    grid = _grid(v["horizon"], v["steps"])
    diffusion = diffusion_by_name(v["diffusion"])
    fit = exit_tail_decay(diffusion, [v["x0"]], v["radii"], grid,
                          v["samples"], v["seed"])
    f1 = write_csv(out / "exit_probabilities.csv",
                   ["radius", "probability", "standard_error"],
                   [[r, p, s] for r, p, s in
                    zip(fit.radii, fit.probabilities, fit.standard_errors)])
    f2 = write_csv(out / "exit_decay_fit.csv",
                   ["slope", "intercept", "r_squared", "radii_used",
                    "radii_dropped"],
                   [[fit.slope, fit.intercept, fit.r_squared,
                     len(fit.radii), len(fit.dropped)]])
    return RunResult(files=[f1, f2])


_HANDLERS = {
    "simulate-fbs": _run_simulate_fbs,
    "young-integral": _run_young_integral,
    "flow": _run_flow,
    "linear-bsde": _run_linear_bsde,
    "nonlinear-bsde": _run_nonlinear_bsde,
    "pde-fk": _run_pde_fk,
    "localization-error": _run_localization_error,
    "hurst-region": _run_hurst_region,
    "tower-rule": _run_tower_rule,
    "exit-decay": _run_exit_decay,
}


def run_experiment(config: ExperimentConfig, out_dir,
                   workers: int | None = None) -> RunResult:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    handler = _HANDLERS[config.kind]
    if workers is None:
        workers = config.values.get("workers", 1)
    return handler(config, out, workers)
