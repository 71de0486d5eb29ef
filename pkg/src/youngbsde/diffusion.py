"""Forward diffusion simulation, first-exit detection, and the exit-tail
decay experiment.

Coefficients are opaque vectorized callables with a declared uniform bound L;
the bound is enforced by run-time spot checks at every visited state, not by
symbolic analysis.  Exits are detected at grid points only (the continuous
overshoot bias shrinks with the step size and is not bridge-corrected).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ResourceError
from .paths import SamplePath, TimeGrid
from .rng import hash64

__all__ = [
    "DiffusionSpec",
    "PathBatch",
    "ExitReport",
    "ExitDecayFit",
    "simulate",
    "first_exit",
    "exit_tail_decay",
    "sample_pvar",
    "NO_EXIT",
]

NO_EXIT = -1


@dataclass(frozen=True)
class DiffusionSpec:
    """Bounded Lipschitz coefficients (sigma, b) with uniform bound L.

    sigma maps (t, x:(S,d)) -> (S,d,d); b maps (t, x:(S,d)) -> (S,d).
    Scalar shorthands ((S,) outputs for d == 1) are accepted.  ellipticity=0
    means "not asserted"; a positive value is spot-checked on visited states.
    """

    sigma: callable
    drift: callable
    bound: float
    lipschitz: float
    dim: int
    ellipticity: float = 0.0
    name: str = ""

    def __post_init__(self):
        if self.bound <= 0 or self.lipschitz <= 0 or self.dim < 1:
            raise DomainError("bound, lipschitz and dim must be positive")
        if self.ellipticity < 0:
            raise DomainError("ellipticity must be >= 0")

    def sigma_at(self, t: float, x: np.ndarray) -> np.ndarray:
        out = np.asarray(self.sigma(t, x), dtype=float)
        if out.ndim == 1:
            out = out[:, None, None]
        return out.reshape(x.shape[0], self.dim, self.dim)

    def drift_at(self, t: float, x: np.ndarray) -> np.ndarray:
        out = np.asarray(self.drift(t, x), dtype=float)
        if out.ndim == 1:
            out = out[:, None]
        return out.reshape(x.shape[0], self.dim)

    def check_bounds(self, t: float, sig: np.ndarray, dri: np.ndarray) -> None:
        worst_sigma = float(np.max(np.sqrt(np.sum(sig * sig, axis=(1, 2)))))
        worst_drift = float(np.max(np.linalg.norm(dri, axis=1)))
        if worst_sigma > self.bound * (1 + 1e-12) or \
                worst_drift > self.bound * (1 + 1e-12):
            raise DomainError(
                f"coefficient bound violated at t={t:g}: |sigma|="
                f"{worst_sigma:g}, |b|={worst_drift:g} exceed the declared "
                f"uniform bound L={self.bound:g}")
        if self.ellipticity > 0:
            gram = np.einsum("sij,skj->sik", sig, sig)
            smallest = float(np.min(np.linalg.eigvalsh(gram)))
            if smallest < self.ellipticity * (1 - 1e-9):
                raise DomainError(
                    f"ellipticity violated at t={t:g}: smallest sigma*sigma^T "
                    f"eigenvalue {smallest:g} < declared {self.ellipticity:g}")


@dataclass(frozen=True)
class PathBatch:
    """S simulated paths with their Brownian increments; fully reproducible
    from (spec, grid, seed) and stable under enlarging S."""

    grid: TimeGrid
    paths: np.ndarray
    increments: np.ndarray
    seed: int
    spec: DiffusionSpec = field(repr=False, default=None)

    @property
    def samples(self) -> int:
        return self.paths.shape[0]

    @property
    def dim(self) -> int:
        return self.paths.shape[2]

    def path(self, i: int) -> SamplePath:
        return SamplePath(self.grid, self.paths[i])


@dataclass(frozen=True)
class ExitReport:
    """Per-sample first-exit data for one radius."""

    radius: float
    exit_index: np.ndarray
    exit_time: np.ndarray
    probability: float
    standard_error: float

    @property
    def exited(self) -> np.ndarray:
        return self.exit_index != NO_EXIT


@dataclass(frozen=True)
class ExitDecayFit:
    """OLS fit of log exit probability against squared excess radius."""

    slope: float
    intercept: float
    r_squared: float
    radii: np.ndarray
    probabilities: np.ndarray
    standard_errors: np.ndarray
    dropped: list


def _normal_increments(seed: int, samples: int, steps: int, dim: int,
                       dts: np.ndarray, offset: int) -> np.ndarray:
    """Brownian increments, one counter-based stream per sample index."""
    out = np.empty((samples, steps, dim))
    sqrt_dt = np.sqrt(dts)[:, None]
    for i in range(samples):
        key = hash64(seed, offset + i)
        gen = np.random.Generator(np.random.Philox(key=key))
        out[i] = gen.standard_normal((steps, dim)) * sqrt_dt
    return out


def simulate(spec: DiffusionSpec, x0, grid: TimeGrid, samples: int,
             seed: int, sample_offset: int = 0) -> PathBatch:
    """Euler scheme X_{i+1} = X_i + b dt + sigma dW over the grid.

    Deterministic in (spec, grid, samples, seed); sample i depends only on
    (seed, sample_offset + i), so chunked generation with a running offset
    reproduces one big batch.  Raises DomainError if a visited state violates
    the declared coefficient bound.
    """
    if samples < 1:
        raise DomainError("need at least one sample")
    x0 = np.asarray(x0, dtype=float).reshape(spec.dim)
    times = grid.times
    steps = times.size - 1
    dts = np.diff(times)
    dw = _normal_increments(seed, samples, steps, spec.dim, dts,
                            sample_offset)
    paths = np.empty((samples, steps + 1, spec.dim))
    paths[:, 0, :] = x0
    state = np.broadcast_to(x0, (samples, spec.dim)).copy()
    for i in range(steps):
        sig = spec.sigma_at(times[i], state)
        dri = spec.drift_at(times[i], state)
        spec.check_bounds(times[i], sig, dri)
        state = state + dri * dts[i] + np.einsum("sij,sj->si", sig, dw[:, i])
        paths[:, i + 1, :] = state
    return PathBatch(grid=grid, paths=paths, increments=dw, seed=seed,
                     spec=spec)


def first_exit(batch: PathBatch, radius: float) -> ExitReport:
    """First grid index with |X| > radius per sample (NO_EXIT sentinel when
    the path stays inside); the exit time is capped at the horizon."""
    if radius <= 0:
        raise DomainError("exit radius must be positive")
    norms = np.linalg.norm(batch.paths, axis=2)
    outside = norms > radius
    any_exit = outside.any(axis=1)
    first = np.where(any_exit, outside.argmax(axis=1), NO_EXIT)
    times = batch.grid.times
    exit_time = np.where(any_exit, times[np.maximum(first, 0)], times[-1])
    exited_before_horizon = any_exit & (exit_time < times[-1])
    p = float(np.mean(exited_before_horizon))
    se = math.sqrt(max(p * (1 - p), 0.0) / batch.samples)
    return ExitReport(radius=float(radius), exit_index=first,
                      exit_time=exit_time, probability=p, standard_error=se)


def exit_tail_decay(spec: DiffusionSpec, x0, radii, grid: TimeGrid,
                    samples: int, seed: int) -> ExitDecayFit:
    """Regress log P(exit before the horizon) on (radius - |x0|)^2.

    Radii below |x0| are rejected; radii with no observed exits are dropped
    with a warning.  At least 3 usable radii are required for the fit.
    """
    x0 = np.asarray(x0, dtype=float).reshape(spec.dim)
    x0_norm = float(np.linalg.norm(x0))
    radii = np.sort(np.asarray(radii, dtype=float))
    if np.any(radii < x0_norm):
        raise DomainError(
            f"all radii must be >= |x0| = {x0_norm:g}; got {radii.tolist()}")
    batch = simulate(spec, x0, grid, samples, seed)
    probs, ses, kept, dropped = [], [], [], []
    for r in radii:
        report = first_exit(batch, r)
        if report.probability == 0.0:
            dropped.append(float(r))
            warnings.warn(f"radius {r:g}: no exits observed, dropped from fit")
            continue
        probs.append(report.probability)
        ses.append(report.standard_error)
        kept.append(float(r))
    if len(kept) < 3:
        raise DomainError(
            f"only {len(kept)} radii with nonzero exit probability; "
            "need at least 3 (degenerate input)")
    kept = np.asarray(kept)
    probs_arr = np.asarray(probs)
    xs = (kept - x0_norm) ** 2
    ys = np.log(probs_arr)
    slope, intercept = np.polyfit(xs, ys, 1)
    fitted = slope * xs + intercept
    ss_res = float(np.sum((ys - fitted) ** 2))
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return ExitDecayFit(slope=float(slope), intercept=float(intercept),
                        r_squared=float(r2), radii=kept,
                        probabilities=probs_arr, standard_errors=np.asarray(ses),
                        dropped=dropped)


def export_batch_csv(batch: PathBatch, path, max_cells: int = 2_000_000):
    """Debug dump of a batch as (sample, time index, coordinates) rows.

    Refuses batches whose flat size exceeds max_cells; trim the batch first.
    """
    from .csvio import write_csv

    cells = batch.samples * len(batch.grid) * (batch.dim + 2)
    if cells > max_cells:
        raise ResourceError(
            f"batch export would write {cells} cells, above the guard "
            f"{max_cells}; reduce samples or raise max_cells")
    header = ["sample", "time_index", "time"] + [f"x{k}" for k in
                                                 range(batch.dim)]
    rows = []
    for s in range(batch.samples):
        for i, t in enumerate(batch.grid.times):
            rows.append([s, i, t, *batch.paths[s, i, :]])
    return write_csv(path, header, rows)


def sample_pvar(batch: PathBatch, p: float, mode: str = "refinement-limit"
                ) -> np.ndarray:
    """Per-sample p-variation over the batch.

    refinement-limit (full-partition sums) is vectorized over samples; exact
    runs the dynamic program per sample and is meant for small batches.  The
    sample mean of these values to a power q is the Monte Carlo stand-in for
    the conditional p-variation moments used in the estimates: a per-sample
    statistic, not an essential supremum.
    """
    if p < 1:
        raise DomainError(f"p-variation needs p >= 1, got {p}")
    steps = np.linalg.norm(np.diff(batch.paths, axis=1), axis=2)
    if mode == "refinement-limit":
        return np.sum(steps**p, axis=1) ** (1.0 / p)
    if mode != "exact":
        raise DomainError(f"unknown p-variation mode {mode!r}")
    from .paths import p_variation

    return np.array([p_variation(batch.path(i), p, mode="exact")
                     for i in range(batch.samples)])
