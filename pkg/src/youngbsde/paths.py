"""Time grids, sample paths, and path seminorms.

The p-variation, Hoelder, and uniform norms computed here are the grid
versions: suprema run over grid points only.  Sub-interval norms snap the
requested endpoints to the nearest grid points; the induced bias is a
documented property of the method, not corrected for.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

__all__ = [
    "TimeGrid",
    "SamplePath",
    "NormReport",
    "p_variation",
    "holder_norm",
    "uniform_norm",
    "p_variation_brute_force",
    "norm_report",
]


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing finite time axis inside [0, horizon]."""

    times: np.ndarray
    horizon: float

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", t)
        if t.ndim != 1 or t.size == 0:
            raise DomainError("time grid must be a nonempty 1-d array")
        if not np.all(np.isfinite(t)):
            raise DomainError("time grid contains non-finite entries")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise DomainError("time grid must be strictly increasing")
        if t[0] < 0 or t[-1] > self.horizon + 1e-12 * max(1.0, self.horizon):
            raise DomainError(
                f"grid range [{t[0]}, {t[-1]}] not inside [0, {self.horizon}]"
            )
        if self.horizon <= 0:
            raise DomainError("horizon must be positive")

    @classmethod
    def uniform(cls, horizon: float, steps: int, start: float = 0.0) -> "TimeGrid":
        if steps < 1:
            raise DomainError("need at least one step")
        return cls(np.linspace(start, horizon, steps + 1), horizon)

    def __len__(self) -> int:
        return self.times.size

    def index_of(self, t: float) -> int:
        """Index of the grid point nearest to t."""
        return int(np.argmin(np.abs(self.times - t)))

    def restrict(self, a: float, b: float) -> np.ndarray:
        """Indices of the sub-grid covering [a, b], endpoints snapped."""
        i, j = self.index_of(a), self.index_of(b)
        if j <= i:
            raise DomainError(f"degenerate restriction [{a}, {b}] on this grid")
        return np.arange(i, j + 1)


@dataclass(frozen=True)
class SamplePath:
    """d-dimensional path values on a time grid."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        object.__setattr__(self, "values", v)
        if v.shape[0] != len(self.grid):
            raise DomainError(
                f"{v.shape[0]} values for {len(self.grid)} grid points"
            )
        if not np.all(np.isfinite(v)):
            raise DomainError("path values contain non-finite entries")

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def restrict(self, a: float, b: float) -> "SamplePath":
        idx = self.grid.restrict(a, b)
        sub = TimeGrid(self.grid.times[idx], self.grid.horizon)
        return SamplePath(sub, self.values[idx])

    def interpolate(self, t: np.ndarray) -> np.ndarray:
        """Piecewise-linear values at arbitrary times, one column per dim."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((t.size, self.dim))
        for k in range(self.dim):
            out[:, k] = np.interp(t, self.grid.times, self.values[:, k])
        return out


@dataclass(frozen=True)
class NormReport:
    """Bundle of the three path seminorms at a given exponent."""

    p_variation: float
    holder: float
    uniform: float
    exponent: float
    holder_exponent: float = field(default=float("nan"))


def _increment_norms(values: np.ndarray) -> np.ndarray:
    """Matrix |g_j - g_i| of Euclidean increment sizes, shape (m, m)."""
    diff = values[None, :, :] - values[:, None, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def p_variation(path: SamplePath, p: float, mode: str = "exact") -> float:
    """p-variation of a grid path.

    mode="exact" maximizes sum |g_{a_{k+1}} - g_{a_k}|^p over all increasing
    index subsequences containing both endpoints, by dynamic programming over
    the end index (O(m^2)).  mode="refinement-limit" returns the full-grid
    partition value, a valid estimator when increments do not cancel.
    """
    if p < 1:
        raise DomainError(f"p-variation needs p >= 1, got {p}")
    values = path.values
    m = values.shape[0]
    if m < 2:
        raise DomainError("p-variation needs at least 2 grid points")
    if mode == "refinement-limit":
        steps = np.linalg.norm(np.diff(values, axis=0), axis=1)
        return float(np.sum(steps**p) ** (1.0 / p))
    if mode != "exact":
        raise DomainError(f"unknown p-variation mode {mode!r}")
    dist_p = _increment_norms(values) ** p
    best = np.full(m, -np.inf)
    best[0] = 0.0
    for j in range(1, m):
        best[j] = np.max(best[:j] + dist_p[:j, j])
    return float(best[-1] ** (1.0 / p))


def p_variation_brute_force(path: SamplePath, p: float) -> float:
    """Enumerate all sub-partitions (endpoints included).  Exponential in the
    grid size; the independent oracle for the DP, kept usable up to ~12 points.
    """
    if p < 1:
        raise DomainError(f"p-variation needs p >= 1, got {p}")
    values = path.values
    m = values.shape[0]
    if m < 2:
        raise DomainError("p-variation needs at least 2 grid points")
    if m > 16:
        raise DomainError("brute force limited to 16 points")
    dist_p = _increment_norms(values) ** p
    interior = m - 2
    sup = 0.0
    for mask in range(1 << interior):
        idx = [0]
        for b in range(interior):
            if mask >> b & 1:
                idx.append(b + 1)
        idx.append(m - 1)
        total = 0.0
        for a, b in zip(idx[:-1], idx[1:]):
            total += dist_p[a, b]
        if total > sup:
            sup = total
    return float(sup ** (1.0 / p))


def holder_norm(path: SamplePath, gamma: float) -> float:
    """max over grid pairs i<j of |g_j - g_i| / (t_j - t_i)^gamma."""
    if not 0 < gamma <= 1:
        raise DomainError(f"Hoelder exponent must lie in (0, 1], got {gamma}")
    m = len(path.grid)
    if m < 2:
        raise DomainError("Hoelder norm needs at least 2 grid points")
    inc = _increment_norms(path.values)
    dt = np.abs(path.times[None, :] - path.times[:, None])
    iu = np.triu_indices(m, k=1)
    return float(np.max(inc[iu] / dt[iu] ** gamma))


def uniform_norm(path: SamplePath) -> float:
    """max Euclidean magnitude over grid points."""
    if path.values.shape[0] == 0:
        raise DomainError("uniform norm of an empty path")
    return float(np.max(np.linalg.norm(path.values, axis=1)))


def norm_report(path: SamplePath, p: float, gamma: float,
                mode: str = "exact") -> NormReport:
    return NormReport(
        p_variation=p_variation(path, p, mode=mode),
        holder=holder_norm(path, gamma),
        uniform=uniform_norm(path),
        exponent=p,
        holder_exponent=gamma,
    )
