"""Least-squares Monte Carlo regression: polynomial state bases and ridge
normal equations shared by the BSDE and PDE layers."""

from __future__ import annotations

from itertools import combinations_with_replacement

import numpy as np

from .errors import NumericalError

__all__ = ["poly_basis", "basis_size", "ridge_fit", "fit_predict"]

DEFAULT_RIDGE = 1e-8
_RIDGE_CEILING = 1e-2


def basis_size(dim: int, degree: int) -> int:
    return sum(1 for d in range(degree + 1)
               for _ in combinations_with_replacement(range(dim), d))


def poly_basis(x: np.ndarray, degree: int) -> np.ndarray:
    """Monomials of total degree <= degree in the columns of x (S, d);
    first column is the constant."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    cols = [np.ones(x.shape[0])]
    for d in range(1, degree + 1):
        for combo in combinations_with_replacement(range(x.shape[1]), d):
            col = np.ones(x.shape[0])
            for j in combo:
                col = col * x[:, j]
            cols.append(col)
    return np.column_stack(cols)


def ridge_fit(basis: np.ndarray, targets: np.ndarray,
              ridge: float = DEFAULT_RIDGE) -> np.ndarray:
    """Coefficients of ridge least squares, shape (n_basis, k).

    The ridge is relative to the mean diagonal of the normal matrix, so a
    constant-state regression degrades gracefully to the sample mean.
    Escalates the ridge on numerical failure before giving up.
    """
    targets = np.asarray(targets, dtype=float)
    squeeze = targets.ndim == 1
    if squeeze:
        targets = targets[:, None]
    gram = basis.T @ basis
    rhs = basis.T @ targets
    scale = max(float(np.mean(np.diag(gram))), 1e-300)
    level = ridge
    while level <= _RIDGE_CEILING:
        try:
            coeffs = np.linalg.solve(gram + level * scale * np.eye(len(gram)),
                                     rhs)
            if np.all(np.isfinite(coeffs)):
                return coeffs[:, 0] if squeeze else coeffs
        except np.linalg.LinAlgError:
            pass
        level *= 10.0
    raise NumericalError(
        f"regression normal equations unsolvable up to ridge {_RIDGE_CEILING:g}"
        f" (n={basis.shape[0]}, basis={basis.shape[1]})")


def fit_predict(basis: np.ndarray, targets: np.ndarray,
                ridge: float = DEFAULT_RIDGE
                ) -> tuple[np.ndarray, np.ndarray]:
    """In-sample fitted values and the coefficients that produced them."""
    coeffs = ridge_fit(basis, targets, ridge)
    return basis @ coeffs, coeffs
