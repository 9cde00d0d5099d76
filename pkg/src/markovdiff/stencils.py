"""Fourth-order finite-difference stencils on uniform grids.

Interior rows use the 5-point central formulas; the two rows nearest each
edge use one-sided stencils of the same order, so every row of the first
derivative annihilates constants and the matrices are exact on
polynomials of degree <= 4.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.sparse as sp


def fd_weights(offsets, deriv: int) -> np.ndarray:
    """Weights w with sum_k w_k f(x + o_k h) ~ h**deriv f^(deriv)(x)."""
    offsets = np.asarray(offsets, dtype=float)
    npts = len(offsets)
    if deriv >= npts:
        raise ValueError("need more points than the derivative order")
    vander = np.vander(offsets, npts, increasing=True).T
    rhs = np.zeros(npts)
    rhs[deriv] = float(np.prod(np.arange(1, deriv + 1)))
    return np.linalg.solve(vander, rhs)


@lru_cache(maxsize=64)
def _stencil_rows(n: int, deriv: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if n < 8:
        raise ValueError("fourth-order stencils need at least 8 points")
    width = 5 if deriv == 1 else 6
    rows, cols, vals = [], [], []
    central = fd_weights([-2, -1, 0, 1, 2], deriv)
    for i in range(n):
        if 2 <= i <= n - 3:
            offs = np.arange(-2, 3)
            w = central
        elif i < 2:
            offs = np.arange(width) - i
            w = fd_weights(offs, deriv)
        else:
            offs = np.arange(-width + 1, 1) + (n - 1 - i)
            w = fd_weights(offs, deriv)
        rows.extend([i] * len(offs))
        cols.extend((i + offs).tolist())
        vals.extend(w.tolist())
    return np.array(rows), np.array(cols), np.array(vals)


def derivative_matrix(n: int, h: float, deriv: int = 1) -> sp.csr_matrix:
    """Sparse n x n matrix of the fourth-order derivative of order 1 or 2."""
    if deriv not in (1, 2):
        raise ValueError("only first and second derivatives are provided")
    rows, cols, vals = _stencil_rows(n, deriv)
    return sp.csr_matrix((vals / h**deriv, (rows, cols)), shape=(n, n))


def derivative(values: np.ndarray, h: float, axis: int = 0, deriv: int = 1) -> np.ndarray:
    """Apply the derivative stencil along one axis of an n-d array."""
    values = np.asarray(values)
    moved = np.moveaxis(values, axis, 0)
    n = moved.shape[0]
    mat = derivative_matrix(n, h, deriv)
    out = mat @ moved.reshape(n, -1)
    return np.moveaxis(out.reshape(moved.shape), 0, axis)


def gradient(values: np.ndarray, spacing) -> list[np.ndarray]:
    return [derivative(values, h, axis=k, deriv=1) for k, h in enumerate(spacing)]


def laplacian(values: np.ndarray, spacing) -> np.ndarray:
    return sum(derivative(values, h, axis=k, deriv=2) for k, h in enumerate(spacing))
