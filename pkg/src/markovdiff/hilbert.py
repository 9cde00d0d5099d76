"""Discrete operator calculus on the rho-weighted function space.

Functions on a grid are flattened in C order; operators are sparse
matrices acting on those vectors. Operator words are strings read left to
right in time order (leftmost earliest) and applied right to left to the
function they act on:

    ``x``  multiplication by the coordinate
    ``v``  the velocity operator b + nu d/dx (nu d/dx for the Wiener process)
    ``a``  multiplication by the acceleration field -dU/dx
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.integrate import cumulative_simpson

from . import stencils
from .core import Grid, ScalarField

BOUNDARY_WIDTH = 4


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    grid: Grid
    matrix: sp.csr_matrix
    label: str = ""

    def __post_init__(self):
        size = int(np.prod(self.grid.shape))
        if self.matrix.shape != (size, size):
            raise ValueError("operator size does not match the grid")
        object.__setattr__(self, "matrix", sp.csr_matrix(self.matrix))

    def apply(self, values) -> np.ndarray:
        vals = np.asarray(values, dtype=float)
        return (self.matrix @ vals.ravel()).reshape(self.grid.shape)

    def __matmul__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        _same_grid(self.grid, other.grid)
        return OperatorMatrix(self.grid, self.matrix @ other.matrix, f"{self.label}{other.label}")

    def __add__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        _same_grid(self.grid, other.grid)
        return OperatorMatrix(self.grid, self.matrix + other.matrix, f"({self.label}+{other.label})")

    def scaled(self, factor: float) -> "OperatorMatrix":
        return OperatorMatrix(self.grid, factor * self.matrix, f"{factor}*{self.label}")

    def commutator(self, other: "OperatorMatrix") -> "OperatorMatrix":
        _same_grid(self.grid, other.grid)
        return OperatorMatrix(self.grid, self.matrix @ other.matrix - other.matrix @ self.matrix,
                              f"[{self.label},{other.label}]")


def _same_grid(a: Grid, b: Grid) -> None:
    if a != b:
        raise ValueError("fields or operators live on different grids")


def _vals(f, grid: Grid | None = None) -> np.ndarray:
    if isinstance(f, ScalarField):
        if grid is not None:
            _same_grid(f.grid, grid)
        return f.values
    return np.asarray(f, dtype=float)


def derivative_operator(grid: Grid, axis: int = 0, deriv: int = 1) -> OperatorMatrix:
    factors = [sp.identity(n, format="csr") for n in grid.n]
    factors[axis] = stencils.derivative_matrix(grid.n[axis], grid.h[axis], deriv)
    mat = reduce(lambda a, b: sp.kron(a, b, format="csr"), factors)
    return OperatorMatrix(grid, mat, "D" if deriv == 1 else "D2")


def multiplication_operator(values, grid: Grid, label: str = "m") -> OperatorMatrix:
    return OperatorMatrix(grid, sp.diags(_vals(values, grid).ravel()), label)


def position_operator(grid: Grid, axis: int = 0) -> OperatorMatrix:
    return multiplication_operator(grid.mesh()[axis], grid, "x")


def weighted_inner_product(f, g, rho: ScalarField) -> float:
    """Trapezoidal integral of rho f g."""
    fv, gv = _vals(f, rho.grid), _vals(g, rho.grid)
    return rho.grid.integrate(rho.values * fv * gv)


def velocity_operator(b, nu: float, grid: Grid, axis: int = 0) -> OperatorMatrix:
    """Matrix of g -> b g + nu dg/dx along one axis; b may be 0 or a field."""
    drift = np.zeros(grid.shape) if np.isscalar(b) and b == 0 else _vals(b, grid)
    D = derivative_operator(grid, axis)
    return OperatorMatrix(grid, sp.diags(np.broadcast_to(drift, grid.shape).ravel()) + nu * D.matrix,
                          "v")


def commutator_residual(A: OperatorMatrix, B: OperatorMatrix, test_fns: Sequence,
                        expected: float | Callable = 0.0,
                        boundary: int = BOUNDARY_WIDTH) -> float:
    """max_g || (AB - BA) g - expected(g) ||_inf over interior points.

    ``expected`` is either a scalar c (meaning c * g) or a callable g -> array.
    """
    comm = A.commutator(B)
    inner = A.grid.interior(boundary)
    worst = 0.0
    for g in test_fns:
        gv = _vals(g, A.grid)
        target = expected * gv if np.isscalar(expected) else np.asarray(expected(gv))
        diff = comm.apply(gv) - target
        worst = max(worst, float(np.max(np.abs(diff[inner]))))
    return worst


def curl_2d(b1: np.ndarray, b2: np.ndarray, grid: Grid, i: int = 0, j: int = 1) -> np.ndarray:
    """d_i b_j - d_j b_i."""
    return (stencils.derivative(b2, grid.h[i], axis=i) - stencils.derivative(b1, grid.h[j], axis=j))


def acceleration_field(b, nu: float, db_dt=None, curl_tol: float = 1e-6):
    """Acceleration db/dt + (nu/2) lap b + grad(b^2)/2.

    ``b`` is a ScalarField in 1-D or a sequence of component fields for
    dim 2 or 3, in which case the drift must be curl-free (checked on the
    interior relative to the size of grad b) and a list is returned.
    """
    if isinstance(b, ScalarField):
        comps, grid = [b.values], b.grid
    else:
        comps, grid = [_vals(c) for c in b], b[0].grid
    if len(comps) != grid.dim:
        raise ValueError("need one drift component per dimension")
    if db_dt is None:
        rates = [np.zeros(grid.shape)] * grid.dim
    elif isinstance(db_dt, ScalarField):
        rates = [db_dt.values]
    else:
        rates = [_vals(r) for r in db_dt]
    if grid.dim > 1:
        inner = grid.interior(BOUNDARY_WIDTH)
        scale = max(float(np.max(np.abs(stencils.derivative(c, h, axis=k)[inner])))
                    for c in comps for k, h in enumerate(grid.h)) or 1.0
        for i in range(grid.dim):
            for j in range(i + 1, grid.dim):
                curl = curl_2d(comps[i], comps[j], grid, i, j)
                if np.max(np.abs(curl[inner])) > curl_tol * scale:
                    raise ValueError("drift has non-zero curl; magnetic dynamics unsupported")
    speed2 = sum(c**2 for c in comps)
    out = []
    for k, comp in enumerate(comps):
        acc = (rates[k] + 0.5 * nu * stencils.laplacian(comp, grid.h)
               + 0.5 * stencils.derivative(speed2, grid.h[k], axis=k))
        out.append(ScalarField(grid, acc))
    return out[0] if grid.dim == 1 else out


def stochastic_potential(accel: ScalarField) -> ScalarField:
    """U with -dU/dx = acceleration and U(x_min) = 0 (1-D)."""
    if accel.grid.dim != 1:
        raise ValueError("stochastic potential by quadrature is 1-D only")
    U = -cumulative_simpson(accel.values, x=accel.grid.x, initial=0.0)
    return accel.with_values(U)


def apply_word(word: str, grid: Grid, nu: float, start, drift=0.0, accel=None) -> np.ndarray:
    """Apply an operator word right to left to ``start`` (1-D)."""
    g = np.array(_vals(start, grid), dtype=float)
    x = grid.x
    vel = velocity_operator(drift, nu, grid) if "v" in word else None
    for letter in reversed(word):
        if letter == "x":
            g = x * g
        elif letter == "v":
            g = vel.apply(g)
        elif letter == "a":
            if accel is None:
                raise ValueError("word contains 'a' but no acceleration field was given")
            g = _vals(accel, grid) * g
        else:
            raise ValueError(f"unknown operator letter {letter!r}")
    return g


def _check_word(word: str, max_degree: int = 4) -> str:
    word = "".join(word) if not isinstance(word, str) else word
    if len(word) > max_degree:
        raise ValueError(f"monomials are limited to degree {max_degree}")
    return word


def time_ordered_correlation(time_offsets: Sequence[float], rho_t: ScalarField,
                             nu: float) -> float:
    """(1, w(t+s1) ... w(t+sn) 1) with w(t+s) = x + s nu d/dx, Wiener case.

    ``rho_t`` is the Wiener density at the reference time t; offsets are
    the s_i = t_i - t in ascending order.
    """
    offsets = list(time_offsets)
    if len(offsets) > 4:
        raise ValueError("at most 4-point correlations")
    if any(b < a for a, b in zip(offsets, offsets[1:])):
        raise ValueError("offsets must be ascending")
    grid = rho_t.grid
    x = grid.x
    D = derivative_operator(grid)
    g = np.ones(grid.shape)
    for s in reversed(offsets):
        g = x * g + s * nu * D.apply(g)
    return grid.integrate(rho_t.values * g)


def ordered_polynomial_expectation(f_spec, R: ScalarField, S: ScalarField, nu: float,
                                   accel: ScalarField | None = None) -> float:
    """Integral of e^(R-S) f(x, nu d/dx, -dU/dx) e^(R+S) for an ordered monomial.

    ``f_spec`` is a word over {x, v, a} or a list of (coefficient, word)
    pairs. When ``a`` appears and no acceleration is passed, it is built
    from the static drift b = nu d(R+S)/dx.
    """
    terms = [(1.0, f_spec)] if isinstance(f_spec, str) else list(f_spec)
    grid = R.grid
    _same_grid(grid, S.grid)
    if accel is None and any("a" in w for _, w in terms):
        b = ScalarField(grid, nu * stencils.derivative(R.values + S.values, grid.h[0]))
        accel = acceleration_field(b, nu)
    left, right = np.exp(R.values - S.values), np.exp(R.values + S.values)
    total = 0.0
    for coef, word in terms:
        g = apply_word(_check_word(word), grid, nu, right, accel=accel)
        total += coef * grid.integrate(left * g)
    return total


def h_asymmetry_check(U, b, nu: float, rho: ScalarField, f, g) -> tuple[float, float]:
    """Both sides of (f, H g) = (H(f rho), g / rho) with H = v^2 / 2 + U.

    The identity holds for the Wiener case b = 0.
    """
    grid = rho.grid
    vel = velocity_operator(b, nu, grid)
    Uv = np.zeros(grid.shape) if np.isscalar(U) and U == 0 else _vals(U, grid)

    def H(vals):
        return 0.5 * vel.apply(vel.apply(vals)) + Uv * vals

    fv, gv = _vals(f, grid), _vals(g, grid)
    lhs = weighted_inner_product(fv, H(gv), rho)
    rhs = weighted_inner_product(H(fv * rho.values), gv / rho.values, rho)
    return lhs, rhs


def delta_completeness_check(f_word: str, g_word: str, rho: ScalarField,
                             nu: float) -> tuple[float, float]:
    """Both sides of the completeness relation with delta = indicator / h.

    Left: sum_z h / rho(z) * avg(f delta_z) * avg(delta_z g).
    Right: avg(f g) = (1, f g 1). Words act on the Wiener operators.
    """
    grid = rho.grid
    h = grid.h[0]
    w = grid.weights() * rho.values
    n = grid.n[0]
    ones = np.ones(n)
    g_vals = apply_word(g_word, grid, nu, ones)
    f_delta = np.empty(n)
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0 / h
        f_delta[j] = float(np.sum(w * apply_word(f_word, grid, nu, e)))
    delta_g = w * g_vals / h
    lhs = float(np.sum(h * f_delta * delta_g / rho.values))
    rhs = float(np.sum(w * apply_word(f_word + g_word, grid, nu, ones)))
    return lhs, rhs


def heat_propagator(grid: Grid, nu: float, s: float) -> np.ndarray:
    """Dense exp(s nu/2 D2) with the boundary rows held fixed (s >= 0)."""
    if s < 0:
        raise ValueError("the heat propagator only runs forward")
    D2 = stencils.derivative_matrix(grid.n[0], grid.h[0], 2).toarray()
    D2[:2] = 0.0
    D2[-2:] = 0.0
    return scipy.linalg.expm(0.5 * nu * s * D2)


def delta_density(rho_t: ScalarField, nu: float, offsets: Sequence[float],
                  points: Sequence[float]) -> float:
    """(1, T delta(w(t+s1) - y1) ... delta(w(t+sn) - yn)) for n <= 3.

    Each delta(w(t+s) - y) is exp(sH/nu) delta_y exp(-sH/nu) with
    H/nu = (nu/2) d^2/dx^2; the time-ordered product is applied to 1.
    Points are snapped to the nearest grid node.
    """
    if len(offsets) != len(points) or not 1 <= len(offsets) <= 3:
        raise ValueError("need 1 to 3 (offset, point) pairs")
    if any(b < a for a, b in zip(offsets, offsets[1:])) or offsets[0] < 0:
        raise ValueError("offsets must be ascending and non-negative")
    grid = rho_t.grid
    x, h = grid.x, grid.h[0]
    g = np.ones(grid.shape)
    later = None
    for s, y in zip(reversed(list(offsets)), reversed(list(points))):
        if later is not None:
            g = heat_propagator(grid, nu, later - s) @ g
        delta = np.zeros(grid.shape)
        delta[int(np.argmin(np.abs(x - y)))] = 1.0 / h
        g = delta * g
        later = s
    g = heat_propagator(grid, nu, offsets[0]) @ g
    return grid.integrate(rho_t.values * g)


def generator_rate(f, rho: ScalarField, nu: float) -> float:
    """(1, [H, f] 1) / nu for the Wiener process, H = nu^2 D^2 / 2."""
    grid = rho.grid
    D = derivative_operator(grid)
    fv = _vals(f, grid)
    Hf = 0.5 * nu**2 * D.apply(D.apply(fv))
    return grid.integrate(rho.values * Hf) / nu
