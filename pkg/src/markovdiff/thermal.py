"""Quantum-corrected thermal diffusion.

Stationary states of the c = 2T, m nu/|beta| = hbar/sqrt(3) model,
Landau's second-order Gibbs expansion, the quasi-static flux and the
Smoluchowski limit with D = mu T.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import solve_banded
from scipy.special import exprel

from . import stencils
from .core import (CLASSICAL, ModelParams, ScalarField, WaveState, log_density, normalize_rho,
                   weighted_mean)
from .hilbert import derivative_operator

SQRT3 = math.sqrt(3.0)


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class ThermalSpec:
    """Thermal parameter set: c = 2T and m nu/|beta| = hbar/sqrt(3)."""

    params: ModelParams
    V: ScalarField
    hbar: float

    def __post_init__(self):
        p = self.params
        if not p.T > 0:
            raise ValueError("thermal model needs T > 0")
        if p.c != 2 * p.T:
            raise ValueError("thermal model needs c = 2T")
        if self.hbar < 0:
            raise ValueError("hbar must be non-negative")
        if self.hbar == 0:
            if p.branch != CLASSICAL:
                raise ValueError("hbar = 0 needs lambda = 1/2")
        elif abs(p.time_scale - self.hbar / SQRT3) > 1e-12 * max(1.0, self.hbar):
            raise ValueError("m nu/|beta| must equal hbar/sqrt(3)")

    @classmethod
    def build(cls, V: ScalarField, T: float, hbar: float, m: float = 1.0,
              mu: float = math.inf, lam: float = 1.0) -> "ThermalSpec":
        """Choose nu from (hbar, m, lambda) and kappa = nu/mu.

        hbar = 0 selects the classical branch lambda = 1/2 with nu = 1.
        """
        if hbar == 0:
            lam, nu = 0.5, 1.0
        else:
            nu = hbar / (SQRT3 * m * math.sqrt(2 * lam - 1))
        kappa = 0.0 if math.isinf(mu) else nu / mu
        return cls(ModelParams.create(m=m, nu=nu, lam=lam, c=2 * T, kappa=kappa, T=T), V, hbar)

    @property
    def T(self) -> float:
        return self.params.T

    @property
    def mu(self) -> float:
        return self.params.mu


def _grad_sq(values: np.ndarray, h) -> np.ndarray:
    return sum(g**2 for g in stencils.gradient(values, h))


def landau_expansion(V: ScalarField, T: float, m: float, hbar: float) -> ScalarField:
    """Un-normalized R = -(1/2T)[V - hbar^2 |grad V|^2/(24 m T^2) + hbar^2 lap V/(12 m T)]."""
    if T <= 0:
        raise ValueError("T must be positive")
    h = V.grid.h
    lap = stencils.laplacian(V.values, h)
    corr = -hbar**2 / (24 * m * T**2) * _grad_sq(V.values, h) + hbar**2 / (12 * m * T) * lap
    return V.with_values(-(V.values + corr) / (2 * T))


def iterate_stationary(V: ScalarField, T: float, m: float, hbar: float, n_iter: int,
                       history: list | None = None) -> ScalarField:
    """Iterate R <- -(1/2T)[V - hbar^2 (lap R + |grad R|^2)/(6m)] from R1 = -V/2T.

    Returns R_{n_iter}. Raises ConvergenceError if the update norm grows
    three iterations in a row. Update norms are appended to ``history``.
    """
    if n_iter < 1:
        raise ValueError("n_iter must be at least 1")
    h = V.grid.h
    a = hbar**2 / (6 * m)
    R = -V.values / (2 * T)
    growth, last = 0, math.inf
    for _ in range(n_iter - 1):
        new = -(V.values - a * (stencils.laplacian(R, h) + _grad_sq(R, h))) / (2 * T)
        change = float(np.max(np.abs(new - R)))
        if history is not None:
            history.append(change)
        growth = growth + 1 if change > last else 0
        if growth >= 3:
            raise ConvergenceError("stationary iteration is diverging")
        last, R = change, new
    return V.with_values(R)


def stationary_residual(R: ScalarField, V: ScalarField, T: float, m: float,
                        hbar: float) -> float:
    """sup |[-(hbar^2/6m) lap + 2TR + V + const] e^R| with const the rho-weighted mean."""
    a = hbar**2 / (6 * m)
    h = R.grid.h
    F = -a * (R.laplacian() + _grad_sq(R.values, h)) + 2 * T * R.values + V.values
    rho = R.with_values(np.exp(2 * R.values))
    return float(np.max(np.abs((F - weighted_mean(F, rho)) * np.exp(R.values))))


def _normalize_R(R: np.ndarray, grid) -> np.ndarray:
    return R - 0.5 * math.log(grid.integrate(np.exp(2 * R)))


def stationary_log_amplitude(spec: ThermalSpec, tol: float = 1e-8, max_iter: int = 50,
                             history: list | None = None) -> ScalarField:
    """Un-normalized R solving -(hbar^2/6m)(lap R + |grad R|^2) + 2TR + V = 0.

    Newton iteration from the Landau expansion, with the stencil equations
    imposed on every grid row. Residual norms of the normalized iterate go
    to ``history``.
    """
    V, T, m, hbar = spec.V, spec.T, spec.params.m, spec.hbar
    grid = V.grid
    a = hbar**2 / (6 * m)
    D = [derivative_operator(grid, k).matrix for k in range(grid.dim)]
    L = sum(derivative_operator(grid, k, 2).matrix for k in range(grid.dim))
    size = int(np.prod(grid.shape))
    R = landau_expansion(V, T, m, hbar).values.ravel()
    Vf = V.values.ravel()
    for _ in range(max_iter):
        grads = [Dk @ R for Dk in D]
        F = -a * (L @ R + sum(g**2 for g in grads)) + 2 * T * R + Vf
        J = 2 * T * sp.identity(size) - a * (L + 2 * sum(sp.diags(g) @ Dk for g, Dk in zip(grads, D)))
        step = spla.spsolve(J.tocsc(), F)
        R = R - step
        resid = stationary_residual(
            ScalarField(grid, _normalize_R(R.reshape(grid.shape), grid)), V, T, m, hbar)
        if history is not None:
            history.append(resid)
        if resid <= tol and np.max(np.abs(step)) <= 1e-10 * max(1.0, np.max(np.abs(R))):
            return ScalarField(grid, R.reshape(grid.shape))
    raise ConvergenceError(f"stationary solve stalled at residual {resid:.3g}")


def solve_stationary(spec: ThermalSpec, tol: float = 1e-8, max_iter: int = 50,
                     history: list | None = None) -> WaveState:
    """Normalized S = 0 state with [-(hbar^2/6m) lap + 2TR + V] e^R = const e^R."""
    R = stationary_log_amplitude(spec, tol, max_iter, history)
    R_field = R.with_values(_normalize_R(R.values, R.grid))
    return WaveState(R_field, R_field.with_values(np.zeros(R.grid.shape)), 0.0,
                     spec.params.beta_abs)


def fit_correction_coefficients(R: ScalarField, k: float, T: float) -> tuple[float, float]:
    """Recover the lap V and |grad V|^2 coefficients of R on V = k x^2/2.

    ``R`` must be the un-normalized solution. Writes R = -(1/2T)[V + A lap V + B |grad V|^2] and fits R = r0 + r2 x^2
    by least squares; returns (A, B). Landau's values are
    A = hbar^2/(12 m T), B = -hbar^2/(24 m T^2).
    """
    x = R.grid.x
    basis = np.stack([np.ones_like(x), x, x**2], axis=1)
    (r0, _, r2), *_ = np.linalg.lstsq(basis, R.values, rcond=None)
    A = -2 * T * r0 / k
    B = -(2 * T * r2 + 0.5 * k) / k**2
    return float(A), float(B)


def quasi_static_flux(rho: ScalarField, V: ScalarField, mu: float, T: float) -> ScalarField:
    """Flux -mu T grad rho - mu rho grad V (1-D).

    Evaluated as -mu rho grad(T ln rho + V) so that it vanishes to
    round-off on the Gibbs density.
    """
    h = rho.grid.h[0]
    chem = 2 * T * log_density(rho.values) + V.values
    return rho.with_values(-mu * rho.values * stencils.derivative(chem, h))


def _bernoulli(z: np.ndarray) -> np.ndarray:
    return 1.0 / exprel(z)


def _flux_matrix(V: np.ndarray, h: float, D: float, T: float) -> np.ndarray:
    """Banded (3, n) form of A with d/dt (w rho) = -A rho, zero-flux ends."""
    n = len(V)
    z = np.diff(V) / T if T > 0 else np.zeros(n - 1)
    bp, bm = _bernoulli(z), _bernoulli(-z)
    # F_{i+1/2} = (D/h)(bp_i rho_i - bm_i rho_{i+1})
    c = D / h
    ab = np.zeros((3, n))
    ab[1, :-1] += c * bp
    ab[0, 1:] -= c * bm
    ab[1, 1:] += c * bm
    ab[2, :-1] -= c * bp
    return ab


def smoluchowski_evolve(rho0: ScalarField, V: ScalarField, mu: float, T: float, dt: float,
                        n_steps: int, method: str = "implicit") -> ScalarField:
    """Conservative finite-volume solution of d rho/dt = div(mu T grad rho + mu rho grad V).

    Node i owns a cell of width h (h/2 at the ends); fluxes between nodes
    use exponential fitting, so the discrete Gibbs density exp(-V/T) has
    zero flux and is exactly stationary. ``method`` is ``implicit``
    (backward Euler, any dt) or ``explicit`` (dt <= 0.9 h^2 / 2D).
    """
    if rho0.grid.dim != 1:
        raise ValueError("the Smoluchowski solver is 1-D")
    grid = rho0.grid
    h = grid.h[0]
    D = mu * T
    w = grid.weights()
    ab = _flux_matrix(V.values, h, D, T)
    if T == 0:
        raise ValueError("T must be positive")
    rho = rho0.values.copy()
    if method == "explicit":
        if dt > 0.9 * h**2 / (2 * D):
            raise ValueError("explicit step exceeds 0.9 h^2 / 2D")
        for _ in range(n_steps):
            Arho = ab[1] * rho
            Arho[:-1] += ab[0, 1:] * rho[1:]
            Arho[1:] += ab[2, :-1] * rho[:-1]
            rho = rho - dt * Arho / w
    elif method == "implicit":
        lhs = dt * ab
        lhs[1] += w
        for _ in range(n_steps):
            rho = solve_banded((1, 1), lhs, w * rho)
    else:
        raise ValueError(f"unknown method {method!r}")
    return rho0.with_values(rho)


def classical_gibbs(V: ScalarField, T: float) -> ScalarField:
    return normalize_rho(V.with_values(np.exp(-(V.values - V.values.min()) / T)))


def export_thermal_csv(filename, R_landau: ScalarField, R_iterated: ScalarField,
                       R_solved: ScalarField, rho: ScalarField) -> None:
    with open(filename, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "R_landau", "R_iterated", "R_solved", "rho"])
        for row in zip(R_landau.grid.x, R_landau.values, R_iterated.values, R_solved.values,
                       rho.values):
            writer.writerow([repr(float(v)) for v in row])


def export_history_csv(filename, history) -> None:
    with open(filename, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "residual"])
        for i, r in enumerate(history, start=1):
            writer.writerow([i, repr(float(r))])
