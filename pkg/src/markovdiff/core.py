"""Parameters, grids, fields and wave states shared by every solver."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import stencils

RHO_FLOOR = 1e-300
QUANTUM = "quantum"
CLASSICAL = "classical"


class ParamError(ValueError):
    """Raised for parameter sets outside the physical family."""


@dataclass(frozen=True)
class ModelParams:
    """Dynamical constants of the diffusion model.

    ``lam`` is the dimensionless lambda of the stochastic force. The
    derived quantities ``hbar``, ``beta_abs``, ``mu`` and ``branch`` are
    filled in by :func:`validate_params`; build instances through
    :meth:`create` unless you need the raw record.
    """

    m: float
    nu: float
    lam: float
    c: float = 0.0
    kappa: float = 0.0
    T: float = 0.0
    hbar: float | None = None
    beta_abs: float | None = None
    mu: float | None = None
    branch: str | None = None

    @classmethod
    def create(cls, m: float, nu: float, lam: float, c: float = 0.0,
               kappa: float = 0.0, T: float = 0.0) -> "ModelParams":
        return validate_params(cls(m=m, nu=nu, lam=lam, c=c, kappa=kappa, T=T))

    @property
    def mu_inv(self) -> float:
        """Viscous drag coefficient 1/mu = kappa/nu."""
        return self.kappa / self.nu

    @property
    def time_scale(self) -> float:
        """Coefficient m*nu/|beta| multiplying the time derivative of psi."""
        if self.branch != QUANTUM:
            raise ParamError("the wave-function form needs lambda > 1/2")
        return self.m * self.nu / self.beta_abs


def validate_params(raw: ModelParams) -> ModelParams:
    """Check a raw parameter record and populate the derived constants."""
    values = {k: getattr(raw, k) for k in ("m", "nu", "lam", "c", "kappa", "T")}
    for key, val in values.items():
        if not math.isfinite(val):
            raise ParamError(f"{key} must be finite, got {val!r}")
    if raw.m <= 0 or raw.nu <= 0:
        raise ParamError("m and nu must be positive")
    if raw.T < 0 or raw.kappa < 0:
        raise ParamError("T and kappa must be non-negative")
    if raw.lam < 0.5:
        raise ParamError("lambda < 1/2 gives unphysical solutions")
    if raw.lam == 0.5:
        hbar, beta_abs, branch = 0.0, math.inf, CLASSICAL
    else:
        root = math.sqrt(2.0 * raw.lam - 1.0)
        hbar, beta_abs, branch = raw.m * raw.nu * root, 1.0 / root, QUANTUM
    mu = raw.nu / raw.kappa if raw.kappa > 0 else math.inf
    return dataclasses.replace(raw, hbar=hbar, beta_abs=beta_abs, mu=mu, branch=branch)


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid including both end points of each axis."""

    extents: tuple[tuple[float, float], ...]
    n: tuple[int, ...]

    def __post_init__(self):
        if not 1 <= len(self.n) <= 3 or len(self.n) != len(self.extents):
            raise ValueError("grid dimension must be 1, 2 or 3")
        for (lo, hi), npts in zip(self.extents, self.n):
            if npts < 8:
                raise ValueError("at least 8 points per axis")
            if not hi > lo:
                raise ValueError("empty axis extent")

    @classmethod
    def uniform(cls, lo: float, hi: float, n: int, dim: int = 1) -> "Grid":
        return cls(extents=((float(lo), float(hi)),) * dim, n=(int(n),) * dim)

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.n)

    @property
    def h(self) -> tuple[float, ...]:
        return tuple((hi - lo) / (npts - 1) for (lo, hi), npts in zip(self.extents, self.n))

    @property
    def axes(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, npts) for (lo, hi), npts in zip(self.extents, self.n)]

    @property
    def x(self) -> np.ndarray:
        """Coordinates of a 1-D grid."""
        if self.dim != 1:
            raise ValueError("x is only defined for 1-D grids")
        return self.axes[0]

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes, indexing="ij")

    def weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights, shape == grid shape."""
        w = np.ones(self.shape)
        for axis, (npts, h) in enumerate(zip(self.n, self.h)):
            w1 = np.full(npts, h)
            w1[0] = w1[-1] = h / 2
            shape = [1] * self.dim
            shape[axis] = npts
            w = w * w1.reshape(shape)
        return w

    def boundary_mask(self, width: int = 1) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        for axis in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[axis] = slice(0, width)
            mask[tuple(idx)] = True
            idx[axis] = slice(-width, None)
            mask[tuple(idx)] = True
        return mask

    def interior(self, width: int = 4) -> tuple[slice, ...]:
        return (slice(width, -width),) * self.dim

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(self.weights() * values))


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise ValueError(f"field shape {vals.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable) -> "ScalarField":
        return cls(grid, fn(*grid.mesh()))

    def integral(self) -> float:
        return self.grid.integrate(self.values)

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, values)

    def gradient(self) -> list[np.ndarray]:
        return stencils.gradient(self.values, self.grid.h)

    def laplacian(self) -> np.ndarray:
        return stencils.laplacian(self.values, self.grid.h)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def normalize_rho(rho: ScalarField) -> ScalarField:
    """Rescale a non-negative density to unit trapezoidal mass."""
    if np.any(rho.values < 0):
        raise ValueError("density must be non-negative")
    mass = rho.integral()
    if not mass > 0:
        raise ValueError("cannot normalize a density with zero mass")
    return rho.with_values(rho.values / mass)


def weighted_mean(values: np.ndarray, rho: ScalarField) -> float:
    w = rho.grid.weights() * rho.values
    return float(np.sum(w * values) / np.sum(w))


def gauge_fix(S: ScalarField, rho: ScalarField | None = None) -> ScalarField:
    """Shift S so its rho-weighted mean vanishes (plain mean if rho is None)."""
    if rho is None:
        rho = ScalarField(S.grid, np.ones(S.grid.shape))
    return S.with_values(S.values - weighted_mean(S.values, rho))


def log_density(rho: np.ndarray) -> np.ndarray:
    """R = ln(rho)/2 with the density clamped at RHO_FLOOR."""
    return 0.5 * np.log(np.maximum(rho, RHO_FLOOR))


def unwrap_phase(phase: np.ndarray) -> np.ndarray:
    """Unwrap along every axis, last axis first; valid for node-free states."""
    out = phase
    for axis in reversed(range(phase.ndim)):
        out = np.unwrap(out, axis=axis)
    return out


@dataclass(frozen=True, eq=False)
class WaveState:
    """The pair (R, S) at time t; psi = exp(R + i |beta| S)."""

    R: ScalarField
    S: ScalarField
    t: float = 0.0
    beta_abs: float = 1.0

    def __post_init__(self):
        if self.R.grid != self.S.grid:
            raise ValueError("R and S must share a grid")

    @property
    def grid(self) -> Grid:
        return self.R.grid

    @property
    def rho(self) -> np.ndarray:
        return np.exp(2.0 * self.R.values)

    @property
    def psi(self) -> np.ndarray:
        return np.exp(self.R.values) * np.exp(1j * self.beta_abs * self.S.values)

    @classmethod
    def from_density(cls, rho: ScalarField, S: ScalarField | None = None, t: float = 0.0,
                     beta_abs: float = 1.0, fix_gauge: bool = True) -> "WaveState":
        R = rho.with_values(log_density(rho.values))
        if S is None:
            S = rho.with_values(np.zeros(rho.grid.shape))
        elif fix_gauge:
            S = gauge_fix(S, rho)
        return cls(R, S, t, beta_abs)

    @classmethod
    def from_psi(cls, psi: np.ndarray, grid: Grid, t: float = 0.0,
                 beta_abs: float = 1.0) -> "WaveState":
        rho = np.abs(psi) ** 2
        R = ScalarField(grid, log_density(rho))
        S = ScalarField(grid, unwrap_phase(np.angle(psi)) / beta_abs)
        return cls(R, gauge_fix(S, ScalarField(grid, rho)), t, beta_abs)


@dataclass(frozen=True)
class Potential:
    """External potential V(x) = sum of a harmonic part and an optional table.

    ``kind`` is ``"free"``, ``"harmonic"`` (V = k |x - center|^2 / 2) or
    ``"table"`` (1-D cubic spline through tabulated points).
    """

    kind: str = "free"
    k: float = 0.0
    center: float = 0.0
    table: tuple[tuple[float, ...], tuple[float, ...]] | None = None
    _spline: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("free", "harmonic", "table"):
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind == "table":
            from scipy.interpolate import CubicSpline

            if self.table is None:
                raise ValueError("table potential needs (x, V) samples")
            xs, vs = (np.asarray(a, dtype=float) for a in self.table)
            object.__setattr__(self, "_spline", CubicSpline(xs, vs))

    @classmethod
    def harmonic(cls, k: float, center: float = 0.0) -> "Potential":
        return cls(kind="harmonic", k=float(k), center=float(center))

    @classmethod
    def from_table(cls, xs, vs) -> "Potential":
        return cls(kind="table", table=(tuple(map(float, xs)), tuple(map(float, vs))))

    def __call__(self, *coords: np.ndarray) -> np.ndarray:
        if self.kind == "free":
            return np.zeros(np.shape(coords[0]))
        if self.kind == "harmonic":
            return 0.5 * self.k * sum((np.asarray(c) - self.center) ** 2 for c in coords)
        if len(coords) != 1:
            raise ValueError("table potentials are 1-D")
        return self._spline(coords[0])

    def force(self, x: np.ndarray) -> np.ndarray:
        """-dV/dx for 1-D positions."""
        x = np.asarray(x, dtype=float)
        if self.kind == "free":
            return np.zeros_like(x)
        if self.kind == "harmonic":
            return -self.k * (x - self.center)
        return -self._spline(x, 1)

    def on(self, grid: Grid) -> ScalarField:
        return ScalarField(grid, self(*grid.mesh()))
