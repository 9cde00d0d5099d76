"""Classical (lambda = 1/2) limit by Newtonian characteristics.

Particles carry position, velocity and the action S~ along
dS~/dt = v^2/2 - Phi/m - S~/(m mu), where Phi = V + 2TR. Densities are
pushed forward with the Jacobian of the flow map, falling back to a
kernel estimate at caustics.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.stats import gaussian_kde

from .core import Grid, Potential, ScalarField, log_density

JACOBIAN_FLOOR = 1e-8
MIN_PARTICLES = 1000


class CausticWarning(RuntimeWarning):
    pass


class CausticError(RuntimeError):
    pass


class EscapeError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class CharacteristicEnsemble:
    """Recorded trajectories; arrays ``x``, ``v``, ``action`` have shape (n_times, n_particles)."""

    x0: np.ndarray
    v0: np.ndarray
    times: np.ndarray
    x: np.ndarray
    v: np.ndarray
    action: np.ndarray

    def __post_init__(self):
        if self.x.shape != (len(self.times), len(self.x0)):
            raise ValueError("trajectory array has the wrong shape")
        for arr in (self.x, self.v, self.action):
            if not np.all(np.isfinite(arr)):
                raise ValueError("non-finite trajectory state")

    @property
    def n_particles(self) -> int:
        return len(self.x0)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def jacobian(self, index: int = -1) -> np.ndarray:
        """dx(t)/dx0 by second-order differences over the (sorted) labels."""
        return np.gradient(self.x[index], self.x0)

    def has_caustic(self, index: int | None = None) -> bool:
        rows = range(len(self.times)) if index is None else [index]
        return any(np.min(self.jacobian(i)) < JACOBIAN_FLOOR for i in rows)


# extra potential hook: (time index, positions) -> (Phi, dPhi/dx)
ExtraPotential = Callable[[int, np.ndarray], tuple[np.ndarray, np.ndarray]]


def _as_velocity(v0_field, x0s: np.ndarray) -> np.ndarray:
    if callable(v0_field):
        return np.asarray(v0_field(x0s), dtype=float) * np.ones_like(x0s)
    v0 = np.asarray(v0_field, dtype=float)
    return np.broadcast_to(v0, x0s.shape).copy()


def integrate_characteristics(V: Potential, mu_inv: float, x0s, v0_field, dt: float,
                              n_steps: int, m: float = 1.0, S0=None,
                              extra: ExtraPotential | None = None,
                              domain: tuple[float, float] | None = None) -> CharacteristicEnsemble:
    """Integrate m x'' = -V'(x) - Phi_extra'(x) - x'/mu for every particle.

    Velocity Verlet, with the linear drag applied as exact half-step
    decays on either side (Strang splitting), so the scheme stays second
    order with or without drag. ``v0_field`` is a constant, an array or a
    callable of x0; ``S0`` gives the initial action (array or callable).
    """
    x0s = np.asarray(x0s, dtype=float)
    if x0s.ndim != 1:
        raise ValueError("characteristics are 1-D")
    if np.any(np.diff(x0s) <= 0):
        raise ValueError("particle labels x0 must be strictly increasing")
    if mu_inv < 0:
        raise ValueError("mu_inv must be non-negative")
    v = _as_velocity(v0_field, x0s)
    if S0 is None:
        s = np.zeros_like(x0s)
    else:
        s = np.asarray(S0(x0s) if callable(S0) else S0, dtype=float) * np.ones_like(x0s)
    gamma = mu_inv / m
    half = math.exp(-0.5 * gamma * dt)

    def potential(n, x):
        phi = V(x)
        dphi = -V.force(x)
        if extra is not None:
            p, dp = extra(n, x)
            phi, dphi = phi + p, dphi + dp
        return phi, dphi

    x = x0s.copy()
    v0 = v.copy()
    times = dt * np.arange(n_steps + 1)
    xs, vs, ss = [x.copy()], [v.copy()], [s.copy()]
    phi, dphi = potential(0, x)
    for n in range(n_steps):
        v *= half
        s *= half
        lag0 = 0.5 * v**2 - phi / m
        v_half = v - 0.5 * dt * dphi / m
        x = x + dt * v_half
        phi, dphi = potential(n + 1, x)
        v = v_half - 0.5 * dt * dphi / m
        s += 0.5 * dt * (lag0 + 0.5 * v**2 - phi / m)
        v *= half
        s *= half
        if domain is not None and (np.min(x) < domain[0] or np.max(x) > domain[1]):
            raise EscapeError(f"trajectory left the domain at t={times[n + 1]:.4g}")
        xs.append(x.copy())
        vs.append(v.copy())
        ss.append(s.copy())
    return CharacteristicEnsemble(x0s, v0, times, np.array(xs), np.array(vs), np.array(ss))


def _log_rho0(rho0: ScalarField) -> CubicSpline:
    if rho0.grid.dim != 1:
        raise ValueError("pushforward is 1-D")
    return CubicSpline(rho0.grid.x, log_density(rho0.values))


def seed_particles(rho0: ScalarField, n_particles: int = 2001, threshold: float = 1e-10) -> np.ndarray:
    """Evenly spaced labels spanning the support rho0 >= threshold * max."""
    if n_particles < MIN_PARTICLES:
        raise ValueError(f"need at least {MIN_PARTICLES} particles")
    x = rho0.grid.x
    idx = np.nonzero(rho0.values >= threshold * rho0.values.max())[0]
    return np.linspace(x[idx[0]], x[idx[-1]], n_particles)


def particle_log_density(rho0: ScalarField, ensemble: CharacteristicEnsemble,
                         index: int = -1) -> np.ndarray:
    """R at each particle: 0.5 ln(rho0(x0) / |dx/dx0|)."""
    R0 = _log_rho0(rho0)(ensemble.x0)
    return R0 - 0.5 * np.log(np.abs(ensemble.jacobian(index)))


def _particle_weights(x0: np.ndarray, rho_at_x0: np.ndarray) -> np.ndarray:
    w = np.gradient(x0) * rho_at_x0
    return w / w.sum()


def transport_density(rho0: ScalarField, ensemble: CharacteristicEnsemble, index: int = -1,
                      grid: Grid | None = None) -> ScalarField:
    """Normalized pushforward of rho0 through the flow map at ``times[index]``.

    Uses rho0(x0)/|dx/dx0| interpolated (in log space) to the grid. If the
    map has a caustic the result is a Silverman-bandwidth kernel estimate
    and a CausticWarning is issued.
    """
    grid = rho0.grid if grid is None else grid
    xt = ensemble.x[index]
    xg = grid.x
    if ensemble.has_caustic(index) or np.any(np.diff(xt) <= 0):
        warnings.warn("caustic in the flow map; using a kernel density estimate",
                      CausticWarning, stacklevel=2)
        rho_x0 = np.exp(2 * _log_rho0(rho0)(ensemble.x0))
        kde = gaussian_kde(xt, bw_method="silverman", weights=_particle_weights(ensemble.x0, rho_x0))
        vals = kde(xg)
    else:
        R = CubicSpline(xt, particle_log_density(rho0, ensemble, index))
        inside = (xg >= xt[0]) & (xg <= xt[-1])
        vals = np.zeros_like(xg)
        vals[inside] = np.exp(2 * R(xg[inside]))
    out = ScalarField(grid, vals)
    return out.with_values(vals / out.integral())


def reconstruct_action(ensemble: CharacteristicEnsemble, grid: Grid, index: int) -> ScalarField:
    """S~ on ``grid`` from the particles' (x, action) pairs; grid must lie within their span."""
    xt = ensemble.x[index]
    if grid.x[0] < xt[0] or grid.x[-1] > xt[-1]:
        raise ValueError("grid extends beyond the particle cloud")
    return ScalarField(grid, CubicSpline(xt, ensemble.action[index])(grid.x))


def hj_residual(S_tilde_series, R_series, V: ScalarField, T: float, mu_inv: float, m: float,
                dt: float, boundary: int = 4) -> float:
    """Interior sup of |m dS~/dt + m|grad S~|^2/2 + 2TR + V + S~/mu|.

    ``S_tilde_series`` holds at least three fields at uniform spacing
    ``dt``; the time derivative is a centered difference, so residuals
    are reported at the inner times only. ``R_series`` may be None when
    T = 0.
    """
    S = list(S_tilde_series)
    if len(S) < 3:
        raise ValueError("need S~ at three or more times")
    if T != 0 and R_series is None:
        raise ValueError("R_series is required when T > 0")
    interior = V.grid.interior(boundary)
    worst = 0.0
    for k in range(1, len(S) - 1):
        dS_dt = (S[k + 1].values - S[k - 1].values) / (2 * dt)
        grad_sq = sum(g**2 for g in S[k].gradient())
        res = m * dS_dt + 0.5 * m * grad_sq + V.values + mu_inv * S[k].values
        if T != 0:
            res = res + 2 * T * R_series[k].values
        worst = max(worst, float(np.max(np.abs(res[interior]))))
    return worst


def newton_residual(ensemble: CharacteristicEnsemble, V: Potential, mu_inv: float,
                    m: float = 1.0, weights: np.ndarray | None = None) -> float:
    """sup over inner times of |m <x''> - <-V'> + <x'>/mu| for the ensemble mean."""
    w = np.full(ensemble.n_particles, 1.0 / ensemble.n_particles) if weights is None else weights
    mean_x = ensemble.x @ w
    dt = ensemble.dt
    acc = (mean_x[2:] - 2 * mean_x[1:-1] + mean_x[:-2]) / dt**2
    vel = (mean_x[2:] - mean_x[:-2]) / (2 * dt)
    force = V.force(ensemble.x[1:-1]) @ w
    return float(np.max(np.abs(m * acc - force + mu_inv * vel)))


def _thermal_hook(rho0: ScalarField, ensemble: CharacteristicEnsemble, T: float) -> ExtraPotential:
    """2T R_k and its gradient, read off a previous pass and interpolated to new positions."""
    R0 = _log_rho0(rho0)
    dR0 = R0.derivative()(ensemble.x0)
    R0v = R0(ensemble.x0)

    def hook(n, x):
        J = ensemble.jacobian(n)
        R = R0v - 0.5 * np.log(J)
        dR = (dR0 - 0.5 * np.gradient(np.log(J), ensemble.x0)) / J
        xs = ensemble.x[n]
        # linear extrapolation outside the previous cloud
        R_at = np.interp(x, xs, R)
        dR_at = np.interp(x, xs, dR)
        for side, (i, j) in (("lo", (0, 1)), ("hi", (-1, -2))):
            mask = x < xs[0] if side == "lo" else x > xs[-1]
            if np.any(mask):
                slope = (dR[i] - dR[j]) / (xs[i] - xs[j])
                dR_at[mask] = dR[i] + slope * (x[mask] - xs[i])
                R_at[mask] = R[i] + dR[i] * (x[mask] - xs[i])
        return 2 * T * R_at, 2 * T * dR_at

    return hook


def iterate_2TR(rho0: ScalarField, S0: ScalarField | None, V: Potential, T: float, mu_inv: float,
                n_outer: int, t_final: float, dt: float, m: float = 1.0,
                n_particles: int = 2001, ensembles: list | None = None) -> list[ScalarField]:
    """Densities at ``t_final`` from successive passes of the 2TR correction.

    Pass 1 ignores 2TR. Pass k+1 adds the potential 2T R_k(x, t), where
    R_k is the half-log pushforward density of pass k along its own
    trajectories. Each pass's ensemble is appended to ``ensembles``.
    """
    if n_outer not in (1, 2, 3):
        raise ValueError("n_outer must be 1, 2 or 3")
    n_steps = int(round(t_final / dt))
    if not math.isclose(n_steps * dt, t_final, rel_tol=1e-9):
        raise ValueError("t_final must be a multiple of dt")
    x0 = seed_particles(rho0, n_particles)
    if S0 is None:
        v0, s0 = 0.0, None
    else:
        spline = CubicSpline(S0.grid.x, S0.values)
        v0, s0 = spline.derivative()(x0), spline(x0)
    out, hook = [], None
    for k in range(n_outer):
        ens = integrate_characteristics(V, mu_inv, x0, v0, dt, n_steps, m=m, S0=s0, extra=hook)
        if ens.has_caustic():
            raise CausticError(f"caustic in outer pass {k + 1}")
        if ensembles is not None:
            ensembles.append(ens)
        out.append(transport_density(rho0, ens))
        hook = _thermal_hook(rho0, ens, T) if T != 0 else None
    return out


def export_trajectories_csv(filename, ensemble: CharacteristicEnsemble, stride: int = 1) -> None:
    with open(filename, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "particle_id", "x", "v"])
        for n in range(0, len(ensemble.times), stride):
            t = repr(float(ensemble.times[n]))
            for i in range(ensemble.n_particles):
                writer.writerow([t, i, repr(float(ensemble.x[n, i])), repr(float(ensemble.v[n, i]))])


def export_density_csv(filename, t: float, densities: list[ScalarField]) -> None:
    with open(filename, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x"] + [f"rho_pass_{k + 1}" for k in range(len(densities))])
        for i, x in enumerate(densities[0].grid.x):
            writer.writerow([repr(float(t)), repr(float(x))]
                            + [repr(float(d.values[i])) for d in densities])
