"""Time evolution of the Markov wave equations in wave-function form.

For lambda > 1/2 the coupled real equations for (R, S) are equivalent to

    [-(m nu^2 / 2|beta|^2) lap + c R + kappa S + V] psi = i (m nu/|beta|) dpsi/dt

with psi = exp(R + i |beta| S). We advance psi with a Strang split step:
spectral kinetic propagator, pointwise potential phase. The nonlinear
terms c R and kappa S are frozen over a step and refined once with the
predicted end-of-step state.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import stencils
from .core import (CLASSICAL, Grid, ModelParams, ParamError, ScalarField, WaveState,
                   gauge_fix, log_density, unwrap_phase, RHO_FLOOR)

SUPPORT_FRACTION = 1e-12
BOUNDARY_DENSITY = 1e-10


class EvolutionError(RuntimeError):
    """Raised when an evolution leaves its validity regime."""


@dataclass(frozen=True, eq=False)
class DynamicsSpec:
    params: ModelParams
    V: ScalarField
    include_cR: bool | None = None
    include_kappaS: bool | None = None

    def __post_init__(self):
        if self.include_cR is None:
            object.__setattr__(self, "include_cR", self.params.c != 0)
        if self.include_kappaS is None:
            object.__setattr__(self, "include_kappaS", self.params.kappa != 0)
        if self.include_cR and self.params.c == 0:
            raise ValueError("include_cR needs c != 0")
        if self.include_kappaS and self.params.kappa == 0:
            raise ValueError("include_kappaS needs kappa != 0")

    @property
    def grid(self) -> Grid:
        return self.V.grid

    @property
    def mu_inv(self) -> float:
        return self.params.mu_inv if self.include_kappaS else 0.0


@dataclass
class EvolutionLog:
    times: list = field(default_factory=list)
    mass: list = field(default_factory=list)
    mean: list = field(default_factory=list)
    var: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    continuity_residual: list = field(default_factory=list)
    mean_force: list = field(default_factory=list)
    renorm_factor: list = field(default_factory=list)

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: np.asarray(v, dtype=float) for k, v in self.__dict__.items()}

    def write_csv(self, filename) -> None:
        data = self.arrays()
        dim = data["mean"].shape[1] if data["mean"].ndim > 1 else 1
        header = ["t", "mass"] + [f"mean{k + 1}" for k in range(dim)] \
            + [f"var{k + 1}" for k in range(dim)] \
            + ["energy", "continuity_residual", "renorm_factor"]
        with open(filename, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i in range(len(self.times)):
                row = [data["times"][i], data["mass"][i], *np.atleast_1d(data["mean"][i]),
                       *np.atleast_1d(data["var"][i]), data["energy"][i],
                       data["continuity_residual"][i], data["renorm_factor"][i]]
                writer.writerow([repr(float(v)) for v in row])


def _support(rho: np.ndarray) -> np.ndarray:
    return rho >= SUPPORT_FRACTION * rho.max()


def quantum_potential(R: ScalarField) -> np.ndarray:
    """lap(sqrt rho)/sqrt rho evaluated as lap R + |grad R|^2."""
    grads = R.gradient()
    return R.laplacian() + sum(g**2 for g in grads)


def assemble_stochastic_potential(state: WaveState, spec: DynamicsSpec) -> ScalarField:
    """m U~ = V + c R + kappa S - lambda m nu^2 lap(sqrt rho)/sqrt rho."""
    p = spec.params
    rho = state.rho
    if np.mean(rho <= RHO_FLOOR) > 0.5:
        raise EvolutionError("density is below the floor over more than half the grid")
    total = spec.V.values - p.lam * p.m * p.nu**2 * quantum_potential(state.R)
    if spec.include_cR:
        total = total + p.c * state.R.values
    if spec.include_kappaS:
        total = total + p.kappa * state.S.values
    return ScalarField(state.grid, total)


def probability_flux(state: WaveState, nu: float) -> list[np.ndarray]:
    """nu rho grad S, one array per axis."""
    rho = state.rho
    return [nu * rho * g for g in state.S.gradient()]


def continuity_residual(state_before: WaveState, state_after: WaveState, dt: float,
                        nu: float, boundary: int = 4) -> float:
    """Interior sup-norm of d rho/dt + div(nu rho grad S).

    The divergence is averaged over both states, which centres it in time.
    """
    grid = state_before.grid
    h = grid.h

    def div_flux(state):
        return sum(stencils.derivative(f, h[k], axis=k)
                   for k, f in enumerate(probability_flux(state, nu)))

    resid = (state_after.rho - state_before.rho) / dt \
        + 0.5 * (div_flux(state_before) + div_flux(state_after))
    return float(np.max(np.abs(resid[grid.interior(boundary)])))


class _SplitStepper:
    def __init__(self, spec: DynamicsSpec, dt: float):
        p = spec.params
        if p.branch == CLASSICAL:
            raise ParamError("lambda = 1/2 has no wave-function form; use the hjlimit module")
        self.spec, self.dt = spec, dt
        self.hbar = p.time_scale
        self.beta = p.beta_abs
        grid = spec.grid
        ks = np.meshgrid(*[2 * np.pi * np.fft.fftfreq(n, d=h) for n, h in zip(grid.n, grid.h)],
                         indexing="ij")
        k2 = sum(k**2 for k in ks)
        self.kinetic = np.exp(-1j * self.hbar * k2 * dt / (2 * p.m))
        self.k2 = k2
        self.nonlinear = spec.include_cR or spec.include_kappaS

    def decompose(self, psi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        rho = np.abs(psi) ** 2
        grid = self.spec.grid
        S = unwrap_phase(np.angle(psi)) / self.beta
        S = gauge_fix(ScalarField(grid, S), ScalarField(grid, rho)).values
        return rho, S

    def potential(self, psi: np.ndarray) -> np.ndarray:
        spec, p = self.spec, self.spec.params
        U = spec.V.values
        if not self.nonlinear:
            return U
        rho, S = self.decompose(psi)
        if spec.include_cR:
            U = U + p.c * log_density(rho)
        if spec.include_kappaS:
            U = U + p.kappa * S
        return U

    def _step(self, psi, U_start, U_end):
        half = -0.5j * self.dt / self.hbar
        psi = np.exp(half * U_start) * psi
        psi = np.fft.ifftn(self.kinetic * np.fft.fftn(psi))
        return np.exp(half * U_end) * psi

    def step(self, psi: np.ndarray) -> np.ndarray:
        U0 = self.potential(psi)
        if not self.nonlinear:
            return self._step(psi, U0, U0)
        predicted = self._step(psi, U0, U0)
        return self._step(psi, U0, self.potential(predicted))

    def energy(self, psi: np.ndarray) -> float:
        grid = self.spec.grid
        psi_k = np.fft.fftn(psi)
        kin = np.sum(self.k2 * np.abs(psi_k) ** 2) / psi.size * np.prod(grid.h)
        pot = grid.integrate(self.spec.V.values * np.abs(psi) ** 2)
        return float(self.hbar**2 / (2 * self.spec.params.m) * kin + pot)


def _moments(rho: np.ndarray, grid: Grid):
    w = grid.weights() * rho
    mass = float(np.sum(w))
    coords = grid.mesh()
    mean = np.array([np.sum(w * c) / mass for c in coords])
    var = np.array([np.sum(w * (c - mu) ** 2) / mass for c, mu in zip(coords, mean)])
    return mass, mean, var


def check_step_size(state: WaveState, spec: DynamicsSpec, dt: float) -> None:
    """Enforce the split-step accuracy bounds on dt."""
    p = spec.params
    if p.branch == CLASSICAL:
        raise ParamError("lambda = 1/2 has no wave-function form; use the hjlimit module")
    h_min = min(spec.grid.h)
    cfl = h_min**2 * p.m * p.beta_abs / (math.pi * p.nu)
    if dt > cfl * (1 + 1e-12):
        raise ValueError(f"dt={dt} exceeds the split-step bound {cfl:.3g}")
    stepper = _SplitStepper(spec, dt)
    psi = np.exp(state.R.values) * np.exp(1j * p.beta_abs * state.S.values)
    U = stepper.potential(psi)
    rho = state.rho
    sup = _support(rho)
    w = spec.grid.weights() * rho
    spread = np.max(np.abs(U[sup] - np.sum(w * U) / np.sum(w)))
    if dt * spread / stepper.hbar >= 0.1:
        raise ValueError(f"dt * max|U| / (m nu/|beta|) = {dt * spread / stepper.hbar:.3g} >= 0.1")


def evolve(state: WaveState, spec: DynamicsSpec, dt: float, n_steps: int,
           log_every: int = 1, check: bool = True) -> tuple[WaveState, EvolutionLog]:
    """Advance (R, S) by ``n_steps`` split steps of size dt.

    The input density is not renormalized, so scaling it by a constant
    scales the output by the same constant. For kappa > 0 the mass is
    renormalized to its initial value every step and the factor logged;
    for kappa = 0 a relative mass drift above 1e-3 in a step is an error.
    """
    p = spec.params
    if check:
        check_step_size(state, spec, dt)
    grid = spec.grid
    if state.grid != grid:
        raise ValueError("state and potential live on different grids")
    stepper = _SplitStepper(spec, dt)
    psi = np.exp(state.R.values) * np.exp(1j * p.beta_abs * state.S.values)
    mass0 = grid.integrate(np.abs(psi) ** 2)
    boundary = grid.boundary_mask()
    log = EvolutionLog()
    force = _force_fields(spec)

    def record(t, psi_now, prev, factor):
        rho = np.abs(psi_now) ** 2
        mass, mean, var = _moments(rho, grid)
        log.times.append(t)
        log.mass.append(mass)
        log.mean.append(mean)
        log.var.append(var)
        log.energy.append(stepper.energy(psi_now))
        log.mean_force.append([grid.integrate(rho * f) / mass for f in force])
        log.renorm_factor.append(factor)
        if prev is None:
            log.continuity_residual.append(0.0)
        else:
            before = WaveState.from_psi(prev, grid, t - dt, p.beta_abs)
            after = WaveState.from_psi(psi_now, grid, t, p.beta_abs)
            log.continuity_residual.append(continuity_residual(before, after, dt, p.nu))

    record(state.t, psi, None, 1.0)
    t = state.t
    for k in range(1, n_steps + 1):
        prev = psi
        psi = stepper.step(psi)
        t = state.t + k * dt
        if not np.all(np.isfinite(psi)):
            raise EvolutionError(f"non-finite wave function at t={t}")
        mass = grid.integrate(np.abs(psi) ** 2)
        factor = 1.0
        if spec.include_kappaS:
            factor = math.sqrt(mass0 / mass)
            psi = psi * factor
        elif abs(mass - grid.integrate(np.abs(prev) ** 2)) > 1e-3 * mass0:
            raise EvolutionError(f"mass drift above 1e-3 at t={t}")
        if np.max(np.abs(psi[boundary]) ** 2) > BOUNDARY_DENSITY * mass0:
            raise EvolutionError(f"density reached the domain boundary at t={t}")
        if k % log_every == 0 or k == n_steps:
            record(t, psi, prev, factor)
    return WaveState.from_psi(psi, grid, t, p.beta_abs), log


def _force_fields(spec: DynamicsSpec) -> list[np.ndarray]:
    return [-g for g in spec.V.gradient()]


def real_form_rates(state: WaveState, spec: DynamicsSpec) -> tuple[np.ndarray, np.ndarray]:
    """(dR/dt, dS/dt) of the coupled real equations.

    dR/dt = -(nu/2)(lap S + 2 grad R . grad S)
    dS/dt = (lambda - 1/2) nu (lap R + |grad R|^2) - (nu/2)|grad S|^2
            - (V + c R + kappa S) / (m nu)
    """
    p = spec.params
    gR, gS = state.R.gradient(), state.S.gradient()
    dR = -0.5 * p.nu * (state.S.laplacian() + 2 * sum(a * b for a, b in zip(gR, gS)))
    U = spec.V.values.copy()
    if spec.include_cR:
        U = U + p.c * state.R.values
    if spec.include_kappaS:
        U = U + p.kappa * state.S.values
    dS = ((p.lam - 0.5) * p.nu * quantum_potential(state.R)
          - 0.5 * p.nu * sum(g**2 for g in gS) - U / (p.m * p.nu))
    return dR, dS


def explicit_real_step(state: WaveState, spec: DynamicsSpec, dt: float) -> WaveState:
    """One forward-Euler step of the real (R, S) system."""
    dR, dS = real_form_rates(state, spec)
    return WaveState(state.R.with_values(state.R.values + dt * dR),
                     state.S.with_values(state.S.values + dt * dS),
                     state.t + dt, spec.params.beta_abs)


@dataclass(frozen=True)
class NonuniquenessResult:
    max_rho_diff: float
    max_flow_diff: float
    hbar: float


def nonuniqueness_check(paramsA: ModelParams, paramsB: ModelParams, V: ScalarField,
                        initial: tuple[ScalarField, ScalarField], t_final: float,
                        dt: float, n_checks: int = 10) -> NonuniquenessResult:
    """Evolve one physical initial condition under two (nu, lambda) choices.

    ``initial`` is (rho0, S_tilde0) with S_tilde = nu S the velocity
    potential, so both runs start from the same density and flow. Returns
    the sup over check times of |rho_A - rho_B| and of |v_A - v_B| on the
    support of rho, where v = nu grad S.
    """
    for p in (paramsA, paramsB):
        if p.c != 0 or p.kappa != 0:
            raise ValueError("non-uniqueness holds for c = kappa = 0")
    if paramsA.m != paramsB.m or not math.isclose(paramsA.hbar, paramsB.hbar, rel_tol=1e-12):
        raise ValueError("both parameter sets must share m and hbar")
    rho0, S_tilde = initial
    states, specs = [], []
    for p in (paramsA, paramsB):
        S = S_tilde.with_values(S_tilde.values / p.nu)
        states.append(WaveState.from_density(rho0, S, beta_abs=p.beta_abs))
        specs.append(DynamicsSpec(p, V))
    n_steps = int(round(t_final / dt))
    chunks = np.diff(np.linspace(0, n_steps, n_checks + 1).round().astype(int))
    max_rho = max_flow = 0.0
    for chunk in chunks:
        if chunk == 0:
            continue
        states = [evolve(s, sp_, dt, int(chunk), log_every=int(chunk))[0]
                  for s, sp_ in zip(states, specs)]
        rA, rB = states[0].rho, states[1].rho
        max_rho = max(max_rho, float(np.max(np.abs(rA - rB))))
        sup = rA >= 1e-8 * rA.max()
        vA = [paramsA.nu * g for g in states[0].S.gradient()]
        vB = [paramsB.nu * g for g in states[1].S.gradient()]
        flow = max(float(np.max(np.abs(a - b)[sup])) for a, b in zip(vA, vB))
        max_flow = max(max_flow, flow)
    return NonuniquenessResult(max_rho, max_flow, paramsA.hbar)


def ehrenfest_check(log: EvolutionLog, spec: DynamicsSpec) -> float:
    """Sup residual of m x'' - <-grad V> + (1/mu) x' from centred differences."""
    data = log.arrays()
    t, x, F = data["times"], data["mean"], data["mean_force"]
    if len(t) < 3:
        raise ValueError("need at least three logged times")
    steps = np.diff(t)
    if not np.allclose(steps, steps[0], rtol=1e-9):
        raise ValueError("log times must be uniformly spaced")
    dt = steps[0]
    acc = (x[2:] - 2 * x[1:-1] + x[:-2]) / dt**2
    vel = (x[2:] - x[:-2]) / (2 * dt)
    resid = spec.params.m * acc - F[1:-1] + spec.mu_inv * vel
    return float(np.max(np.abs(resid)))


def export_snapshot_csv(state: WaveState, nu: float, filename) -> None:
    """Columns x, rho, R, S, flux for a 1-D state."""
    if state.grid.dim != 1:
        raise ValueError("snapshot export is 1-D")
    flux = probability_flux(state, nu)[0]
    with open(filename, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "rho", "R", "S", "flux"])
        for row in zip(state.grid.x, state.rho, state.R.values, state.S.values, flux):
            writer.writerow([repr(float(v)) for v in row])
