import math

import numpy as np
import pytest

from markovdiff import wave
from markovdiff.core import Grid, ModelParams, ParamError, Potential, ScalarField, WaveState

from conftest import gaussian

GRID = Grid.uniform(-16, 16, 641)
DT = 5e-4


def quantum(lam=1.0, nu=1.0, **kw):
    return ModelParams.create(m=1.0, nu=nu, lam=lam, **kw)


def coherent(center=0.0, velocity=0.0, var=0.5, params=None, grid=GRID):
    params = params or quantum()
    rho = gaussian(grid, center, var)
    S = ScalarField(grid, velocity * grid.x / params.nu)
    return WaveState.from_density(rho, S, beta_abs=params.beta_abs)


def test_quantum_potential_gaussian(line_grid):
    rho = gaussian(line_grid, 0.0, 1.0)
    state = WaveState.from_density(rho)
    spec = wave.DynamicsSpec(quantum(), Potential().on(line_grid))
    U = wave.assemble_stochastic_potential(state, spec).values
    x = line_grid.x
    # -lambda m nu^2 lap(sqrt rho)/sqrt rho with lap(sqrt rho)/sqrt rho = (x^2 - 2)/4
    np.testing.assert_allclose(U, -(x**2 - 2) / 4, atol=1e-6)
    assert U[200] == pytest.approx(0.5, abs=1e-10)


def test_quantum_potential_uniform():
    g = Grid.uniform(0, 1, 41)
    state = WaveState.from_density(ScalarField(g, np.ones(41)))
    U = wave.assemble_stochastic_potential(state, wave.DynamicsSpec(quantum(), Potential().on(g)))
    assert np.max(np.abs(U.values)) < 1e-12


def test_cR_term_exact(line_grid):
    params = quantum(c=3.0, T=1.5)
    rho = gaussian(line_grid)
    state = WaveState.from_density(rho)
    V = Potential().on(line_grid)
    with_c = wave.assemble_stochastic_potential(state, wave.DynamicsSpec(params, V))
    without = wave.assemble_stochastic_potential(state, wave.DynamicsSpec(params, V, include_cR=False))
    np.testing.assert_allclose(with_c.values - without.values, 3.0 * state.R.values, atol=1e-12)


def test_spec_flag_consistency():
    with pytest.raises(ValueError):
        wave.DynamicsSpec(quantum(), Potential().on(GRID), include_cR=True)


def test_free_spreading():
    state = coherent(var=1.0)
    spec = wave.DynamicsSpec(quantum(), Potential().on(GRID))
    _, log = wave.evolve(state, spec, DT, 2000, log_every=100)
    var = log.arrays()["var"][-1, 0]
    assert var == pytest.approx(1.25, abs=1e-3)
    assert np.max(np.abs(np.array(log.mass) - 1)) < 1e-8


def test_ground_state_stationary():
    state = coherent(var=0.5)
    spec = wave.DynamicsSpec(quantum(), Potential.harmonic(1.0).on(GRID))
    final, log = wave.evolve(state, spec, DT, 2000, log_every=50)
    assert np.max(np.abs(final.rho - state.rho)) < 1e-6
    assert max(log.continuity_residual) < 1e-6


def test_zero_steps_identity():
    state = coherent(center=1.0, velocity=0.3)
    spec = wave.DynamicsSpec(quantum(), Potential.harmonic(1.0).on(GRID))
    final, log = wave.evolve(state, spec, DT, 0)
    np.testing.assert_allclose(final.rho, state.rho, rtol=1e-12, atol=1e-300)
    assert len(log.times) == 1


def test_classical_branch_rejected():
    p = ModelParams.create(m=1.0, nu=1.0, lam=0.5)
    with pytest.raises(ParamError):
        wave.evolve(coherent(), wave.DynamicsSpec(p, Potential().on(GRID)), DT, 1)


def test_step_size_guards():
    spec = wave.DynamicsSpec(quantum(), Potential().on(GRID))
    with pytest.raises(ValueError):
        wave.evolve(coherent(), spec, 1e-2, 1)
    stiff = wave.DynamicsSpec(quantum(), Potential.harmonic(400.0).on(GRID))
    with pytest.raises(ValueError):
        wave.evolve(coherent(var=1.0), stiff, 4e-4, 1)


def test_boundary_abort():
    g = Grid.uniform(-4, 4, 161)
    spec = wave.DynamicsSpec(quantum(), Potential().on(g))
    with pytest.raises(wave.EvolutionError):
        wave.evolve(coherent(var=0.5, grid=g), spec, 5e-4, 4000)


def test_continuity_converges():
    """Residual of the spreading Gaussian falls when h and dt are refined together."""
    res = []
    for n, dt in ((321, 1e-3), (641, 5e-4)):
        g = Grid.uniform(-16, 16, n)
        spec = wave.DynamicsSpec(quantum(), Potential().on(g))
        state = coherent(var=1.0, grid=g)
        mid, _ = wave.evolve(state, spec, dt, int(round(0.5 / dt)), log_every=10**6)
        nxt, _ = wave.evolve(mid, spec, dt, 1)
        res.append(wave.continuity_residual(mid, nxt, dt, 1.0))
    assert res[1] < res[0]
    assert res[1] < 1e-6


def test_mass_per_thousand_steps():
    state = coherent(center=1.0, velocity=0.5, var=0.7)
    spec = wave.DynamicsSpec(quantum(), Potential.harmonic(1.0).on(GRID))
    _, log = wave.evolve(state, spec, DT, 1000, log_every=100)
    assert max(abs(m - log.mass[0]) for m in log.mass) < 1e-8


def test_gauge_shift_invariance():
    spec = wave.DynamicsSpec(quantum(), Potential.harmonic(1.0).on(GRID))
    a = coherent(center=1.0, velocity=0.5)
    b = WaveState(a.R, a.S.with_values(a.S.values + 3.7), 0.0, a.beta_abs)
    fa, _ = wave.evolve(a, spec, DT, 400, log_every=400)
    fb, _ = wave.evolve(b, spec, DT, 400, log_every=400)
    assert np.max(np.abs(fa.rho - fb.rho)) < 1e-10


def test_gauge_shift_with_kappa():
    params = quantum(kappa=0.5)
    spec = wave.DynamicsSpec(params, Potential.harmonic(1.0).on(GRID))
    a = coherent(center=1.0, velocity=0.5, params=params)
    b = WaveState.from_density(ScalarField(GRID, a.rho), a.S.with_values(a.S.values + 3.7),
                               beta_abs=params.beta_abs)
    fa, _ = wave.evolve(a, spec, DT, 400, log_every=400)
    fb, _ = wave.evolve(b, spec, DT, 400, log_every=400)
    assert np.max(np.abs(fa.rho - fb.rho)) < 1e-10


def test_normalization_independence():
    params = quantum(c=1.0, T=0.5)
    spec = wave.DynamicsSpec(params, Potential.harmonic(1.0).on(GRID))
    a = coherent(center=0.5, var=0.8)
    scaled = WaveState(a.R.with_values(a.R.values + 0.5 * math.log(3.0)), a.S, 0.0, a.beta_abs)
    fa, _ = wave.evolve(a, spec, DT, 400, log_every=400)
    fb, _ = wave.evolve(scaled, spec, DT, 400, log_every=400)
    rb = fb.rho / GRID.integrate(fb.rho)
    assert np.max(np.abs(fa.rho - rb)) < 1e-8


def test_real_form_matches_split_step():
    """One explicit step of the (R, S) system agrees with one split step to O(dt^2)."""
    g = Grid.uniform(-10, 10, 401)
    params = quantum(lam=0.75, nu=1.2, c=0.3, T=0.15)
    spec = wave.DynamicsSpec(params, Potential.harmonic(1.0).on(g))
    state = WaveState.from_density(gaussian(g, 0.3, 0.9), ScalarField(g, 0.2 * g.x + 0.05 * g.x**2),
                                   beta_abs=params.beta_abs)
    support = state.rho > 1e-6
    diffs = []
    for dt in (4e-4, 2e-4):
        split, _ = wave.evolve(state, spec, dt, 1)
        explicit = wave.explicit_real_step(state, spec, dt)
        diffs.append(np.max(np.abs(split.rho - explicit.rho)[support]))
    assert diffs[0] / diffs[1] > 3.0


def test_parity_symmetry():
    state = coherent(var=0.9)
    spec = wave.DynamicsSpec(quantum(), Potential.harmonic(2.0).on(GRID))
    _, log = wave.evolve(state, spec, DT, 1000, log_every=50)
    assert np.max(np.abs(log.arrays()["mean"])) < 1e-8


@pytest.mark.parametrize("nu_b, lam_b", [(2.0, 0.625), (0.5, 2.5), (4.0, 17 / 32), (1.0, 1.0)])
def test_nonuniqueness(nu_b, lam_b):
    V = Potential.harmonic(1.0).on(GRID)
    initial = (gaussian(GRID, 1.0, 1.0), ScalarField(GRID, 0.5 * GRID.x))
    res = wave.nonuniqueness_check(quantum(), quantum(lam=lam_b, nu=nu_b), V, initial, 1.0, DT)
    assert res.hbar == pytest.approx(1.0)
    assert res.max_rho_diff <= 1e-5 and res.max_flow_diff <= 1e-5


def test_nonuniqueness_rejects_hbar_mismatch():
    V = Potential().on(GRID)
    initial = (gaussian(GRID), ScalarField(GRID, np.zeros(641)))
    with pytest.raises(ValueError):
        wave.nonuniqueness_check(quantum(), quantum(lam=0.625), V, initial, 0.1, DT)


def test_ehrenfest_free_and_harmonic():
    free = wave.DynamicsSpec(quantum(), Potential().on(GRID))
    _, log = wave.evolve(coherent(velocity=0.4), free, DT, 400)
    assert wave.ehrenfest_check(log, free) < 1e-5
    spec = wave.DynamicsSpec(quantum(), Potential.harmonic(1.0).on(GRID))
    _, log = wave.evolve(coherent(center=1.0), spec, DT, 2000, log_every=10)
    assert wave.ehrenfest_check(log, spec) < 1e-4
    t = np.array(log.times)
    assert np.max(np.abs(log.arrays()["mean"][:, 0] - np.cos(t))) < 1e-6


def test_ehrenfest_damped():
    params = quantum(kappa=0.5)
    spec = wave.DynamicsSpec(params, Potential.harmonic(1.0).on(GRID))
    state = coherent(center=1.0, velocity=0.5, params=params)
    _, log = wave.evolve(state, spec, DT, 1000, log_every=10)
    assert wave.ehrenfest_check(log, spec) < 1e-3
    assert all(abs(f - 1) < 1e-6 for f in log.renorm_factor)


def test_exports(tmp_path):
    spec = wave.DynamicsSpec(quantum(), Potential().on(GRID))
    final, log = wave.evolve(coherent(velocity=0.2), spec, DT, 4)
    log.write_csv(tmp_path / "log.csv")
    wave.export_snapshot_csv(final, 1.0, tmp_path / "snap.csv")
    assert (tmp_path / "log.csv").read_text().startswith("t,mass,mean1,var1,energy")
    rows = (tmp_path / "snap.csv").read_text().splitlines()
    assert rows[0] == "x,rho,R,S,flux" and len(rows) == 642
