import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from markovdiff import sde


def brute_force_wick(times, nu):
    """Sum over all orderings of consecutive-pair products, over (n/2)! 2^(n/2)."""
    n = len(times)
    if n % 2:
        return 0.0
    total = 0.0
    for perm in itertools.permutations(times):
        total += math.prod(nu * min(perm[2 * i], perm[2 * i + 1]) for i in range(n // 2))
    return total / (math.factorial(n // 2) * 2 ** (n // 2))


def test_wick_examples():
    assert sde.wick_moment([1.0, 2.0, 3.0], 1.0) == 0.0
    assert sde.wick_moment([1.0] * 4, 1.0) == pytest.approx(3.0)
    assert sde.wick_moment([1.0, 2.0], 2.0) == pytest.approx(2.0)


@settings(max_examples=60, deadline=None)
@given(times=st.lists(st.floats(0.01, 5.0), min_size=0, max_size=6),
       nu=st.floats(0.1, 3.0))
def test_wick_matches_permutation_formula(times, nu):
    assert sde.wick_moment(times, nu) == pytest.approx(brute_force_wick(times, nu), rel=1e-12,
                                                       abs=1e-300)


@pytest.fixture(scope="module")
def wiener():
    return sde.sample_wiener(0.5, np.arange(1, 5) * 0.5, 100_000, seed=7)


def test_wiener_covariance_and_mean(wiener):
    w = wiener.x
    cov = sde.Estimate.from_samples(w[:, 1] * w[:, 3])
    assert cov.within(0.5)
    for k in range(4):
        assert sde.Estimate.from_samples(w[:, k]).within(0.0)


def test_wiener_reproducible_across_workers():
    times = np.linspace(0, 1, 11)
    a = sde.sample_wiener(1.0, times, 10_000, seed=3)
    b = sde.sample_wiener(1.0, times, 10_000, seed=3, n_workers=3)
    assert np.array_equal(a.positions, b.positions)
    c = sde.sample_wiener(1.0, times, 10_000, seed=4)
    assert not np.array_equal(a.positions, c.positions)
    assert np.all(a.positions[:, 0] == 0)


def test_wiener_rejects_bad_times():
    with pytest.raises(ValueError):
        sde.sample_wiener(1.0, [0.0, 0.5, 0.4], 10, seed=0)
    with pytest.raises(ValueError):
        sde.sample_wiener(1.0, [0.0, 0.5, 1.2], 10, seed=0)


def _uniform(lo, hi):
    return lambda rng, n: rng.uniform(lo, hi, n)


def test_zero_drift_is_wiener():
    drift = sde.DriftSpec(lambda x, t: 0 * x, 0.0, 0.0)
    paths = sde.simulate_diffusion(drift, 1.0, lambda rng, n: np.zeros(n), 0.01, 100, 50_000, 1)
    assert sde.Estimate.from_samples(paths.x[:, -1] ** 2).within(1.0)


def test_constant_drift_mean():
    drift = sde.DriftSpec(lambda x, t: np.ones_like(x), 0.0, 1.0)
    paths = sde.simulate_diffusion(drift, 1.0, lambda rng, n: np.zeros(n), 0.01, 100, 20_000, 2)
    assert sde.Estimate.from_samples(paths.x[:, -1]).within(1.0)


def test_ou_stationary_variance():
    drift = sde.DriftSpec(lambda x, t: -x, 1.0, 1.0)
    paths = sde.simulate_diffusion(drift, 1.0, lambda rng, n: rng.normal(0, math.sqrt(0.5), n),
                                   0.01, 500, 50_000, 5)
    x = paths.x[:, -1]
    # Euler-Maruyama shifts the OU variance to 1/(2 - dt)
    var = sde.Estimate.from_samples(x**2 - np.mean(x) ** 2)
    assert var.within(1 / (2 - 0.01))


def test_em_strong_order():
    """Strong error against a fine reference on the same Brownian path halves or better."""
    rng = np.random.default_rng(11)
    n, T, fine = 4000, 1.0, 256
    dw_fine = rng.standard_normal((n, fine, 1)) * math.sqrt(T / fine)
    b = lambda x, t: -x  # noqa: E731
    x0 = np.ones((n, 1))
    ref, _ = sde.euler_maruyama(b, x0, dw_fine, T / fine)
    errs = []
    for steps in (16, 32, 64):
        dw = dw_fine.reshape(n, steps, fine // steps, 1).sum(axis=2)
        coarse, _ = sde.euler_maruyama(b, x0, dw, T / steps)
        errs.append(np.mean(np.abs(coarse[:, -1, 0] - ref[:, -1, 0])))
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    # order >= 1/2 means a ratio of at least sqrt(2); additive noise gives about 2
    assert min(ratios) > math.sqrt(2) * 0.9


def test_drift_bound_abort():
    drift = sde.DriftSpec(lambda x, t: x**2, 100.0, 1.0)
    with pytest.warns(RuntimeWarning):
        paths = sde.simulate_diffusion(drift, 1.0, lambda rng, n: np.full(n, 3.0), 1e-4, 5,
                                       100, 0)
    assert paths.aborted.all()
    with pytest.raises(sde.DriftBoundError):
        drift.validate()
    with pytest.raises(ValueError):
        sde.simulate_diffusion(sde.DriftSpec(lambda x, t: -x, 20.0, 20.0), 1.0,
                               lambda rng, n: np.zeros(n), 0.01, 5, 10, 0)


def test_drift_spec_validate_ok():
    sde.DriftSpec(lambda x, t: -x, 1.0, 1.0).validate()


@pytest.fixture(scope="module")
def ou_paths():
    drift = sde.DriftSpec(lambda x, t: -x, 1.0, 1.0)
    return sde.simulate_diffusion(drift, 1.0, _uniform(-2.5, 2.5), 0.01, 20, 100_000, 21)


def test_forward_drift_recovers_b(ou_paths):
    for xb in (-2.0, 0.0, 2.0):
        est = sde.estimate_forward_drift(ou_paths, xb, 0.0, 0.1, width=0.2)
        assert est.within(-xb), (xb, est)


def test_quadratic_variation(ou_paths):
    est = sde.estimate_forward_drift(ou_paths, 0.0, 0.0, 0.1, width=1.0, quadratic=True)
    assert est.within(1.0)


def test_forward_drift_errors(ou_paths):
    with pytest.raises(sde.EstimatorError):
        sde.estimate_forward_drift(ou_paths, 0.0, 0.0, 0.2)
    with pytest.raises(sde.EstimatorError):
        sde.estimate_forward_drift(ou_paths, 40.0, 0.0, 0.05, width=0.1)


def test_zero_drift_estimate():
    paths = sde.sample_wiener(1.0, np.linspace(0, 0.4, 41), 50_000, seed=9)
    assert sde.estimate_forward_drift(paths, 0.0, 0.2, 0.05).within(0.0)


@pytest.fixture(scope="module")
def bridge_paths():
    return sde.sample_wiener(1.0, np.arange(41) * 0.005, 200_000, seed=13)


def test_conditional_velocity(bridge_paths):
    win = sde.EstimatorWindow(0.01, 0.1, 0.1)
    est = sde.estimate_conditional_velocity(bridge_paths, win, 0.0, 0.2, 0.1)
    assert est.within(1.0)
    est0 = sde.estimate_conditional_velocity(bridge_paths, win, 0.0, 0.0, 0.1)
    assert est0.within(0.0)


def test_one_sided_velocity_correlations(bridge_paths):
    fwd = sde.mc_product_expectation(bridge_paths, ["v", "w"], [0.1, 0.2], 0.01)
    back = sde.mc_product_expectation(bridge_paths, ["w", "v"], [0.0 + 0.05, 0.1 + 0.05], 0.01)
    assert fwd.within(1.0)
    assert back.within(0.0)


def test_window_invariant():
    with pytest.raises(ValueError):
        sde.EstimatorWindow(0.05, 0.1, 0.1)
    with pytest.raises(ValueError):
        sde.EstimatorWindow(0.0, 0.1, 0.1)
    w = sde.EstimatorWindow.symmetric(0.2)
    assert w.epsilon == pytest.approx(0.02) and w.halved().delta1 == pytest.approx(0.1)


def test_ordered_expectations():
    paths = sde.sample_wiener(1.0, np.arange(0, 241) * 0.0125, 40_000, seed=17)
    ww = sde.mc_product_expectation(paths, ["w", "w"], [1.0, 2.0], 0.0)
    assert ww.within(1.0)
    win = sde.EstimatorWindow.symmetric(0.5)
    acc = sde.mc_ordered_expectation(paths, ["a", "w"], 1.5, win)
    assert acc.within(0.0)
    with pytest.raises(sde.EstimatorError):
        sde.mc_product_expectation(paths, ["v", "w"], [1.0, 1.05], 0.05)
    with pytest.raises(sde.EstimatorError):
        sde.mc_product_expectation(paths, ["w", "w"], [2.0, 1.0], 0.0)


def test_path_accessors_and_export(tmp_path):
    paths = sde.sample_wiener(1.0, np.linspace(0, 1, 5), 3, seed=1, dim=2)
    sp = paths.path(1)
    assert sp.positions.shape == (5, 2)
    with pytest.raises(ValueError):
        paths.index(0.3)
    out = tmp_path / "paths.csv"
    sde.export_paths_csv(paths, out)
    lines = out.read_text().splitlines()
    assert lines[0] == "t,x1,x2,path_id" and len(lines) == 1 + 15
