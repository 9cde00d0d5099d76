"""Path-level Monte Carlo for Wiener and drift-diffusion processes.

Random numbers come from fixed-size blocks of paths; block ``j`` always
draws from ``SeedSequence(seed).spawn(...)[j]``. The output therefore
depends only on ``(seed, n_paths)``, never on how many workers run the
blocks.
"""

from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

BLOCK_SIZE = 4096
MIN_BIN_COUNT = 100


class EstimatorError(ValueError):
    """Raised when a conditional estimator cannot be formed."""


class DriftBoundError(ValueError):
    pass


@dataclass(frozen=True)
class SamplePath:
    times: np.ndarray
    positions: np.ndarray  # (n_times, dim)
    seed: int
    path_id: int = 0


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """A batch of sample paths on a shared uniform time lattice.

    ``positions`` has shape ``(n_paths, n_times, dim)``. Paths that were
    aborted for violating the drift growth bound hold NaN after the abort.
    """

    times: np.ndarray
    positions: np.ndarray
    seed: int
    aborted: np.ndarray | None = None

    @property
    def n_paths(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[2]

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def x(self) -> np.ndarray:
        """(n_paths, n_times) view of the first coordinate."""
        return self.positions[:, :, 0]

    def path(self, i: int) -> SamplePath:
        return SamplePath(self.times, self.positions[i], self.seed, i)

    def __len__(self) -> int:
        return self.n_paths

    def index(self, t: float) -> int:
        """Lattice index of time t; raises if t is not on the lattice."""
        k = int(round((t - self.times[0]) / self.dt))
        if not 0 <= k < len(self.times) or abs(self.times[k] - t) > 1e-6 * self.dt:
            raise EstimatorError(f"time {t} is not on the path lattice")
        return k

    def valid(self) -> "PathEnsemble":
        """Drop aborted paths."""
        if self.aborted is None or not self.aborted.any():
            return self
        keep = ~self.aborted
        return PathEnsemble(self.times, self.positions[keep], self.seed, self.aborted[keep])


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    count: int

    def within(self, expected: float, n_se: float = 5.0) -> bool:
        return abs(self.value - expected) <= n_se * self.stderr

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "Estimate":
        samples = np.asarray(samples, dtype=float)
        n = samples.size
        if n < 2:
            raise EstimatorError("need at least two samples")
        mean = math.fsum(samples) / n
        var = math.fsum((samples - mean) ** 2) / (n - 1)
        return cls(mean, math.sqrt(var / n), n)


@dataclass(frozen=True)
class EstimatorWindow:
    """Difference width epsilon and conditioning offsets delta1, delta2."""

    epsilon: float
    delta1: float
    delta2: float

    def __post_init__(self):
        if min(self.epsilon, self.delta1, self.delta2) <= 0:
            raise EstimatorError("window widths must be positive")
        if self.epsilon > 0.1 * min(self.delta1, self.delta2) * (1 + 1e-12):
            raise EstimatorError("epsilon/delta must not exceed 0.1")

    @classmethod
    def symmetric(cls, delta: float) -> "EstimatorWindow":
        return cls(delta / 10.0, delta, delta)

    def halved(self) -> "EstimatorWindow":
        return EstimatorWindow(self.epsilon / 2, self.delta1 / 2, self.delta2 / 2)


@dataclass(frozen=True)
class DriftSpec:
    """Drift b(x, t) with Lipschitz constant K and growth bound k.

    ``b`` receives positions of shape (n,) in 1-D and (n, dim) otherwise.
    """

    b: Callable[[np.ndarray, float], np.ndarray]
    lipschitz_bound: float
    growth_bound: float = math.inf

    def validate(self, domain: tuple[float, float] = (-10.0, 10.0), dim: int = 1,
                 t: float = 0.0, n_samples: int = 2000, seed: int = 0) -> "DriftSpec":
        """Spot-check the growth and Lipschitz bounds on random samples."""
        if not math.isfinite(self.lipschitz_bound):
            raise DriftBoundError("Lipschitz bound must be finite")
        rng = np.random.default_rng(seed)
        shape = (n_samples,) if dim == 1 else (n_samples, dim)
        x1 = rng.uniform(*domain, size=shape)
        x2 = x1 + rng.normal(scale=1e-3 * (domain[1] - domain[0]), size=shape)
        b1 = np.asarray(self.b(x1, t), dtype=float)
        b2 = np.asarray(self.b(x2, t), dtype=float)
        norm = (lambda a: np.abs(a)) if dim == 1 else (lambda a: np.linalg.norm(a, axis=-1))
        if not np.all(np.isfinite(b1)):
            raise DriftBoundError("drift is not finite on the sampled domain")
        if np.any(norm(b1) > self.growth_bound * np.sqrt(1 + norm(x1) ** 2) * (1 + 1e-12)):
            raise DriftBoundError("drift violates |b| <= k sqrt(1 + x^2)")
        ratio = norm(b1 - b2) / np.maximum(norm(x1 - x2), 1e-300)
        if np.any(ratio > self.lipschitz_bound * (1 + 1e-6)):
            raise DriftBoundError("drift violates the Lipschitz bound")
        return self


def _check_times(times: np.ndarray) -> float:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) < 2:
        raise ValueError("need at least two time points")
    steps = np.diff(times)
    if np.any(steps <= 0):
        raise ValueError("times must be strictly increasing")
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
        raise ValueError("times must be uniformly spaced")
    if times[0] < 0:
        raise ValueError("times must be non-negative")
    return float(steps[0])


def _blocks(n_paths: int) -> list[tuple[int, int]]:
    return [(s, min(s + BLOCK_SIZE, n_paths)) for s in range(0, n_paths, BLOCK_SIZE)]


def _run_blocks(seed: int, n_paths: int, work: Callable, n_workers: int = 1) -> list:
    seqs = np.random.SeedSequence(seed).spawn(len(_blocks(n_paths)))
    jobs = [(np.random.Generator(np.random.PCG64(sq)), lo, hi)
            for sq, (lo, hi) in zip(seqs, _blocks(n_paths))]
    if n_workers > 1:
        with ThreadPoolExecutor(n_workers) as pool:
            return list(pool.map(lambda job: work(*job), jobs))
    return [work(*job) for job in jobs]


def sample_wiener(nu: float, times, n_paths: int, seed: int, dim: int = 1,
                  n_workers: int = 1) -> PathEnsemble:
    """Wiener paths with w(0) = 0 and increments of variance nu*dt."""
    if nu <= 0:
        raise ValueError("nu must be positive")
    times = np.asarray(times, dtype=float)
    dt = _check_times(times)
    scales = np.full(len(times), math.sqrt(nu * dt))
    scales[0] = math.sqrt(nu * times[0])

    def work(rng, lo, hi):
        z = rng.standard_normal((hi - lo, len(times), dim))
        return np.cumsum(z * scales[None, :, None], axis=1)

    pos = np.concatenate(_run_blocks(seed, n_paths, work, n_workers), axis=0)
    return PathEnsemble(times, pos, seed)


def _pair_partitions(items: list) -> list[list[tuple]]:
    if not items:
        return [[]]
    first, rest = items[0], items[1:]
    out = []
    for j, partner in enumerate(rest):
        remaining = rest[:j] + rest[j + 1:]
        for sub in _pair_partitions(remaining):
            out.append([(first, partner)] + sub)
    return out


def wick_moment(time_points: Sequence[float], nu: float) -> float:
    """Exact E(w(t1) ... w(tn)) by summing over pairings of nu*min(ti, tj)."""
    pts = list(time_points)
    if len(pts) % 2:
        return 0.0
    return math.fsum(
        math.prod(nu * min(a, b) for a, b in pairing) for pairing in _pair_partitions(pts)
    )


def euler_maruyama(b: Callable, x0: np.ndarray, dw: np.ndarray, dt: float, t0: float = 0.0,
                   growth_bound: float = math.inf) -> tuple[np.ndarray, np.ndarray]:
    """Integrate dx = b dt + dw for given increments dw of shape (n, steps, dim).

    Returns positions (n, steps + 1, dim) and a boolean mask of paths whose
    drift left the growth bound; those paths are NaN from that step on.
    """
    n, steps, dim = dw.shape
    out = np.empty((n, steps + 1, dim))
    out[:, 0] = x0
    aborted = np.zeros(n, dtype=bool)
    x = np.array(x0, dtype=float).reshape(n, dim)
    check = math.isfinite(growth_bound)
    for k in range(steps):
        arg = x[:, 0] if dim == 1 else x
        drift = np.asarray(b(arg, t0 + k * dt), dtype=float).reshape(n, dim)
        if check:
            size = np.linalg.norm(drift, axis=1)
            bad = ~aborted & ~(size <= growth_bound * np.sqrt(1 + np.sum(x**2, axis=1)))
            if bad.any():
                aborted |= bad
                x[bad] = np.nan
        x = x + drift * dt + dw[:, k]
        x[aborted] = np.nan
        out[:, k + 1] = x
    return out, aborted


def simulate_diffusion(drift: DriftSpec, nu: float, x0_sampler: Callable, dt: float,
                       n_steps: int, n_paths: int, seed: int, dim: int = 1,
                       n_workers: int = 1) -> PathEnsemble:
    """Euler-Maruyama paths of dx = b(x, t) dt + dw.

    ``x0_sampler(rng, n)`` returns initial positions of shape (n,) or
    (n, dim). Paths that break the drift growth bound are aborted and
    flagged in ``PathEnsemble.aborted`` (a warning reports how many).
    """
    if nu <= 0 or dt <= 0:
        raise ValueError("nu and dt must be positive")
    if dt * drift.lipschitz_bound >= 0.1:
        raise ValueError("dt * K must be below 0.1")

    def work(rng, lo, hi):
        n = hi - lo
        x0 = np.asarray(x0_sampler(rng, n), dtype=float).reshape(n, dim)
        dw = rng.standard_normal((n, n_steps, dim)) * math.sqrt(nu * dt)
        return euler_maruyama(drift.b, x0, dw, dt, growth_bound=drift.growth_bound)

    parts = _run_blocks(seed, n_paths, work, n_workers)
    pos = np.concatenate([p for p, _ in parts], axis=0)
    aborted = np.concatenate([a for _, a in parts])
    if aborted.any():
        warnings.warn(f"{int(aborted.sum())} paths aborted: drift growth bound violated",
                      RuntimeWarning, stacklevel=2)
    times = np.arange(n_steps + 1) * dt
    return PathEnsemble(times, pos, seed, aborted)


def _bin_mask(values: np.ndarray, center: float, width: float | None, scale: float,
              min_count: int = MIN_BIN_COUNT) -> np.ndarray:
    if width is not None:
        mask = np.abs(values - center) <= width / 2
        if mask.sum() < min_count:
            raise EstimatorError(f"bin at {center} holds {int(mask.sum())} < {min_count} paths")
        return mask
    width = 0.1 * scale if scale > 0 else 1e-9
    while True:
        mask = np.abs(values - center) <= width / 2
        if mask.sum() >= min_count:
            return mask
        if width > 2 * max(scale, 1e-9):
            raise EstimatorError(f"empty bin at {center}")
        width *= 1.5


def estimate_forward_drift(paths: PathEnsemble, x_bin: float, t: float, h: float,
                           width: float | None = None, quadratic: bool = False,
                           component: int = 0) -> Estimate:
    """Richardson-extrapolated E((x(t+h) - x(t))/h | x(t) in bin).

    With ``quadratic=True`` the increment is squared, which targets nu.
    The per-path combination 2 q(h) - q(2h) removes the O(h) bias and its
    spread gives the standard error directly.
    """
    paths = paths.valid()
    dt = paths.dt
    if not dt * (1 - 1e-9) <= h <= 10 * dt * (1 + 1e-9):
        raise EstimatorError("h must lie in [dt, 10 dt]")
    k0, k1, k2 = paths.index(t), paths.index(t + h), paths.index(t + 2 * h)
    x = paths.positions[:, :, component]
    here = x[:, k0]
    mask = _bin_mask(here, x_bin, width, float(np.std(here)))
    d1 = x[mask, k1] - here[mask]
    d2 = x[mask, k2] - here[mask]
    if quadratic:
        d1, d2 = d1**2, d2**2
    return Estimate.from_samples(2 * d1 / h - d2 / (2 * h))


def estimate_conditional_velocity(paths: PathEnsemble, window: EstimatorWindow, x: float,
                                  y: float, t: float, width: float | None = None,
                                  component: int = 0) -> Estimate:
    """E(wdot(t) | w(t - delta1) ~ x, w(t + delta2) ~ y) from joint bins."""
    paths = paths.valid()
    w = paths.positions[:, :, component]
    eps = window.epsilon
    ia, ib = paths.index(t - window.delta1), paths.index(t + window.delta2)
    im, ip = paths.index(t - eps / 2), paths.index(t + eps / 2)
    scale = math.sqrt(np.var(w[:, ib] - w[:, ia]))
    wx = width if width is not None else 0.25 * scale
    wa, wb = w[:, ia], w[:, ib]
    while True:
        mask = (np.abs(wa - x) <= wx / 2) & (np.abs(wb - y) <= wx / 2)
        if mask.sum() >= MIN_BIN_COUNT or width is not None or wx > 2 * scale:
            break
        wx *= 1.25
    if mask.sum() < MIN_BIN_COUNT:
        raise EstimatorError("joint endpoint bin is empty")
    return Estimate.from_samples((w[mask, ip] - w[mask, im]) / eps)


_OBSERVABLE_ALIASES = {"w": "w", "x": "w", "v": "v", "wdot": "v", "xdot": "v",
                       "a": "a", "wddot": "a", "xddot": "a"}


def _observable(w: np.ndarray, paths: PathEnsemble, kind: str, tau: float, eps: float):
    kind = _OBSERVABLE_ALIASES[kind]
    if kind == "w":
        return w[:, paths.index(tau)]
    if kind == "v":
        return (w[:, paths.index(tau + eps / 2)] - w[:, paths.index(tau - eps / 2)]) / eps
    return (w[:, paths.index(tau + eps)] + w[:, paths.index(tau - eps)]
            - 2 * w[:, paths.index(tau)]) / eps**2


def _product_samples(paths: PathEnsemble, observables: Sequence[str], times: Sequence[float],
                     epsilon: float, component: int = 0) -> np.ndarray:
    if len(observables) != len(times):
        raise ValueError("one evaluation time per observable")
    gaps = np.diff(np.asarray(times, dtype=float))
    if np.any(gaps <= 0):
        raise EstimatorError("evaluation times must be strictly ascending")
    uses_eps = any(_OBSERVABLE_ALIASES[o] != "w" for o in observables)
    if uses_eps and len(gaps) and np.any(epsilon > 0.1 * gaps * (1 + 1e-12)):
        raise EstimatorError("epsilon / spacing must not exceed 0.1")
    w = paths.valid().positions[:, :, component]
    prod = np.ones(w.shape[0])
    for kind, tau in zip(observables, times):
        prod = prod * _observable(w, paths, kind, tau, epsilon)
    return prod


def mc_product_expectation(paths: PathEnsemble, observables: Sequence[str],
                           times: Sequence[float], epsilon: float) -> Estimate:
    """Plain MC estimate of E(o1(t1) ... on(tn)) at explicit ascending times.

    Observables are ``w`` (position), ``v`` (the epsilon-difference
    velocity) and ``a`` (the epsilon second difference).
    """
    return Estimate.from_samples(_product_samples(paths, observables, times, epsilon))


def mc_ordered_expectation(paths: PathEnsemble, observable_sequence: Sequence[str], t: float,
                           window: EstimatorWindow, richardson: bool = True) -> Estimate:
    """Ordered expectation at time t, leftmost observable earliest.

    Evaluation times are centred on t with spacing delta1 and epsilon taken
    from the window. With ``richardson`` the estimate at (delta, delta/2)
    is extrapolated linearly to zero spacing path by path.
    """
    n = len(observable_sequence)

    def times_for(spacing):
        return [t + (i - (n - 1) / 2) * spacing for i in range(n)]

    coarse = _product_samples(paths, observable_sequence, times_for(window.delta1), window.epsilon)
    if not richardson:
        return Estimate.from_samples(coarse)
    fine_w = window.halved()
    fine = _product_samples(paths, observable_sequence, times_for(fine_w.delta1), fine_w.epsilon)
    return Estimate.from_samples(2 * fine - coarse)


def export_paths_csv(paths: PathEnsemble, filename, max_paths: int | None = None) -> None:
    """Write columns t, x1[, x2, x3], path_id."""
    n = paths.n_paths if max_paths is None else min(max_paths, paths.n_paths)
    header = ["t"] + [f"x{k + 1}" for k in range(paths.dim)] + ["path_id"]
    with open(filename, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for pid in range(n):
            for k, t in enumerate(paths.times):
                writer.writerow([repr(float(t))]
                                + [repr(float(v)) for v in paths.positions[pid, k]] + [pid])
