"""Config-driven experiment runner.

    markovdiff <command> [--config FILE] [--out DIR] [--seed N]

Commands: verify, sde, wave, thermal, hj, nonunique. The config file is
flat ``key = value`` text with ``#`` comments; keys a command does not
know are rejected. Every run writes ``report.csv`` (metric, value,
expected, tolerance, status), data CSVs and SVG plots under ``--out``.
Exit status is 0 when all metrics pass, 1 on a failed metric and 2 on a
configuration error.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import hjlimit, sde, thermal, wave
from .core import Grid, ModelParams, ParamError, Potential, ScalarField, WaveState, normalize_rho

COMMANDS = ("verify", "sde", "wave", "thermal", "hj", "nonunique")
REPORT_COLUMNS = ["metric", "value", "expected", "tolerance", "status"]


class ConfigError(ValueError):
    pass


_GRID = {"grid_lo": -16.0, "grid_hi": 16.0, "grid_n": 641}
_POTENTIAL = {"potential": "harmonic", "k": 1.0, "potential_file": ""}

DEFAULTS: dict[str, dict] = {
    "verify": {"workers": 1, "seed": 12345},
    "sde": {"nu": 1.0, "theta": 1.0, "dt": 0.01, "n_steps": 20, "n_paths": 100000,
            "seed": None, "workers": 1, "export_paths": 20},
    "wave": {"m": 1.0, "nu": 1.0, "lam": 1.0, "kappa": 0.0, **_GRID, **_POTENTIAL,
             "sigma0": 0.0, "x0": 1.0, "v0": 0.0, "t_final": 1.0, "dt": 5e-4},
    "thermal": {"m": 1.0, "T": 1.5, "hbar": 0.1, "mu": 1.0, "grid_lo": -8.0, "grid_hi": 8.0,
                "grid_n": 401, **_POTENTIAL, "dt": 0.01},
    "hj": {"m": 1.0, "nu": 1.0, "lam": 0.50125, "T": 0.5, "mu_inv": 0.0, "grid_lo": -20.0,
           "grid_hi": 20.0, "grid_n": 2001, **_POTENTIAL, "sigma0": 1.0, "alpha": 0.5,
           "t_final": 1.0, "dt": 1e-4, "n_outer": 3, "n_particles": 2001},
    "nonunique": {"m": 1.0, "nu_a": 1.0, "lam_a": 1.0, "nu_b": 2.0, "lam_b": 0.625,
                  **_GRID, **_POTENTIAL, "sigma0": 1.0, "x0": 1.0, "v0": 0.5,
                  "t_final": 1.0, "dt": 5e-4},
}


def parse_config(text: str, command: str) -> dict:
    """Merge ``key = value`` lines over the command's defaults."""
    defaults = DEFAULTS[command]
    cfg = dict(defaults)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in defaults:
            raise ConfigError(f"line {lineno}: unknown key {key!r} for {command}")
        cfg[key] = _coerce(key, value, defaults[key])
    return cfg


def _coerce(key: str, value: str, default):
    try:
        if key == "seed" or isinstance(default, bool):
            return int(value)
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {value!r}") from None
    return value


@dataclass(frozen=True)
class Metric:
    """One report row; ``mode`` is ``abs`` (|value - expected| <= tol), ``le`` or ``gt``."""

    name: str
    value: float
    expected: float
    tolerance: float
    mode: str = "abs"

    @property
    def passed(self) -> bool:
        if not math.isfinite(self.value):
            return False
        if self.mode == "abs":
            return abs(self.value - self.expected) <= self.tolerance
        if self.mode == "le":
            return self.value <= self.expected + self.tolerance
        if self.mode == "gt":
            return self.value > self.expected
        raise ValueError(self.mode)

    def row(self) -> list[str]:
        return [self.name, _fmt(self.value), _fmt(self.expected), _fmt(self.tolerance),
                "pass" if self.passed else "fail"]


def _fmt(v: float) -> str:
    return f"{v:.10g}"


def emit_report(metrics: list[Metric], out_dir: Path) -> bool:
    """Write report.csv; returns True when every metric passes."""
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "report.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        for m in metrics:
            writer.writerow(m.row())
    return all(m.passed for m in metrics)


def _write_csv(path: Path, header: list[str], rows) -> Path:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) if isinstance(v, float) else v for v in row])
    return path


def svg_line_plot(csv_path: Path, x_col: str, y_cols: list[str], out_path: Path,
                  title: str = "") -> None:
    """Render columns of an existing CSV as a self-contained SVG line plot."""
    with open(csv_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    xs = np.array([float(r[x_col]) for r in rows])
    ys = [np.array([float(r[c]) for r in rows]) for c in y_cols]
    W, H, pad = 640, 400, 50
    y_all = np.concatenate(ys) if ys else np.zeros(1)
    x_lo, x_hi = float(xs.min()), float(xs.max())
    y_lo, y_hi = float(y_all.min()), float(y_all.max())
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    def sx(v):
        return pad + (v - x_lo) / (x_hi - x_lo) * (W - 2 * pad)

    def sy(v):
        return H - pad - (v - y_lo) / (y_hi - y_lo) * (H - 2 * pad)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">',
             f'<rect x="{pad}" y="{pad}" width="{W - 2 * pad}" height="{H - 2 * pad}" '
             'fill="none" stroke="black"/>',
             f'<text x="{W / 2}" y="{pad / 2}" text-anchor="middle">{title}</text>',
             f'<text x="{pad}" y="{H - pad / 3}">{_fmt(x_lo)}</text>',
             f'<text x="{W - pad}" y="{H - pad / 3}" text-anchor="end">{_fmt(x_hi)}</text>',
             f'<text x="2" y="{H - pad}">{_fmt(y_lo)}</text>',
             f'<text x="2" y="{pad}">{_fmt(y_hi)}</text>']
    for i, (name, y) in enumerate(zip(y_cols, ys)):
        color = colors[i % len(colors)]
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(xs, y))
        parts.append(f'<polyline fill="none" stroke="{color}" points="{pts}"/>')
        parts.append(f'<text x="{W - pad - 4}" y="{pad + 16 * (i + 1)}" text-anchor="end" '
                     f'fill="{color}">{name}</text>')
    parts.append("</svg>")
    out_path.write_text("\n".join(parts) + "\n")


def _grid(cfg) -> Grid:
    return Grid.uniform(cfg["grid_lo"], cfg["grid_hi"], cfg["grid_n"])


def _potential(cfg) -> Potential:
    kind = cfg["potential"]
    if kind == "free":
        return Potential()
    if kind == "harmonic":
        return Potential.harmonic(cfg["k"])
    if kind == "table":
        path = cfg["potential_file"]
        if not path or not os.path.isfile(path):
            raise ConfigError(f"potential_file {path!r} does not exist")
        data = np.loadtxt(path, delimiter=",", ndmin=2)
        return Potential.from_table(data[:, 0], data[:, 1])
    raise ConfigError(f"unknown potential {kind!r}")


def _gaussian(grid: Grid, center: float, var: float) -> ScalarField:
    return normalize_rho(ScalarField(grid, np.exp(-(grid.x - center) ** 2 / (2 * var))))


def _moments(field: ScalarField) -> tuple[float, float]:
    x = field.grid.x
    mean = field.grid.integrate(field.values * x)
    return mean, field.grid.integrate(field.values * (x - mean) ** 2)


def run_sde(cfg: dict, out: Path) -> list[Metric]:
    if cfg["seed"] is None:
        raise ConfigError("sde runs need a seed (config key or --seed)")
    nu, theta, dt, seed = cfg["nu"], cfg["theta"], cfg["dt"], cfg["seed"]
    n_paths, workers = cfg["n_paths"], cfg["workers"]
    metrics = []

    times = np.array([0.5, 1.0, 1.5, 2.0])
    w = sde.sample_wiener(nu, times, n_paths, seed, n_workers=workers).x
    worst = 0.0
    for i in range(4):
        for j in range(i, 4):
            est = sde.Estimate.from_samples(w[:, i] * w[:, j])
            worst = max(worst, abs(est.value - nu * min(times[i], times[j])) / est.stderr)
    metrics.append(Metric("wiener_cov_max_z", worst, 0.0, 5.0, "le"))
    four = sde.Estimate.from_samples(np.prod(w, axis=1))
    metrics.append(Metric("wiener_4pt_moment", four.value, sde.wick_moment(times, nu),
                          5 * four.stderr))

    drift = sde.DriftSpec(lambda x, t: -theta * x, lipschitz_bound=theta, growth_bound=theta)
    paths = sde.simulate_diffusion(drift, nu, lambda rng, n: rng.uniform(-2.5, 2.5, n), dt,
                                   cfg["n_steps"], n_paths, seed + 1, n_workers=workers)
    rows = []
    for xb in (-2.0, -1.0, 0.0, 1.0, 2.0):
        est = sde.estimate_forward_drift(paths, xb, 0.0, 10 * dt, width=0.2)
        # the bin average of -theta x is -theta * xb for a uniform x0
        metrics.append(Metric(f"drift_at_{xb:+g}", est.value, -theta * xb, 5 * est.stderr))
        rows.append((xb, est.value, est.stderr, -theta * xb))
    qv = sde.estimate_forward_drift(paths, 0.0, 0.0, 10 * dt, width=1.0, quadratic=True)
    metrics.append(Metric("quadratic_variation", qv.value, nu, 5 * qv.stderr))

    csv_path = _write_csv(out / "drift.csv", ["x_bin", "estimate", "stderr", "expected"], rows)
    svg_line_plot(csv_path, "x_bin", ["estimate", "expected"], out / "drift.svg", "forward drift")
    sde.export_paths_csv(paths, out / "paths.csv", max_paths=cfg["export_paths"])
    return metrics


def run_wave(cfg: dict, out: Path) -> list[Metric]:
    params = ModelParams.create(m=cfg["m"], nu=cfg["nu"], lam=cfg["lam"],
                                kappa=cfg["kappa"])
    grid = _grid(cfg)
    pot = _potential(cfg)
    V = pot.on(grid)
    m, hbar = params.m, params.hbar
    omega = math.sqrt(cfg["k"] / m) if pot.kind == "harmonic" else 0.0
    sigma2 = cfg["sigma0"] ** 2 if cfg["sigma0"] > 0 else (
        hbar / (2 * m * omega) if omega > 0 else 1.0)
    rho0 = _gaussian(grid, cfg["x0"], sigma2)
    S_tilde = ScalarField(grid, cfg["v0"] * grid.x)
    state = WaveState.from_density(rho0, S_tilde.with_values(S_tilde.values / params.nu),
                                   beta_abs=params.beta_abs)
    spec = wave.DynamicsSpec(params, V)
    n_steps = int(round(cfg["t_final"] / cfg["dt"]))
    final, log = wave.evolve(state, spec, cfg["dt"], n_steps, log_every=max(1, n_steps // 200))
    data = log.arrays()
    t = data["times"]
    mean = data["mean"][:, 0]
    metrics = [Metric("mass_drift", float(np.max(np.abs(data["mass"] - data["mass"][0]))),
                      0.0, 1e-8, "le")]
    gamma = params.mu_inv / m
    if pot.kind == "harmonic" and gamma == 0:
        expected = cfg["x0"] * np.cos(omega * t) + cfg["v0"] / omega * np.sin(omega * t)
        metrics.append(Metric("center_error", float(np.max(np.abs(mean - expected))), 0.0,
                              1e-4, "le"))
    elif pot.kind == "free" and gamma == 0:
        law = sigma2 + (hbar * t[-1] / (2 * m * math.sqrt(sigma2))) ** 2
        var_t = data["var"][-1, 0] if data["var"].ndim > 1 else data["var"][-1]
        metrics.append(Metric("variance_law", float(var_t), law, 1e-3 * law))
    elif pot.kind == "free":
        expected = cfg["x0"] + cfg["v0"] * (1 - np.exp(-gamma * t)) / gamma
        metrics.append(Metric("damped_center_error", float(np.max(np.abs(mean - expected))),
                              0.0, 1e-3, "le"))
    log.write_csv(out / "evolution.csv")
    wave.export_snapshot_csv(final, params.nu, out / "snapshot.csv")
    svg_line_plot(out / "evolution.csv", "t", ["mean1", "var1"], out / "evolution.svg",
                  "mean and variance")
    return metrics


def run_thermal(cfg: dict, out: Path) -> list[Metric]:
    grid = _grid(cfg)
    pot = _potential(cfg)
    V = pot.on(grid)
    m, T, hbar, mu = cfg["m"], cfg["T"], cfg["hbar"], cfg["mu"]
    metrics = []
    R_iter = thermal.iterate_stationary(V, T, m, hbar, 2)
    if pot.kind == "harmonic":
        k = cfg["k"]
        A, B = thermal.fit_correction_coefficients(R_iter, k, T)
        A0, B0 = hbar**2 / (12 * m * T), -(hbar**2) / (24 * m * T**2)
        metrics.append(Metric("landau_lapV_coefficient", A, A0, 1e-10 * abs(A0)))
        metrics.append(Metric("landau_gradV2_coefficient", B, B0, 1e-10 * abs(B0)))
    history: list[float] = []
    spec = thermal.ThermalSpec.build(V, T, hbar, m=m, mu=mu)
    state = thermal.solve_stationary(spec, history=history)
    R_landau = thermal.landau_expansion(V, T, m, hbar)
    metrics.append(Metric("stationary_residual",
                          thermal.stationary_residual(state.R, V, T, m, hbar), 0.0, 1e-8, "le"))

    def gap(h):
        sp_ = thermal.ThermalSpec.build(V, T, h, m=m, mu=mu)
        rho = thermal.solve_stationary(sp_).rho
        lan = normalize_rho(ScalarField(grid, np.exp(2 * thermal.landau_expansion(V, T, m, h).values)))
        return float(np.max(np.abs(rho - lan.values)))

    metrics.append(Metric("hbar4_ratio", gap(2 * hbar) / gap(hbar), 16.0, 3.2))

    D = mu * T
    rho0 = _gaussian(grid, 0.0, 0.5)
    free = Potential().on(grid)
    t_heat = 1.0
    heat = thermal.smoluchowski_evolve(rho0, free, mu, T, cfg["dt"], int(round(t_heat / cfg["dt"])))
    metrics.append(Metric("heat_variance", _moments(heat)[1], 0.5 + 2 * D * t_heat,
                          1e-3 * (0.5 + 2 * D * t_heat)))
    if pot.kind == "harmonic":
        k = cfg["k"]
        t_relax = 10 / (mu * k)
        start = _gaussian(grid, 1.0, 0.5)
        relaxed = thermal.smoluchowski_evolve(start, V, mu, T, cfg["dt"] / (mu * k),
                                              int(round(t_relax * mu * k / cfg["dt"])))
        gibbs = thermal.classical_gibbs(V, T)
        metrics.append(Metric("gibbs_l1_distance",
                              grid.integrate(np.abs(relaxed.values - gibbs.values)), 0.0,
                              1e-4, "le"))
    flux = thermal.quasi_static_flux(thermal.classical_gibbs(V, T), V, mu, T)
    metrics.append(Metric("gibbs_flux_max", float(np.max(np.abs(flux.values))), 0.0, 1e-8, "le"))

    R_solved_raw = thermal.stationary_log_amplitude(spec)
    thermal.export_thermal_csv(out / "thermal.csv", R_landau, R_iter, R_solved_raw,
                               ScalarField(grid, state.rho))
    thermal.export_history_csv(out / "history.csv", history)
    svg_line_plot(out / "thermal.csv", "x", ["R_landau", "R_solved"], out / "thermal.svg",
                  "log amplitude")
    return metrics


def run_hj(cfg: dict, out: Path) -> list[Metric]:
    grid = _grid(cfg)
    pot = _potential(cfg)
    m, T, mu_inv, alpha = cfg["m"], cfg["T"], cfg["mu_inv"], cfg["alpha"]
    dt, t_final = cfg["dt"], cfg["t_final"]
    n_steps = int(round(t_final / dt))
    rho0 = _gaussian(grid, 0.0, cfg["sigma0"] ** 2)
    metrics = []

    # transport against the small-hbar wave evolution, T = 0 and no drag
    x0 = hjlimit.seed_particles(rho0, cfg["n_particles"])
    ens = hjlimit.integrate_characteristics(pot, 0.0, x0, lambda z: alpha * z, dt, n_steps, m=m)
    params = ModelParams.create(m=m, nu=cfg["nu"], lam=cfg["lam"])
    S = ScalarField(grid, 0.5 * alpha * grid.x**2 / params.nu)
    state = WaveState.from_density(rho0, S, beta_abs=params.beta_abs)
    spec = wave.DynamicsSpec(params, pot.on(grid))
    checks = np.linspace(0, n_steps, 11).round().astype(int)
    worst_mean = worst_var = worst_mass = 0.0
    rows = []
    for a, b in zip(checks[:-1], checks[1:]):
        state, _ = wave.evolve(state, spec, dt, int(b - a), log_every=int(b - a))
        rho_w = ScalarField(grid, state.rho)
        rho_t = hjlimit.transport_density(rho0, ens, int(b))
        mw, vw = _moments(rho_w)
        mt, vt = _moments(rho_t)
        worst_mean = max(worst_mean, abs(mw - mt) / math.sqrt(vw))
        worst_var = max(worst_var, abs(vw - vt) / vw)
        worst_mass = max(worst_mass, abs(rho_t.integral() - 1))
        rows.append((float(b * dt), mw, mt, vw, vt))
    metrics.append(Metric("wave_vs_transport_mean", worst_mean, 0.0, 0.02, "le"))
    metrics.append(Metric("wave_vs_transport_var", worst_var, 0.0, 0.02, "le"))
    metrics.append(Metric("transport_mass", worst_mass, 0.0, 1e-6, "le"))
    metrics.append(Metric("newton_residual", hjlimit.newton_residual(ens, pot, 0.0, m), 0.0,
                          1e-4, "le"))

    ensembles: list = []
    passes = hjlimit.iterate_2TR(rho0, None, Potential(), T, mu_inv, cfg["n_outer"], t_final,
                                 dt, m=m, n_particles=cfg["n_particles"], ensembles=ensembles)
    variances = [_moments(p)[1] for p in passes]
    if len(variances) >= 2:
        metrics.append(Metric("2TR_variance_increase", variances[1] - variances[0], 0.0, 0.0,
                              "gt"))

    _write_csv(out / "moments.csv", ["t", "mean_wave", "mean_transport", "var_wave",
                                     "var_transport"], rows)
    hjlimit.export_density_csv(out / "density.csv", t_final, passes)
    hjlimit.export_trajectories_csv(out / "trajectories.csv", ensembles[-1],
                                    stride=max(1, n_steps // 10))
    svg_line_plot(out / "moments.csv", "t", ["var_wave", "var_transport"], out / "moments.svg",
                  "variance")
    svg_line_plot(out / "density.csv", "x",
                  [f"rho_pass_{k + 1}" for k in range(len(passes))], out / "density.svg",
                  "2TR passes")
    return metrics


def run_nonunique(cfg: dict, out: Path) -> list[Metric]:
    m = cfg["m"]
    pa = ModelParams.create(m=m, nu=cfg["nu_a"], lam=cfg["lam_a"])
    pb = ModelParams.create(m=m, nu=cfg["nu_b"], lam=cfg["lam_b"])
    grid = _grid(cfg)
    V = _potential(cfg).on(grid)
    rho0 = _gaussian(grid, cfg["x0"], cfg["sigma0"] ** 2)
    S_tilde = ScalarField(grid, cfg["v0"] * grid.x)
    try:
        res = wave.nonuniqueness_check(pa, pb, V, (rho0, S_tilde), cfg["t_final"], cfg["dt"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    _write_csv(out / "nonunique.csv", ["hbar", "max_rho_diff", "max_flow_diff"],
               [(res.hbar, res.max_rho_diff, res.max_flow_diff)])
    return [Metric("max_rho_diff", res.max_rho_diff, 0.0, 1e-5, "le"),
            Metric("max_flow_diff", res.max_flow_diff, 0.0, 1e-5, "le")]


RUNNERS = {"sde": run_sde, "wave": run_wave, "thermal": run_thermal, "hj": run_hj,
           "nonunique": run_nonunique}


def _verify_scenarios(seed: int) -> list[tuple[str, str, dict]]:
    def cfg(command, **over):
        c = dict(DEFAULTS[command])
        c.update(over)
        return c

    return [
        ("sde", "sde", cfg("sde", seed=seed)),
        ("wave_harmonic", "wave", cfg("wave")),
        ("wave_free", "wave", cfg("wave", potential="free", sigma0=1.0, x0=0.0)),
        ("wave_damped", "wave", cfg("wave", potential="free", sigma0=1.0, x0=0.0, v0=1.0,
                                    kappa=0.5)),
        ("thermal", "thermal", cfg("thermal")),
        ("hj", "hj", cfg("hj")),
        ("nonunique", "nonunique", cfg("nonunique")),
    ]


def _run_scenario(job) -> list[Metric]:
    name, command, cfg, out = job
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return RUNNERS[command](cfg, out)


def run(command: str, cfg: dict, out: Path) -> int:
    """Execute one command; returns the process exit status."""
    if command == "verify":
        jobs = [(name, cmd, c, str(out / name)) for name, cmd, c in _verify_scenarios(cfg["seed"])]
        if cfg["workers"] > 1:
            with ProcessPoolExecutor(cfg["workers"]) as pool:
                results = list(pool.map(_run_scenario, jobs))
        else:
            results = [_run_scenario(job) for job in jobs]
        metrics = [Metric(f"{name}.{m.name}", m.value, m.expected, m.tolerance, m.mode)
                   for (name, *_), ms in zip(jobs, results) for m in ms]
    else:
        out.mkdir(parents=True, exist_ok=True)
        metrics = RUNNERS[command](cfg, out)
    ok = emit_report(metrics, out)
    for m in metrics:
        if not m.passed:
            print(f"FAIL {m.name}: value {_fmt(m.value)} expected {_fmt(m.expected)} "
                  f"tolerance {_fmt(m.tolerance)}", file=sys.stderr)
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="markovdiff", description=__doc__.split("\n")[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", type=Path, help="flat key = value config file")
    parser.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    parser.add_argument("--seed", type=int, help="RNG seed (overrides the config)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = ""
        if args.config is not None:
            if not args.config.is_file():
                raise ConfigError(f"config file {args.config} does not exist")
            text = args.config.read_text()
        cfg = parse_config(text, args.command)
        if args.seed is not None:
            if "seed" not in cfg:
                raise ConfigError(f"{args.command} does not take a seed")
            if not 0 <= args.seed < 2**64:
                raise ConfigError("seed must be an unsigned 64-bit integer")
            cfg["seed"] = args.seed
        start = time.perf_counter()
        status = run(args.command, cfg, args.out)
    except (ConfigError, ParamError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return 2
    print(f"{args.command}: {'ok' if status == 0 else 'FAILED'} "
          f"({time.perf_counter() - start:.1f} s), report in {args.out / 'report.csv'}",
          file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
