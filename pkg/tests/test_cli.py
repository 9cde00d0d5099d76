import csv
import math
import subprocess
import sys

import pytest

from markovdiff import cli


def _report(path):
    with open(path / "report.csv", newline="") as fh:
        return list(csv.DictReader(fh))


def test_parse_config_merges_and_coerces():
    cfg = cli.parse_config("# comment\nT = 2.0\ngrid_n = 101  # trailing\n", "thermal")
    assert cfg["T"] == 2.0 and cfg["grid_n"] == 101 and isinstance(cfg["grid_n"], int)
    assert cfg["hbar"] == cli.DEFAULTS["thermal"]["hbar"]


@pytest.mark.parametrize("text", ["bogus = 1", "T 2.0", "grid_n = 1.5"])
def test_parse_config_rejects(text):
    with pytest.raises(cli.ConfigError):
        cli.parse_config(text, "thermal")


def test_unknown_key_exits_2(tmp_path):
    conf = tmp_path / "bad.conf"
    conf.write_text("temperature = 1\n")
    assert cli.main(["thermal", "--config", str(conf), "--out", str(tmp_path / "o")]) == 2


def test_missing_config_exits_2(tmp_path):
    assert cli.main(["wave", "--config", str(tmp_path / "nope"), "--out", str(tmp_path)]) == 2


def test_sde_requires_seed(tmp_path):
    assert cli.main(["sde", "--out", str(tmp_path)]) == 2


def test_seed_rejected_where_unused(tmp_path):
    assert cli.main(["wave", "--seed", "3", "--out", str(tmp_path)]) == 2


def test_invalid_physics_exits_2(tmp_path):
    conf = tmp_path / "c.conf"
    conf.write_text("lam = 0.3\n")
    assert cli.main(["wave", "--config", str(conf), "--out", str(tmp_path / "o")]) == 2


def test_metric_modes():
    assert cli.Metric("a", 1.0, 1.05, 0.1).passed
    assert not cli.Metric("a", 1.0, 1.2, 0.1).passed
    assert cli.Metric("b", 0.5, 0.0, 1.0, "le").passed
    assert cli.Metric("c", 1.0, 0.5, 0.0, "gt").passed
    assert not cli.Metric("d", math.nan, 0.0, 1.0, "le").passed


def test_empty_report_is_header_only(tmp_path):
    assert cli.emit_report([], tmp_path)
    assert (tmp_path / "report.csv").read_text().splitlines() == [",".join(cli.REPORT_COLUMNS)]


def test_failing_metric_gives_status_1(tmp_path, monkeypatch):
    monkeypatch.setitem(cli.RUNNERS, "wave", lambda cfg, out: [
        cli.Metric("good", 1.0, 1.0, 0.0), cli.Metric("bad", 2.0, 1.0, 0.5)])
    assert cli.main(["wave", "--out", str(tmp_path)]) == 1
    rows = _report(tmp_path)
    assert [r["status"] for r in rows] == ["pass", "fail"]


def test_nonunique_command(tmp_path):
    assert cli.main(["nonunique", "--out", str(tmp_path)]) == 0
    rows = {r["metric"]: r for r in _report(tmp_path)}
    assert float(rows["max_rho_diff"]["value"]) <= 1e-5
    assert (tmp_path / "nonunique.csv").exists()


def test_thermal_command(tmp_path):
    assert cli.main(["thermal", "--out", str(tmp_path)]) == 0
    names = {r["metric"] for r in _report(tmp_path)}
    assert {"landau_lapV_coefficient", "landau_gradV2_coefficient", "hbar4_ratio",
            "heat_variance", "gibbs_l1_distance"} <= names
    header = (tmp_path / "thermal.csv").read_text().splitlines()[0]
    assert header == "x,R_landau,R_iterated,R_solved,rho"
    assert (tmp_path / "thermal.svg").read_text().startswith("<svg")


def test_reruns_are_byte_identical(tmp_path):
    conf = tmp_path / "s.conf"
    conf.write_text("n_paths = 20000\n")
    for d in ("a", "b"):
        assert cli.main(["sde", "--config", str(conf), "--seed", "7", "--out", str(tmp_path / d)]) in (0, 1)
    names = sorted(f.name for f in (tmp_path / "a").glob("*.csv"))
    assert {"report.csv", "drift.csv", "paths.csv"} <= set(names)
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "markovdiff.cli", "nonunique", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr


@pytest.mark.slow
def test_verify_all_scenarios(tmp_path):
    assert cli.main(["verify", "--out", str(tmp_path)]) == 0
    rows = _report(tmp_path)
    assert rows and all(r["status"] == "pass" for r in rows)
