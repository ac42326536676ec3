import json
import shutil
import subprocess

import jsonschema
import pytest

from truncvex import cli
from truncvex.report import RunConfig, load_schema

SMALL = ["--nx", "120", "--ny", "120"]


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def cassini_report():
    from truncvex.report import analyze
    return json.loads(cli.dumps(analyze(RunConfig(field="cassini", params={"a": 1.0}, nx=120, ny=120))))


def test_analyze_report_validates(cassini_report):
    jsonschema.validate(cassini_report, load_schema())
    assert cassini_report["schema_version"] == "1.0"
    assert cassini_report["inequalities"]["ok"] is True
    th = cassini_report["thresholds"]
    assert th["h_max"] == pytest.approx(3.0, rel=1e-2)
    assert th["nu_max"] == pytest.approx(0.0, abs=1e-9)
    assert "timings" not in cassini_report
    assert "workers" not in cassini_report["config"]


def test_analyze_exit_zero_and_out_file(capsys, tmp_path):
    out = tmp_path / "r.json"
    code, stdout, _ = run(capsys, "analyze", "--field", "quadratic", *SMALL, "--out", str(out),
                          "--pgm", str(tmp_path / "m.pgm"), "--svg", str(tmp_path / "l.svg"))
    assert code == 0 and stdout == ""
    rep = json.loads(out.read_text())
    assert rep["hess_region"]["complement_nonempty"] is False
    assert rep["thresholds"]["scl"]["at_lower_end"] is True
    assert rep["injectivity"]["collision_count"] == 0
    assert rep["inequalities"]["h_max_ge_nu_max"] == "not_applicable"
    assert (tmp_path / "m.pgm").exists() and (tmp_path / "l.svg").exists()


def test_inequality_failure_exits_two(capsys, monkeypatch, cassini_report):
    bad = json.loads(json.dumps(cassini_report))
    bad["inequalities"]["ok"] = False
    bad["inequalities"]["h_max_ge_nu_max"] = False
    monkeypatch.setattr(cli, "analyze", lambda cfg: bad)
    code, out, _ = run(capsys, "analyze", "--field", "cassini", *SMALL)
    assert code == 2
    assert json.loads(out)["inequalities"]["ok"] is False


@pytest.mark.parametrize("argv", [
    ["analyze", "--field", "nope"],
    ["analyze", "--field", "cassini", "--a", "-1"],
    ["analyze", "--nx", "1"],
    ["analyze", "--tol", "bisect_tol=-1"],
    ["analyze", "--tol", "bisect_tol"],
    ["analyze", "--budget", "pair_samples=0"],
    ["analyze", "--budget", "unknown=3"],
    ["analyze", "--workers", "0"],
    ["analyze", "--terms", "[[1,"],
    ["analyze", "--config", "/nonexistent.json"],
    ["analyze", "--bogus-flag"],
    ["no-such-command"],
])
def test_input_errors_exit_one(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 1
    assert "error" in err


def test_bad_env_workers(capsys, monkeypatch):
    monkeypatch.setenv("TRUNCVEX_WORKERS", "many")
    code, _, err = run(capsys, "critical", *SMALL)
    assert code == 1 and "TRUNCVEX_WORKERS" in err


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"field": "cassini", "params": {"a": 2.0}, "nx": 50, "ny": 50,
                               "tolerances": {"bisect_tol": 0.5}}))
    args = cli.build_parser().parse_args(["analyze", "--config", str(cfg), "--a", "1", "--nx", "80"])
    rc = cli.config_from_args(args)
    assert rc.params == {"a": 1.0} and rc.nx == 80 and rc.ny == 50
    assert rc.tolerances["bisect_tol"] == 0.5
    assert rc.grid().x_max == 3.0


def test_config_rejects_unknown_keys(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"field": "cassini", "colour": "red"}))
    code, _, err = run(capsys, "analyze", "--config", str(cfg))
    assert code == 1 and "colour" in err


def test_levels_command(capsys, tmp_path):
    code, out, _ = run(capsys, "levels", "--field", "cassini", "--a", "1", "--nx", "300", "--ny", "300",
                       "--c", "-0.5", "0", "1", "3", "4", "-2", "--svg", str(tmp_path / "l.svg"),
                       "--curves-json", str(tmp_path / "l.json"))
    assert code == 0
    rows = {r["level"]: r for r in json.loads(out)["levels"]}
    assert rows[-0.5]["convex_regular"] and rows[4.0]["convex_regular"]
    assert not rows[1.0]["convex_regular"]
    assert not rows[0.0]["regular"]
    assert not rows[-2.0]["nonempty"]
    assert "data-level" in (tmp_path / "l.svg").read_text()
    assert len(json.loads((tmp_path / "l.json").read_text())) == 6


def test_levels_empty_list(capsys):
    code, out, _ = run(capsys, "levels", *SMALL)
    assert code == 0 and json.loads(out)["levels"] == []


@pytest.mark.parametrize("level, verdict", [("3.05", "no_collision_found"), ("1", "collisions_found")])
def test_gradient_scan_command(capsys, level, verdict):
    code, out, _ = run(capsys, "gradient-scan", "--field", "cassini", "--nx", "300", "--ny", "300",
                       "--level", level, "--samples", "50000")
    assert code == 0 and json.loads(out)["verdict"] == verdict


def test_gradient_scan_empty_region(capsys):
    code, _, err = run(capsys, "gradient-scan", "--field", "cassini", *SMALL, "--level", "1e6")
    assert code == 1 and "empty" in err


def test_hess_mask_command(capsys, tmp_path):
    code, out, _ = run(capsys, "hess-mask", "--field", "cassini", "--nx", "300", "--ny", "300",
                       "--pgm", str(tmp_path / "m.pgm"))
    rep = json.loads(out)
    assert code == 0 and rep["h_max"]["value"] == pytest.approx(3.0, rel=1e-3)
    code, out, _ = run(capsys, "hess-mask", "--field", "quadratic", *SMALL)
    assert json.loads(out)["h_max"] is None


def test_critical_command(capsys):
    code, out, _ = run(capsys, "critical", "--field", "cassini", "--a", "2", *SMALL)
    pts = json.loads(out)["points"]
    assert code == 0 and [p["morse_index"] for p in pts] == [0, 1, 0]
    assert pts[0]["location"] == pytest.approx([-2.0, 0.0], abs=1e-9)


def test_cassini_demo(capsys):
    code, out, _ = run(capsys, "cassini-demo", *SMALL)
    rep = json.loads(out)
    assert code == 0
    assert rep["ground_truth"]["sql"] == 3.0
    assert rep["recovered"]["morse_indices"] == [0, 1, 0]
    assert rep["recovered"]["min_value"] == pytest.approx(-1.0, abs=1e-9)


def test_cassini_demo_rejects_other_fields(capsys):
    code, _, _ = run(capsys, "cassini-demo", "--field", "saddle")
    assert code == 1


def test_worker_count_does_not_change_output(capsys, monkeypatch):
    outs = []
    for w in ("1", "3"):
        monkeypatch.setenv("TRUNCVEX_WORKERS", w)
        outs.append(run(capsys, "analyze", "--field", "cassini", *SMALL, "--seed", "5")[1])
    assert outs[0] == outs[1]


@pytest.mark.skipif(shutil.which("truncvex") is None, reason="console script not installed")
def test_console_script():
    proc = subprocess.run(["truncvex", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("truncvex ")
    proc = subprocess.run(["truncvex", "analyze", "--field", "nope"], capture_output=True, text=True)
    assert proc.returncode == 1
