from __future__ import annotations

import json
import subprocess
import sys

import pytest

from singconn.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, main


def _cfg(tmp_path, text):
    p = tmp_path / "run.ini"
    p.write_text(text)
    return str(p)


def test_verify_lp_default_passes(tmp_path):
    out = tmp_path / "o"
    assert main(["verify-lp", "--out", str(out)]) == EXIT_OK
    doc = json.loads((out / "report.json").read_text())
    assert doc["passed"] and doc["command"] == "verify-lp"
    assert {c["case"] for c in doc["checks"]} == {"lp1 u=z", "alhol u=zbar"}
    assert (out / "config.ini").is_file() and (out / "summary.txt").is_file()


def test_zero_tolerance_fails_honestly(tmp_path, capsys):
    cfg = _cfg(tmp_path, "[verify-lp]\ntolerance = 0\n")
    assert main(["verify-lp", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_FAIL
    assert "FAILED" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["verify-lp", "--config", "/nonexistent/x.ini", "--out"],
    ["verify-lp", "--jobs", "0", "--out"],
    ["frobnicate", "--out"],
    ["--out"],
])
def test_usage_errors(tmp_path, argv):
    assert main(argv + [str(tmp_path / "o")]) == EXIT_USAGE


def test_bad_config_values_are_usage_errors(tmp_path):
    out = str(tmp_path / "o")
    for text in ("[verify-bm]\nn = 3\n", "[verify-lp]\nsuites = nope\n", "[converge]\nk-values = 0..2\n",
                 "[atomic-probe]\nmap = sinz\n", "[run]\nbogus = 1\n"):
        cmd = {"verify-bm": "verify-bm", "verify-lp": "verify-lp", "converge": "converge",
               "atomic-probe": "atomic-probe", "run": "verify-lp"}[text[1:text.index("]")]]
        assert main([cmd, "--config", _cfg(tmp_path, text), "--out", out]) == EXIT_USAGE, text


def test_atomic_probe(tmp_path):
    out = tmp_path / "o"
    assert main(["atomic-probe", "--out", str(out)]) == EXIT_OK
    assert json.loads((out / "report.json").read_text())["atomic"] is True
    cfg = _cfg(tmp_path, "[atomic-probe]\nmap = zero\n")
    assert main(["atomic-probe", "--config", cfg, "--out", str(out)]) == EXIT_FAIL
    assert "error" in json.loads((out / "report.json").read_text())


def test_verify_bm_planar(tmp_path):
    cfg = _cfg(tmp_path, "[verify-bm]\nn = 1\nsuites = flat empty\n")
    out = tmp_path / "o"
    assert main(["verify-bm", "--config", cfg, "--out", str(out)]) == EXIT_OK
    assert len(json.loads((out / "report.json").read_text())["checks"]) == 5


def test_converge_outputs_are_deterministic_across_jobs(tmp_path):
    cfg = _cfg(tmp_path, "[converge]\nk-values = 1..3\n")
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["converge", "--config", cfg, "--out", str(a), "--jobs", "1"]) == EXIT_OK
    assert main(["converge", "--config", cfg, "--out", str(b), "--jobs", "2"]) == EXIT_OK
    for name in ("convergence.csv", "summary.json", "gap.svg"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    assert json.loads((a / "summary.json").read_text())["consistent"]
    assert (a / "timings.json").is_file()


def test_out_directory_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("SINGCONN_OUT", str(tmp_path / "env"))
    assert main(["atomic-probe"]) == EXIT_OK
    assert (tmp_path / "env" / "report.json").is_file()


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "singconn.cli", "atomic-probe", "--out", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == EXIT_OK, r.stderr
    assert json.loads(r.stdout)["atomic"] is True
