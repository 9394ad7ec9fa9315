import csv
import io
import json
import math
import subprocess
import sys

import pytest

from optint import cli
from optint.harness import CSV_HEADER


def _run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_sum_det_json(capsys):
    code, out, _ = _run(capsys, "sum", "--setting", "det", "--p", "inf", "--N", "1000",
                        "--n", "100", "--json")
    rec = json.loads(out)
    assert code == 0 and rec["error"] == pytest.approx(0.9, abs=1e-12)
    assert rec["evals_used"] == 100 and rec["criterion"] == "abs"


@pytest.mark.parametrize("setting, p", [("mathe", "2"), ("mc", "inf"), ("truncated-mc", "1.5"),
                                        ("quantum", "inf")])
def test_sum_randomized_settings(capsys, setting, p):
    code, out, _ = _run(capsys, "sum", "--setting", setting, "--p", p, "--N", "2000",
                        "--n", "64", "--trials", "20", "--json")
    rec = json.loads(out)
    assert code == 0 and rec["evals_used"] <= 64 and math.isfinite(rec["error"])


def test_quantum_sum_rejects_unbounded_input(capsys):
    code, _, err = _run(capsys, "sum", "--setting", "quantum", "--p", "1.5", "--N", "2000",
                        "--n", "64")
    assert code == 1 and "error" in err


@pytest.mark.parametrize("setting", ["det", "mc", "quantum"])
def test_integrate(capsys, setting):
    code, out, _ = _run(capsys, "integrate", "--setting", setting, "--k", "0", "--alpha", "1",
                        "--d", "1", "--n", "64", "--trials", "5", "--json")
    rec = json.loads(out)
    assert code == 0 and rec["evals_used"] <= 64 and rec["error"] >= 0


def test_rates_csv(capsys, tmp_path):
    path = tmp_path / "r.csv"
    code, _, err = _run(capsys, "rates", "--problem", "int", "--setting", "det", "--k", "1",
                        "--d", "1", "--grid", "8,16,32,64", "--out", str(path))
    assert code == 0 and "slope=" in err
    rows = list(csv.reader(io.StringIO(path.read_text())))
    assert rows[0] == CSV_HEADER and len(rows) == 5
    code, out, _ = _run(capsys, "rates", "--problem", "sum", "--setting", "mathe", "--p", "2",
                        "--N", "1000", "--grid", "16,32,64", "--trials", "10")
    assert code == 0 and out.splitlines()[0] == ",".join(CSV_HEADER)


def test_usage_errors(capsys):
    assert _run(capsys, "sum", "--setting", "det")[0] == 1
    assert _run(capsys, "sum", "--setting", "nope", "--p", "2", "--N", "9", "--n", "3")[0] == 1
    assert _run(capsys, "sum", "--setting", "det", "--p", "2", "--N", "9", "--n", "9")[0] == 1
    assert _run(capsys, "rates", "--problem", "int", "--setting", "mathe", "--grid", "8,16,32")[0] == 1
    assert _run(capsys, "rates", "--problem", "sum", "--setting", "mc", "--grid", "8,4,16",
                "--N", "100")[0] == 1


@pytest.mark.parametrize("check", ["thm1", "eq28", "qae"])
def test_oracle_checks_pass(capsys, check):
    code, out, _ = _run(capsys, "oracle", "--check", check, "--Nmax", "8")
    assert code == 0 and "all checks passed" in out


def test_oracle_failure_exit_code(capsys, monkeypatch):
    monkeypatch.setattr(cli, "theorem1_error", lambda N, n, p: 0.0)
    code, out, _ = _run(capsys, "oracle", "--check", "thm1", "--Nmax", "4")
    assert code == 2 and "FAIL" in out


def test_console_script_entry():
    res = subprocess.run([sys.executable, "-m", "optint.cli", "oracle", "--check", "eq28",
                          "--Nmax", "5"], capture_output=True, text=True)
    assert res.returncode == 0 and "all checks passed" in res.stdout
