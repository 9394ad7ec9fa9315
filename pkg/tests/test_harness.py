import csv
import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from optint import harness as h
from optint.problem_model import ClassSpec

inf = math.inf


@pytest.mark.parametrize("problem, setting, cls, want", [
    ("summation", "deterministic", ClassSpec.lp(inf), 0.0),
    ("summation", "randomized", ClassSpec.lp(inf), -0.5),
    ("summation", "randomized", ClassSpec.lp(1.5), -1 + 1 / 1.5),
    ("summation", "quantum", ClassSpec.lp(inf), -1.0),
    ("summation", "quantum", ClassSpec.lp(2), h.OPEN),
    ("summation", "quantum", ClassSpec.lp(1.5), h.NOT_IMPLEMENTED),
    ("integration", "deterministic", ClassSpec.hoelder(1, 1.0, 2), -1.0),
    ("integration", "randomized", ClassSpec.hoelder(1, 1.0, 2), -1.5),
    ("integration", "quantum", ClassSpec.hoelder(0, 1.0, 2), -1.5),
    ("integration", "quantum", ClassSpec.hoelder(0, 0.5, 1), -1.5),
    ("integration", "deterministic", ClassSpec.sobolev(1, 1.5, 1), -1.0),
    ("integration", "randomized", ClassSpec.sobolev(1, 1.5, 1), h.NOT_IMPLEMENTED),
    ("integration", "quantum", ClassSpec.sobolev(2, inf, 1), -3.0),
])
def test_claimed_exponent(problem, setting, cls, want):
    assert h.claimed_exponent(problem, setting, cls) == want


def test_claimed_exponent_rejects():
    with pytest.raises(ValueError):
        h.claimed_exponent("summation", "randomized", ClassSpec.lp(1))
    with pytest.raises(ValueError):
        h.claimed_exponent("summation", "deterministic", ClassSpec.hoelder(0, 1.0, 1))
    with pytest.raises(ValueError):
        h.claimed_exponent("integration", "classical", ClassSpec.hoelder(0, 1.0, 1))


# --- fitting -------------------------------------------------------------------

@settings(max_examples=100, deadline=None)
@given(c=st.floats(0.01, 100), s=st.floats(-3, 1), lo=st.integers(1, 20))
def test_fit_exact_power_law(c, s, lo):
    pts = [(n, c * n ** s) for n in (lo, 2 * lo, 4 * lo, 8 * lo, 16 * lo)]
    fit = h.fit_exponent(pts)
    assert fit.slope == pytest.approx(s, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)


def test_fit_recovers_slope_under_noise():
    rng = np.random.default_rng(0)
    ns = 2.0 ** np.arange(4, 14)
    for _ in range(20):
        errs = 3 * ns ** -1.5 * (1 + 0.05 * rng.standard_normal(ns.size))
        assert abs(h.fit_exponent(list(zip(ns, errs))).slope + 1.5) <= 0.05


def test_fit_rejects():
    with pytest.raises(ValueError):
        h.fit_exponent([(1, 1.0), (2, 0.5)])
    with pytest.raises(ValueError):
        h.fit_exponent([(1, 1.0), (2, 0.0), (4, 0.25)])


# --- specs ---------------------------------------------------------------------

def test_spec_validation():
    with pytest.raises(ValueError):
        h.ExperimentSpec("summation", "randomized", ClassSpec.lp(2), [4, 4, 8], N=100)
    with pytest.raises(ValueError):
        h.ExperimentSpec("summation", "randomized", ClassSpec.lp(2), [4, 8, 16], N=16)
    with pytest.raises(ValueError):
        h.ExperimentSpec("integration", "randomized", ClassSpec.hoelder(0, 1.0, 1), [4, 8, 16],
                         algorithm="mathe")
    spec = h.ExperimentSpec("summation", "randomized", ClassSpec.lp(1.5), [4, 8, 16], N=100)
    assert spec.algorithm == "truncated-mc" and spec.criterion == "rms"


def test_not_implemented_cell_refuses():
    spec = h.ExperimentSpec("integration", "randomized", ClassSpec.sobolev(1, 1.5, 1),
                            [16, 32, 64], run_class=ClassSpec.hoelder(0, 1.0, 1))
    fit = h.run_experiment(spec)
    assert fit.status == h.NOT_IMPLEMENTED and not fit.records and not fit.passed


def test_det_summation_exact():
    spec = h.ExperimentSpec("summation", "deterministic", ClassSpec.lp(inf),
                            [100, 300, 500, 900], N=1000)
    fit = h.run_experiment(spec)
    assert fit.status == "exact" and fit.passed
    assert [float(r["error"]) for r in fit.records] == pytest.approx([0.9, 0.7, 0.5, 0.1],
                                                                     abs=1e-12)
    assert {r["criterion"] for r in fit.records} == {"exact"}


def _small_specs():
    return [
        h.ExperimentSpec("summation", "randomized", ClassSpec.lp(2), [16, 32, 64], trials=20,
                         N=1000, seed=3),
        h.ExperimentSpec("integration", "deterministic", ClassSpec.hoelder(1, 1.0, 1),
                         [8, 16, 32]),
        h.ExperimentSpec("integration", "quantum", ClassSpec.hoelder(0, 1.0, 1), [32, 48, 64]),
    ]


def test_csv_is_reproducible_and_well_formed():
    a = h.to_csv([h.run_experiment(s) for s in _small_specs()])
    b = h.to_csv([h.run_experiment(s) for s in _small_specs()])
    assert a == b
    rows = list(csv.reader(io.StringIO(a)))
    assert rows[0] == h.CSV_HEADER
    assert len(rows) == 1 + 9
    for row in rows[1:]:
        rec = dict(zip(rows[0], row))
        assert float(rec["error"]) > 0
        # 17 significant digits round-trip the double exactly
        assert format(float(rec["error"]), ".17g") == rec["error"]
        assert int(rec["evals_used"]) <= int(rec["budget"])
    crit = {r[1]: r[11] for r in rows[1:]}
    assert crit == {"randomized": "rms", "deterministic": "abs", "quantum": "q75"}
    assert json.loads(h.to_json([h.run_experiment(_small_specs()[1])]))[0]["problem"] == \
        "integration"


def test_different_seed_changes_randomized_records():
    s0, s1 = _small_specs()[0], _small_specs()[0]
    s1.seed = 4
    assert h.to_csv([h.run_experiment(s0)]) != h.to_csv([h.run_experiment(s1)])


def test_worst_case_is_max_over_members():
    spec = _small_specs()[1]
    err, evals, per = h.worst_case_at(spec, 16)
    assert err == max(per) and evals <= 16 and len(per) == len(h.family_at(spec, 16))


# --- table ---------------------------------------------------------------------

def test_empty_table():
    t = h.comparison_table()
    lines = t.splitlines()
    assert len(lines) == 1 + 5 * 3
    assert all("not run" in ln for ln in lines[1:])
    assert "p=2: open (log gap)" in t
    assert h.FOOTNOTE_N in t and h.FOOTNOTE_UPPER in t


def test_table_marks():
    fits = {(0, "deterministic"): h.run_experiment(h.ExperimentSpec(
        "summation", "deterministic", ClassSpec.lp(inf), [10, 20, 30], N=40)),
        (2, "deterministic"): h.run_experiment(_small_specs()[1])}
    fits[(4, "randomized")] = h.run_experiment(h.default_suite()[(4, "randomized")])
    t = h.comparison_table(fits).splitlines()
    assert "exact ✓" in t[1]
    assert "✓" in t[7] or "✗" in t[7]
    assert h.NOT_IMPLEMENTED in t[14]


def test_default_suite_covers_table():
    suite = h.default_suite()
    assert set(suite) == {(r, s) for r in range(5) for s in h.SETTINGS}


def test_wilson_lower():
    assert h.wilson_lower(100, 100) == pytest.approx(100 / 109, abs=1e-12)
    assert h.wilson_lower(0, 50) == 0.0
    assert h.wilson_lower(80, 100) < 0.8
