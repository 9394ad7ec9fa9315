import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from optint import quantum_core as qc
from optint import quantum_estimators as qe
from optint.classical import RngStream, det_quadrature
from optint.harness import head_to_head
from optint.problem_model import ClassSpec, FunctionHandle, SequenceInput, bump_family


def _two_level_estimator(N, t, a):
    """Half the entries at each of two levels with midpoint a, one value bit."""
    levels = np.array([0.0, 2 * a]) if a <= 0.5 else np.array([2 * a - 1, 1.0])
    vals = np.where(np.arange(N) % 2 == 0, levels[1], levels[0])
    est = qe.AmplitudeEstimator(N, qe.QaeConfig(t=t, b=1, shots=1),
                                lambda y: (np.asarray(y) == levels[1]).astype(np.int64),
                                lambda i, v: levels[v])
    return est, (lambda i: vals[i])


def _mass_near(dist, x, tol=1e-12):
    return math.fsum(p for v, p in dist.items() if abs(v - x) <= tol)


def test_config_validation():
    with pytest.raises(ValueError):
        qe.QaeConfig(t=0)
    with pytest.raises(ValueError):
        qe.QaeConfig(t=2, shots=2)
    assert qe.QaeConfig(t=3).queries_per_shot == 15


@pytest.mark.parametrize("fill, want", [(0.0, 0.0), (1.0, 1.0)])
def test_qae_constant_values(fill, want):
    vals = SequenceInput([fill] * 5)
    for s in range(5):
        assert qe.qae_mean01(vals, qe.QaeConfig(t=3, b=2, shots=1), RngStream(s),
                             backend="circuit") == want


def test_qae_point_mass_half():
    est = qe.AmplitudeEstimator(4, qe.QaeConfig(t=2, b=1, shots=1),
                                lambda y: np.asarray(y, dtype=np.int64), lambda i, v: v * 1.0)
    f = lambda i: np.array([1, 1, 0, 0])[i]
    dist = qc.output_distribution(est.algorithm(), f)
    assert _mass_near(dist, 0.5) == pytest.approx(1.0, abs=1e-12)


def test_qae_grid_membership():
    est, f = _two_level_estimator(8, 3, 0.3)
    grid = set(qe.qae_grid(8).tolist())
    assert set(qc.output_distribution(est.algorithm(), f)) <= grid
    for s in range(10):
        assert est.run(f, RngStream(s), backend="circuit") in grid


def test_qae_success_guarantee_sampled():
    # a = 0.3, M = 64, single shots drawn from the exact law
    est, f = _two_level_estimator(4, 6, 0.3)
    dist = est.distribution(f, "analytic")
    tol = math.pi / 64 + math.pi ** 2 / 64 ** 2
    hits = np.mean([abs(qe.sample_median(dist, 1, RngStream(s)) - 0.3) <= tol
                    for s in range(2000)])
    assert hits >= qe.SUCCESS_PROB - 0.03


def test_circuit_law_equals_analytic_law():
    for a, t in [(0.3, 3), (0.11, 4), (0.5, 2), (0.93, 4)]:
        est, f = _two_level_estimator(6, t, a)
        exact = est.distribution(f, "exact")
        ana = est.distribution(f, "analytic")
        for key in set(exact) | set(ana):
            assert exact.get(key, 0.0) == pytest.approx(ana.get(key, 0.0), abs=1e-12)


def test_index_dependent_rotation_matches_analytic():
    rng = np.random.default_rng(2)
    g_tab = rng.random((4, 4))
    vals = np.array([0, 3, 1, 2])
    est = qe.AmplitudeEstimator(4, qe.QaeConfig(t=3, b=2, shots=1),
                                lambda y: np.asarray(y, dtype=np.int64),
                                lambda i, v: g_tab[np.asarray(i) % 4, v], g_uses_index=True)
    f = lambda i: vals[i]
    assert est.amplitude(f) == pytest.approx(np.mean(g_tab[np.arange(4), vals]))
    exact, ana = est.distribution(f, "exact"), est.distribution(f, "analytic")
    assert max(abs(exact.get(k, 0) - ana.get(k, 0)) for k in set(exact) | set(ana)) < 1e-12


@pytest.mark.parametrize("N", [3, 8, 16])
def test_exact_success_probability(N):
    for t in (3, 4, 5):
        M = 1 << t
        tol = math.pi / M + math.pi ** 2 / M ** 2
        for j in range(0, N + 1, max(1, N // 4)):
            a = j / N
            vals = (np.arange(N) < j).astype(float)
            est = qe.AmplitudeEstimator(N, qe.QaeConfig(t=t, b=1, shots=1),
                                        lambda y: np.asarray(y, dtype=np.int64),
                                        lambda i, v: v * 1.0)
            dist = est.distribution(lambda i: vals[i], "exact")
            assert sum(p for v, p in dist.items() if abs(v - a) <= tol) >= qe.SUCCESS_PROB - 1e-12


def test_run_matches_distribution_ks():
    est, f = _two_level_estimator(4, 3, 0.2)
    alg = est.algorithm()
    dist = qc.output_distribution(alg, f)
    T = 2000
    outs = np.array([qc.run_once(alg, f, RngStream(s)) for s in range(T)])
    keys = sorted(dist)
    cdf = np.cumsum([dist[k] for k in keys])
    emp = np.array([np.mean(outs <= k) for k in keys])
    assert np.max(np.abs(emp - cdf)) <= 1.95 / math.sqrt(T)


def test_query_accounting():
    est, f = _two_level_estimator(4, 3, 0.2)
    est.cfg = qe.QaeConfig(t=3, b=1, shots=3)
    c = qc.QueryCounter()
    est.run(f, RngStream(0), backend="circuit", counter=c)
    assert est.algorithm().n == 2 * (est.cfg.M - 1) + 1
    assert c.count == 3 * (2 * est.cfg.M - 1) == 3 * est.cfg.queries_per_shot
    c2 = qc.QueryCounter()
    est.run(f, RngStream(0), backend="exact", counter=c2)
    assert c2.count == c.count


def test_median_law_matches_sampling():
    dist = {0.0: 0.6, 1.0: 0.3, 2.0: 0.1}
    law = qe.median_law(dist, 5)
    assert math.fsum(law.values()) == pytest.approx(1.0)
    draws = np.array([qe.sample_median(dist, 5, RngStream(s)) for s in range(20000)])
    for k, p in law.items():
        assert abs(np.mean(draws == k) - p) <= 4 * math.sqrt(p * (1 - p) / 20000) + 1e-9


# --- bounded means -------------------------------------------------------------------

@pytest.mark.parametrize("n, shots, t", [(8, 5, 0), (15, 5, 1), (35, 5, 2), (16, 1, 3), (511, 1, 8)])
def test_plan_queries(n, shots, t):
    if t == 0:
        tt, s = qe.plan_queries(n, shots)
        assert s * 3 <= n
        return
    tt, s = qe.plan_queries(n, shots)
    assert tt == t and s * (2 * (1 << tt) - 1) <= n


def test_quantum_mean_bounded_examples():
    ones = SequenceInput(np.ones(8))
    assert quantum_mean_bounded_(ones, 16) == 1.0
    pm = SequenceInput(np.tile([1.0, -1.0], 4))
    est, oracle = qe.bounded_mean_estimator(pm, 16, b=1, shots=1)
    assert _mass_near(est.distribution(oracle, "exact"), 0.5) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        qe.quantum_mean_bounded(SequenceInput([2.0, 0.0]), 16, RngStream(0))
    with pytest.raises(ValueError):
        qe.quantum_mean_bounded(ones, 7, RngStream(0))


def quantum_mean_bounded_(f, n):
    return qe.quantum_mean_bounded(f, n, RngStream(0), b=1, shots=1).value


@settings(max_examples=30, deadline=None)
@given(j=st.integers(0, 8), t=st.integers(2, 4))
def test_exact_whenever_representable(j, t):
    M = 1 << t
    if j > M // 2:
        j = M // 2
    a = math.sin(math.pi * j / M) ** 2
    est, f = _two_level_estimator(4, t, a)
    dist = est.distribution(f, "exact")
    assert max(dist.values()) >= 1 - 1e-9
    assert max(dist, key=dist.get) == pytest.approx(a, abs=1e-12)


def test_reported_queries():
    f = SequenceInput(np.linspace(-1, 1, 10))
    e = qe.quantum_mean_bounded(f, 100, RngStream(0), b=4, shots=5)
    assert e.evals_used == 5 * (2 * 8 - 1)


# --- integration -----------------------------------------------------------------------

def test_residual_bound_and_lebesgue():
    assert qe.residual_bound(0, 1.0, 2, 0.1) == pytest.approx(math.sqrt(2) * 0.05)
    assert qe.lebesgue_constant(0) == 1.0
    assert qe.lebesgue_constant(1) >= 1.0


def test_residual_bound_holds_on_family():
    spec = ClassSpec.hoelder(1, 1.0, 2)
    from optint.classical import PiecewiseInterpolant
    x = np.random.default_rng(0).random((20000, 2))
    for f in bump_family(spec, 3, 3).members:
        P = PiecewiseInterpolant(f.fresh(), 1, 2, 3)
        assert np.abs(f(x) - P(x)).max() <= qe.residual_bound(1, 1.0, 2, 1 / 3)


@pytest.mark.parametrize("k, d", [(0, 1), (1, 2)])
def test_quantum_integration_exact_on_polynomials(k, d):
    spec = ClassSpec.hoelder(k, 1.0, d)
    fh = FunctionHandle(lambda x: 0.3 + 0.2 * x[:, 0] * k, d)
    det = det_quadrature(fh.fresh(), spec, 200).value
    for s in range(5):
        est = qe.quantum_integrate_hoelder(fh.fresh(), spec, 200, RngStream(s))
        assert est.value == pytest.approx(det, abs=1e-6)
        assert est.evals_used <= 200


def test_quantum_integration_budget_checks():
    fh = FunctionHandle(lambda x: x[:, 0], 1)
    with pytest.raises(ValueError):
        qe.quantum_integrate_hoelder(fh, ClassSpec.hoelder(0, 1.0, 1), 17, RngStream(0))
    with pytest.raises(ValueError):
        qe.quantum_integrate_hoelder(fh, ClassSpec.sobolev(1, 2, 1), 100, RngStream(0))


def test_quantum_integration_accounting():
    spec = ClassSpec.hoelder(0, 1.0, 2)
    f = bump_family(spec, 4, 2).members[1]
    plan = qe.plan_quantum_integration(f.fresh(), spec, 300)
    c = qc.QueryCounter()
    fh = f.fresh()
    est = qe.quantum_integrate_hoelder(fh, spec, 300, RngStream(1), counter=c)
    assert c.count == plan.estimator.cfg.shots * plan.estimator.cfg.queries_per_shot
    assert fh.eval_count == plan.classical_evals
    assert est.evals_used == fh.eval_count + c.count <= 300


def test_discretisation_refinement_stable():
    # halving or doubling the refinement moves the discrete residual mean by far
    # less than the quantum resolution bound / M
    spec = ClassSpec.hoelder(0, 1.0, 2)
    f = bump_family(spec, 8, 2).members[1]
    means = []
    for r in (2, 4, 8):
        plan = qe.plan_quantum_integration(f.fresh(), spec, 512, refine=r)
        means.append(plan.value(plan.estimator.amplitude(plan.oracle)))
    M = plan.estimator.cfg.M
    resolution = plan.bound / M
    assert max(abs(m - f.exact_integral) for m in means) < 0.05 * resolution * M / 4
    assert max(means) - min(means) < resolution


def test_quantum_beats_det_1d():
    spec = ClassSpec.hoelder(0, 1.0, 1)
    h = head_to_head(spec, 256, seeds=100)
    assert h.passed, (h.det_worst, h.lower_bounds)
