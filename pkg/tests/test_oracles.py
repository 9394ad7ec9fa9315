import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from optint.classical import (RngStream, classical_mc_mean, det_partial_mean, eq28_error,
                              mathe_coefficient, theorem1_error)
from optint.oracles import (LinearEstimatorSpec, deterministic_atom, empirical_worst_case,
                            mathe_atoms, mc_atoms, quantile_error, second_moment_matrix,
                            worst_case_det_lp, worst_case_rms_l2)
from optint.problem_model import SequenceInput, extreme_sequence, linf_mixed_family


def test_spec_rejects_bad_probabilities():
    with pytest.raises(ValueError):
        LinearEstimatorSpec(2, [(0.5, np.zeros(2)), (0.4, np.zeros(2))])
    with pytest.raises(ValueError):
        LinearEstimatorSpec(2, [(1.0, np.array([np.inf, 0.0]))])


def test_rms_examples():
    assert worst_case_rms_l2(deterministic_atom(8, range(1, 7))) == pytest.approx(0.5, abs=1e-12)
    assert worst_case_rms_l2(mathe_atoms(2, 1)) == pytest.approx(0.5, abs=1e-12)
    zero = LinearEstimatorSpec(5, [(1.0, np.zeros(5))])
    assert worst_case_rms_l2(zero) == pytest.approx(1.0, abs=1e-12)


def test_quadratic_form_matches_simulation():
    est = mathe_atoms(5, 2)
    M = second_moment_matrix(est)
    f = np.array([1.0, -2.0, 0.5, 0.0, 3.0])
    direct = sum(p * (f.mean() - a @ f) ** 2 for p, a in est.atoms)
    assert f @ M @ f == pytest.approx(direct, rel=1e-12)


@pytest.mark.parametrize("sampled, N, p, want", [({1, 2}, 4, math.inf, 0.5),
                                                 ({1}, 10, 1, 1.0),
                                                 (range(1, 7), 8, 2, 0.5)])
def test_det_lp_examples(sampled, N, p, want):
    assert worst_case_det_lp(sampled, N, p) == pytest.approx(want, abs=1e-15)


def test_det_lp_rejects_full_sampling():
    with pytest.raises(ValueError):
        worst_case_det_lp(range(1, 5), 4, 2)


def test_mathe_atoms_examples():
    a = mathe_atoms(2, 1)
    assert len(a.atoms) == 2 and all(p == 0.5 for p, _ in a.atoms)
    assert sorted(tuple(v) for _, v in a.atoms) == [(0.0, 0.5), (0.5, 0.0)]
    b = mathe_atoms(3, 2)
    assert len(b.atoms) == 3
    assert all(np.isclose(v[v > 0], 1 / 3).all() for _, v in b.atoms)
    for N in range(2, 11):
        for n in range(1, N):
            assert math.fsum(p for p, _ in mathe_atoms(N, n).atoms) == pytest.approx(1, abs=1e-12)
    with pytest.raises(ValueError):
        mathe_atoms(15, 2)


def test_two_oracles_agree_for_deterministic_rule():
    for N in range(2, 13):
        for n in range(1, N):
            got = worst_case_rms_l2(deterministic_atom(N, range(1, n + 1)))
            assert got == pytest.approx(theorem1_error(N, n, 2), abs=1e-12)


def test_mc_never_beats_mathe():
    for N in range(2, 9):
        for n in range(1, min(N, 5)):
            assert worst_case_rms_l2(mc_atoms(N, n)) >= eq28_error(N, n) - 1e-10


def test_empirical_worst_case_det_attains_closed_form():
    N, n = 20, 7
    f = extreme_sequence(N, math.inf, range(n + 1, N + 1))
    run = lambda member, idx, t: det_partial_mean(member, n).value
    assert empirical_worst_case(run, [f], [mean_operator_(f)]) == pytest.approx(
        theorem1_error(N, n, math.inf), abs=1e-15)


def mean_operator_(f):
    return float(np.mean(f.values))


def test_empirical_worst_case_exact_algorithm():
    members = [SequenceInput([c] * 4) for c in (0.0, 0.5, -1.0)]
    run = lambda member, idx, t: float(member.values[0])
    assert empirical_worst_case(run, members, [0.0, 0.5, -1.0], trials=5, criterion="rms") == 0


def test_empirical_worst_case_mc_near_eq28():
    N, n = 10 ** 5, 256
    fam = linf_mixed_family(N)
    run = lambda f, idx, t: classical_mc_mean(f, n, RngStream(1000 * idx + t)).value
    err = empirical_worst_case(run, fam.members, fam.truths, trials=200, criterion="rms")
    ref = eq28_error(N, n)
    assert 0.5 * ref <= err <= 2 * ref


@settings(max_examples=50, deadline=None)
@given(errs=st.lists(st.floats(0, 5), min_size=2, max_size=8), extra=st.floats(0, 5))
def test_empirical_worst_case_monotone(errs, extra):
    run = lambda member, idx, t: member
    base = empirical_worst_case(run, errs, [0.0] * len(errs))
    more = empirical_worst_case(run, errs + [extra], [0.0] * (len(errs) + 1))
    assert more >= base


def test_quantile_error():
    assert quantile_error(np.array([0.0, 0.0, 0.0, 1.0])) == 0.0
    assert quantile_error(np.array([0.0, 0.0, 1.0, 1.0])) == 1.0
    assert quantile_error(np.arange(100.0)) == 74.0


def test_mathe_coefficient_in_atoms():
    c = mathe_coefficient(3, 7)
    assert all(np.isclose(v[v > 0], c).all() for _, v in mathe_atoms(7, 3).atoms)
