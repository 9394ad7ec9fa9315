"""Exact worst-case error verifiers for small instances, and the empirical sup over families."""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations, combinations_with_replacement
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import eigh

from .classical import mathe_coefficient

ATOM_CAP = 14


@dataclass
class LinearEstimatorSpec:
    """Finitely supported randomized linear rule: with probability p_w use coefficients a_w."""

    N: int
    atoms: list  # of (probability, np.ndarray of length N)

    def __post_init__(self):
        total = math.fsum(p for p, _ in self.atoms)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"atom probabilities sum to {total!r}, not 1")
        for _, a in self.atoms:
            if len(a) != self.N or not np.all(np.isfinite(a)):
                raise ValueError("coefficient vectors must be finite and of length N")


def second_moment_matrix(est: LinearEstimatorSpec) -> np.ndarray:
    """M with E(S_N f - A f)^2 = f^T M f."""
    s = np.full(est.N, 1.0 / est.N)
    M = np.zeros((est.N, est.N))
    for p, a in est.atoms:
        v = s - np.asarray(a, dtype=float)
        M += p * np.outer(v, v)
    return M


def worst_case_rms_l2(est: LinearEstimatorSpec) -> float:
    """sup of the RMS error over the L_2^N ball.

    The ball is (1/N) sum f_i^2 <= 1, i.e. the Euclidean ball of radius sqrt(N),
    hence the factor N in front of the top eigenvalue.
    """
    if est.N > ATOM_CAP:
        raise ValueError(f"N={est.N} exceeds the oracle cap {ATOM_CAP}")
    M = second_moment_matrix(est)
    w, V = eigh(M)
    lam, vec = w[-1], V[:, -1]
    resid = np.abs(M @ vec - lam * vec).max()
    if resid > 1e-12:
        raise ArithmeticError(f"eigen-residual {resid:.3e} above 1e-12")
    return math.sqrt(max(est.N * lam, 0.0))


def worst_case_det_lp(sampled: Sequence[int], N: int, p: float) -> float:
    """Exact sup over L_p^N of |S_N f - (1/N) sum_{i in sampled} f(i)|.

    The error is (1/N) times the sum over the unsampled set U. Hoelder duality
    with the constraint (1/N) sum_U |f|^p <= 1 gives the sup
    (1/N) |U|^(1-1/p) N^(1/p) = (|U|/N)^(1-1/p).
    """
    sampled = set(sampled)
    if any(i < 1 or i > N for i in sampled):
        raise ValueError("sampled indices must lie in 1..N")
    u = N - len(sampled)
    if u == 0:
        raise ValueError("all indices sampled; the error is zero")
    if math.isinf(p):
        return u / N
    # (1/N) * sup sum_U f  with  sum_U |f|^p <= N
    return (1.0 / N) * u ** (1.0 - 1.0 / p) * N ** (1.0 / p)


def mathe_atoms(N: int, n: int) -> LinearEstimatorSpec:
    if N > ATOM_CAP:
        raise ValueError(f"N={N} exceeds the enumeration cap {ATOM_CAP}")
    c = mathe_coefficient(n, N)
    subsets = list(combinations(range(N), n))
    prob = 1.0 / len(subsets)
    atoms = []
    for sub in subsets:
        a = np.zeros(N)
        a[list(sub)] = c
        atoms.append((prob, a))
    return LinearEstimatorSpec(N, atoms)


def deterministic_atom(N: int, sampled: Sequence[int]) -> LinearEstimatorSpec:
    a = np.zeros(N)
    a[np.asarray(list(sampled)) - 1] = 1.0 / N
    return LinearEstimatorSpec(N, [(1.0, a)])


def mc_atoms(N: int, n: int) -> LinearEstimatorSpec:
    """Law of plain MC with n i.i.d. uniform draws, enumerated over multisets."""
    if N > ATOM_CAP:
        raise ValueError(f"N={N} exceeds the enumeration cap {ATOM_CAP}")
    atoms = []
    log_nfact = math.lgamma(n + 1)
    for ms in combinations_with_replacement(range(N), n):
        counts = np.bincount(ms, minlength=N)
        logp = log_nfact - sum(math.lgamma(c + 1) for c in counts) - n * math.log(N)
        atoms.append((math.exp(logp), counts / n))
    # renormalise the rounding in exp/lgamma
    total = math.fsum(p for p, _ in atoms)
    return LinearEstimatorSpec(N, [(p / total, a) for p, a in atoms])


def empirical_worst_case(runner: Callable, members: Sequence, truths: Sequence[float],
                         trials: int = 1, criterion: str = "abs") -> float:
    """Max over family members of the per-member error.

    `runner(member, member_index, trial)` returns an estimate. Criteria:
    "abs" (deterministic, one run), "rms" (root mean square over trials) and
    "q75" (smallest eps covering 3/4 of the trials).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    return max(member_errors(runner, members, truths, trials, criterion), default=0.0)


def member_errors(runner, members, truths, trials=1, criterion="abs") -> list[float]:
    out = []
    for idx, (member, truth) in enumerate(zip(members, truths)):
        if criterion == "abs":
            out.append(abs(runner(member, idx, 0) - truth))
            continue
        errs = np.array([runner(member, idx, t) - truth for t in range(trials)])
        out.append(aggregate_errors(errs, criterion))
    return out


def aggregate_errors(errs: np.ndarray, criterion: str) -> float:
    errs = np.abs(np.asarray(errs, dtype=float))
    if criterion == "rms":
        return math.sqrt(math.fsum(errs ** 2) / errs.size)
    if criterion == "q75":
        return quantile_error(errs, 0.75)
    if criterion == "abs":
        return float(errs.max())
    raise ValueError(f"unknown criterion {criterion!r}")


def quantile_error(abs_errs: np.ndarray, level: float = 0.75) -> float:
    """Smallest eps with empirical P(|err| <= eps) >= level."""
    e = np.sort(np.abs(abs_errs))
    need = math.ceil(level * e.size - 1e-12)
    return float(e[max(need, 1) - 1])
