"""Amplitude estimation for means, and quantum Hoelder integration.

Register layout (qubit 0 most significant):

    [ index : m' ][ value : b ][ ancilla : 1 ][ phase : t ]

A = R Q_f P prepares sum_i N^-1/2 |i>|beta_i>(sqrt(1-g)|0> + sqrt(g)|1>),
where P spreads the index register uniformly over the first N states and R
is a rotation of the ancilla selected by the (index, value) registers. The
inverse uses Q_f^-1 = Neg Q_f Neg, with Neg: v -> -v mod 2^b, so every
Grover iterate G = A S_0 A^dag S_chi costs two queries. Control of G by a
phase qubit sits on the two reflections only: with the control off the
iterate collapses to A A^dag = I, so the queries themselves stay
uncontrolled. One shot costs 1 + 2(M-1) = 2M - 1 queries.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import quantum_core as qc
from .classical import (Estimate, PiecewiseInterpolant, RngStream, cells_per_axis,
                        _lagrange_basis)
from .problem_model import ClassKind, ClassSpec, FunctionHandle, SequenceInput

EXACT_BACKEND_MAX_QUBITS = 16
SUCCESS_PROB = 8 / math.pi ** 2


@dataclass(frozen=True)
class QaeConfig:
    t: int
    b: int = 10
    shots: int = 5
    index_qubits: int | None = None

    def __post_init__(self):
        if self.t < 1 or self.b < 1:
            raise ValueError("need t >= 1 and b >= 1")
        if self.shots < 1 or self.shots % 2 == 0:
            raise ValueError("shots must be a positive odd integer")

    @property
    def M(self) -> int:
        return 1 << self.t

    @property
    def queries_per_shot(self) -> int:
        return 2 * self.M - 1


class ReflectionGate(qc._LocalOp):
    """x -> sign * (x - 2 u <u, x>) for a unit vector u on the target qubits."""

    def __init__(self, u, qubits, controls=(), sign: float = 1.0):
        super().__init__(qubits, controls)
        u = np.asarray(u, dtype=complex)
        self.u = u / np.linalg.norm(u)
        self.sign = sign

    def _act(self, sub):
        proj = sub @ self.u.conj()
        return self.sign * (sub - 2.0 * proj[..., None] * self.u)

    def adjoint(self):
        return self


class _Identity(qc._LocalOp):
    def _act(self, sub):
        return sub

    def adjoint(self):
        return self


def uniform_prep(N: int, width: int) -> qc._LocalOp:
    """Householder reflection mapping |0> to N^-1/2 sum_{i<N} |i>."""
    dim = 1 << width
    s = np.zeros(dim)
    s[:N] = 1 / math.sqrt(N)
    if N == 1:
        return _Identity(range(width))
    e0 = np.zeros(dim)
    e0[0] = 1.0
    return ReflectionGate(e0 - s, range(width))


def readout_value(y: np.ndarray | int, M: int):
    """a-hat = sin^2(pi y / M), symmetrised so y and M - y give identical floats."""
    j = np.minimum(y, M - np.asarray(y))
    return np.sin(np.pi * j / M) ** 2


def qae_grid(M: int) -> np.ndarray:
    return readout_value(np.arange(M // 2 + 1), M)


class AmplitudeEstimator:
    """Amplitude estimation of a = (1/N) sum_i g(i, beta(f(tau(i)))).

    g(index_array, code_array) returns the marked-ancilla probability for a
    written value code; it must lie in [0, 1].
    """

    def __init__(self, N: int, cfg: QaeConfig, beta: Callable[[float], int],
                 g: Callable[[np.ndarray, np.ndarray], np.ndarray],
                 tau: Callable[[int], object] = lambda i: i, g_uses_index: bool = False):
        width = max(1, math.ceil(math.log2(N))) if N > 1 else 1
        if cfg.index_qubits is not None:
            if 1 << cfg.index_qubits < N:
                raise ValueError(f"index register of {cfg.index_qubits} qubits cannot hold N={N}")
            width = cfg.index_qubits
        self.N, self.cfg, self.width = N, cfg, width
        self.beta, self.g, self.tau = beta, g, tau
        self.g_uses_index = g_uses_index
        self.query = qc.Query(width, cfg.b, np.arange(N), tau, beta, vectorized=True)
        self.m = width + cfg.b + 1 + cfg.t
        self._alg = None

    # layout
    @property
    def index_qubits(self):
        return list(range(self.width))

    @property
    def value_qubits(self):
        return list(range(self.width, self.width + self.cfg.b))

    @property
    def ancilla(self):
        return self.width + self.cfg.b

    @property
    def phase_qubits(self):
        return list(range(self.ancilla + 1, self.m))

    def _rotation(self) -> qc.MultiplexedRY:
        codes = np.arange(1 << self.cfg.b)
        if self.g_uses_index:
            ii, vv = np.meshgrid(np.arange(1 << self.width), codes, indexing="ij")
            probs = self.g(ii.ravel(), vv.ravel())
            selectors = self.index_qubits + self.value_qubits
        else:
            probs = self.g(np.zeros_like(codes), codes)
            selectors = self.value_qubits
        probs = np.clip(np.asarray(probs, dtype=float), 0.0, 1.0)
        return qc.MultiplexedRY(2 * np.arcsin(np.sqrt(probs)), selectors, self.ancilla)

    def algorithm(self) -> qc.QAlgorithm:
        if self._alg is not None:
            return self._alg
        cfg = self.cfg
        b, M = cfg.b, cfg.M
        prep = uniform_prep(self.N, self.width)
        rot = self._rotation()
        neg = qc.PermutationGate((-np.arange(1 << b)) % (1 << b), self.value_qubits)
        work = self.index_qubits + self.value_qubits + [self.ancilla]
        e0 = np.zeros(1 << len(work))
        e0[0] = 1.0

        unitaries = [qc.Circuit([qc.Gate(qc.HADAMARD, [p]) for p in self.phase_qubits] + [prep])]
        pending = [rot]  # operations waiting for the next query boundary
        for j, p in enumerate(self.phase_qubits):
            for _ in range(1 << (cfg.t - 1 - j)):
                s_chi = qc.DiagonalGate([1, -1], [self.ancilla], controls=[p])
                s_0 = ReflectionGate(e0, work, controls=[p], sign=-1.0)
                unitaries.append(qc.Circuit(pending + [s_chi, rot.adjoint(), neg]))
                unitaries.append(qc.Circuit([neg, prep.adjoint(), s_0, prep]))
                pending = [rot]
        iqft = qc.Gate(qc.qft_matrix(cfg.t).conj().T, self.phase_qubits)
        unitaries.append(qc.Circuit(pending + [iqft]))

        ell = np.arange(1 << self.m)
        phi = readout_value(ell & (M - 1), M)
        self._alg = qc.QAlgorithm(self.m, 0, self.query, unitaries, phi)
        return self._alg

    def amplitude(self, f: Callable) -> float:
        codes = self.query.written_values(f)
        probs = np.clip(self.g(np.arange(self.N), codes), 0.0, 1.0)
        return math.fsum(probs) / self.N

    def analytic_distribution(self, f: Callable) -> dict:
        """Exact readout law from the two-dimensional Grover subspace.

        P(y) = (K(theta/pi - y/M) + K(-theta/pi - y/M)) / 2 with the Fejer
        kernel K(delta) = sin^2(pi M delta) / (M sin(pi delta))^2.
        """
        a = self.amplitude(f)
        return qae_law(a, self.cfg.M)

    def distribution(self, f: Callable, backend: str = "auto") -> dict:
        if backend == "auto":
            backend = "exact" if self.m <= EXACT_BACKEND_MAX_QUBITS else "analytic"
        if backend == "exact":
            return qc.output_distribution(self.algorithm(), f)
        if backend == "analytic":
            return self.analytic_distribution(f)
        raise ValueError(f"unknown backend {backend!r}")

    def run(self, f: Callable, rng: RngStream, backend: str = "auto",
            counter: qc.QueryCounter | None = None) -> float:
        """Median of cfg.shots readouts.

        backend "circuit" re-executes the circuit per shot; the other
        backends compute the readout law once and draw the shots from it.
        """
        shots = self.cfg.shots
        if backend == "circuit":
            return qc.median_boost(self.algorithm(), f, shots, rng, counter)
        dist = self.distribution(f, backend)
        if counter is not None:
            counter.count += shots * self.cfg.queries_per_shot
        return sample_median(dist, shots, rng)


def qae_law(a: float, M: int) -> dict:
    theta = math.asin(math.sqrt(min(max(a, 0.0), 1.0)))
    y = np.arange(M)
    probs = 0.5 * (_fejer(theta / math.pi - y / M, M) + _fejer(-theta / math.pi - y / M, M))
    probs = probs / math.fsum(probs)
    return qc.aggregate(readout_value(y, M), probs)


def _fejer(delta: np.ndarray, M: int) -> np.ndarray:
    delta = delta - np.round(delta)
    den = (M * np.sin(np.pi * delta)) ** 2
    out = np.ones_like(delta)
    nz = np.abs(delta) > 1e-15
    out[nz] = np.sin(np.pi * M * delta[nz]) ** 2 / den[nz]
    return out


def sample_median(dist: dict, shots: int, rng: RngStream) -> float:
    outs = np.fromiter(dist.keys(), dtype=float)
    probs = np.fromiter(dist.values(), dtype=float)
    draws = qc.sample_basis(probs / probs.sum(), rng.generator, size=shots)
    return float(np.median(outs[draws]))


def median_law(dist: dict, shots: int) -> dict:
    """Exact law of the median of `shots` independent draws from `dist`.

    With F the CDF at atom x, P(median <= x) = P(Binomial(shots, F) >= (shots+1)/2).
    """
    if shots < 1 or shots % 2 == 0:
        raise ValueError("shots must be a positive odd integer")
    outs = sorted(dist)
    F = np.cumsum([dist[o] for o in outs])
    F = np.minimum(F / F[-1], 1.0)
    need = (shots + 1) // 2
    tail = np.array([sum(math.comb(shots, j) * q ** j * (1 - q) ** (shots - j)
                         for j in range(need, shots + 1)) for q in F])
    probs = np.diff(np.concatenate([[0.0], tail]))
    return {o: float(pr) for o, pr in zip(outs, probs) if pr > 0}


def uniform_levels(b: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    return lo + (hi - lo) * np.arange(1 << b) / ((1 << b) - 1)


def nearest_level_beta(levels: np.ndarray, lo: float, hi: float) -> Callable[[float], int]:
    """beta for a uniform level grid: index of the nearest level to y."""
    top = levels.size - 1

    def beta(y):
        return np.clip(np.rint((np.asarray(y) - lo) / (hi - lo) * top), 0, top).astype(np.int64)

    return beta


def qae_mean01(values: SequenceInput, cfg: QaeConfig, rng: RngStream,
               backend: str = "auto", levels: np.ndarray | None = None,
               counter: qc.QueryCounter | None = None) -> float:
    """Estimate S_N(values) for values in [0, 1].

    `levels` (length 2^b, values in [0,1]) replaces the default uniform
    grid; beta writes the index of the nearest level.
    """
    vals = values.values
    if vals.min() < 0 or vals.max() > 1:
        raise ValueError("qae_mean01 needs all values in [0, 1]")
    if levels is None:
        levels = uniform_levels(cfg.b)
        beta = nearest_level_beta(levels, 0.0, 1.0)
    else:
        levels = np.asarray(levels, dtype=float)
        if levels.size != 1 << cfg.b or levels.min() < 0 or levels.max() > 1:
            raise ValueError("need 2^b levels inside [0, 1]")
        beta = lambda y: np.argmin(np.abs(levels[None, :] - np.atleast_1d(y)[:, None]), axis=1)
    est = AmplitudeEstimator(values.N, cfg, beta, lambda i, v: levels[v])
    return est.run(lambda i: vals[i], rng, backend, counter)


def plan_queries(n_queries: int, shots: int) -> tuple[int, int]:
    """(t, shots) with the largest M = 2^t such that shots * (2M - 1) <= n_queries.

    Shots are reduced (kept odd) when even M = 2 does not fit.
    """
    while shots > 1 and shots * 3 > n_queries:
        shots -= 2
    if shots * 3 > n_queries:
        raise ValueError(f"{n_queries} queries cannot pay for one shot with M = 2")
    t = 1
    while shots * (2 * (1 << (t + 1)) - 1) <= n_queries:
        t += 1
    return t, shots


def bounded_mean_estimator(f: SequenceInput, n_queries: int, b: int = 10,
                           shots: int = 5) -> tuple[AmplitudeEstimator, Callable]:
    """Amplitude estimator for (f+1)/2 sized to the query budget, plus the oracle f."""
    vals = f.values
    if np.abs(vals).max() > 1:
        raise ValueError("quantum_mean_bounded needs |f(i)| <= 1")
    if n_queries < 8:
        raise ValueError("need at least 8 queries")
    t, shots = plan_queries(n_queries, shots)
    levels = uniform_levels(b)
    beta = nearest_level_beta(levels, -1.0, 1.0)
    est = AmplitudeEstimator(f.N, QaeConfig(t=t, b=b, shots=shots), beta,
                             lambda i, v: levels[v])
    return est, (lambda i: vals[i])


def quantum_mean_bounded(f: SequenceInput, n_queries: int, rng: RngStream, b: int = 10,
                         shots: int = 5, backend: str = "auto",
                         counter: qc.QueryCounter | None = None) -> Estimate:
    """Estimate S_N(f) for |f| <= 1 by amplitude estimation of (f+1)/2.

    Uses the largest M = 2^t whose shots fit into n_queries; reports the
    queries actually spent.
    """
    est, oracle = bounded_mean_estimator(f, n_queries, b, shots)
    a_hat = est.run(oracle, rng, backend, counter)
    return Estimate(2 * a_hat - 1, est.cfg.shots * est.cfg.queries_per_shot, "quantum")


# --- quantum integration ---------------------------------------------------

def lebesgue_constant(k: int) -> float:
    """Lebesgue constant of interpolation at the k+1 Gauss-Legendre nodes on [-1, 1]."""
    nodes = np.polynomial.legendre.leggauss(k + 1)[0]
    t = np.linspace(-1, 1, 20001)
    return float(np.abs(_lagrange_basis(nodes, t)).sum(axis=1).max())


def residual_bound(k: int, alpha: float, d: int, h: float) -> float:
    """Upper bound of |f - Pi f| on a cell of side h, for f in F_d^{k,alpha}.

    With T the degree-k Taylor polynomial at the cell centre, Pi T = T and
    |f - T| <= (d h/2)^k / k! * (sqrt(d) h/2)^alpha, so
    |f - Pi f| <= (1 + Lambda_k^d) |f - T|. For k = 0 the interpolant is the
    centre value and the bound is (sqrt(d) h/2)^alpha.
    """
    hoelder_part = (math.sqrt(d) * h / 2) ** alpha
    if k == 0:
        return hoelder_part
    taylor = (d * h / 2) ** k / math.factorial(k) * hoelder_part
    return (1 + lebesgue_constant(k) ** d) * taylor


def refined_points(m: int, d: int, refine: int) -> np.ndarray:
    """Centres of the (m*refine)^d sub-cells of the uniform grid."""
    s = m * refine
    g = (np.arange(s) + 0.5) / s
    return np.array(np.meshgrid(*([g] * d), indexing="ij")).reshape(d, -1).T


@dataclass
class QuantumIntegrationPlan:
    """Everything fixed before measurement: interpolant data and the QAE instance."""

    interp_integral: float
    bound: float
    estimator: AmplitudeEstimator
    oracle: Callable
    classical_evals: int

    @property
    def evals_used(self) -> int:
        cfg = self.estimator.cfg
        return self.classical_evals + cfg.shots * cfg.queries_per_shot

    def value(self, a_hat: float) -> float:
        return self.interp_integral + self.bound * (2 * a_hat - 1)


def split_budget(spec: ClassSpec, n_budget: int, shots: int = 1) -> tuple[int, int]:
    """(cells per axis, phase qubits) minimising residual_bound(h) / M.

    The product bounds the error up to a constant factor. Because M is a
    power of two, a fixed split would waste up to half of the query share;
    scanning t and giving the remainder to the interpolant avoids that.
    """
    k, alpha, d = spec.k, spec.alpha, spec.d
    best = None
    t = 1
    while shots * (2 * (1 << t) - 1) <= n_budget - (k + 1) ** d:
        m = cells_per_axis(n_budget - shots * (2 * (1 << t) - 1), k + 1, d)
        score = residual_bound(k, alpha, d, 1.0 / m) / (1 << t)
        if best is None or score < best[0]:
            best = (score, m, t)
        t += 1
    if best is None:
        raise ValueError(f"budget {n_budget} too small for one cell and one Grover step")
    return best[1], best[2]


def plan_quantum_integration(fh: FunctionHandle, spec: ClassSpec, n_budget: int,
                             refine: int = 4, b: int = 24, shots: int = 1
                             ) -> QuantumIntegrationPlan:
    if spec.kind is not ClassKind.HOELDER:
        raise ValueError("quantum_integrate_hoelder needs a Hoelder class")
    k, alpha, d = spec.k, spec.alpha, spec.d
    if n_budget < 2 * (k + 1) ** d + 16:
        raise ValueError(f"budget {n_budget} too small, need >= {2 * (k + 1) ** d + 16}")
    m, _ = split_budget(spec, n_budget, shots)
    interp = PiecewiseInterpolant(fh, k, d, m)
    n_queries = n_budget - interp.evals_used
    bound = residual_bound(k, alpha, d, interp.cell_width)

    pts = refined_points(interp.m, d, refine)
    pi_vals = interp(pts)
    top = (1 << b) - 1
    beta = nearest_level_beta(uniform_levels(b, -1.0, 1.0), -1.0, 1.0)

    def g(i, v):
        y = -1.0 + 2.0 * np.asarray(v) / top
        i = np.asarray(i)
        pv = pi_vals[np.minimum(i, pts.shape[0] - 1)]
        return np.clip(((y - pv) / bound + 1.0) / 2.0, 0.0, 1.0)

    t, shots = plan_queries(n_queries, shots)
    est = AmplitudeEstimator(pts.shape[0], QaeConfig(t=t, b=b, shots=shots), beta, g,
                             tau=lambda i: pts[i], g_uses_index=True)
    # queries read f itself, not through the counting handle
    raw = fh.evaluator
    return QuantumIntegrationPlan(interp.integral(), bound, est,
                                  lambda x: raw(np.atleast_2d(x)), interp.evals_used)


def quantum_integrate_hoelder(fh: FunctionHandle, spec: ClassSpec, n_budget: int,
                              rng: RngStream, refine: int = 4, b: int = 24, shots: int = 1,
                              backend: str = "auto",
                              counter: qc.QueryCounter | None = None) -> Estimate:
    """Integral of the piecewise interpolant plus a quantum mean of the residual.

    split_budget divides the budget between the interpolant and the
    queries. The residual is sampled at the sub-cell centres of a grid
    `refine` times finer, divided by residual_bound, and its mean is
    estimated from the remaining queries. The query writes f quantised to b bits on [-1, 1];
    the ancilla rotation subtracts the (classically known) interpolant.
    """
    plan = plan_quantum_integration(fh, spec, n_budget, refine, b, shots)
    a_hat = plan.estimator.run(plan.oracle, rng, backend, counter)
    return Estimate(plan.value(a_hat), plan.evals_used, "quantum")
