"""Executable semantics of the quantum query model.

Basis index convention: qubit 0 is the most significant bit, so
l = sum_j i_j 2^(m-1-j). A query acts on H_{m'} (x) H_{m''} (x) H_rest,
i.e. the index register occupies qubits 0..m'-1 and the value register the
next m'' qubits.

Unitaries are structured gates applied to the reshaped [2]*m tensor; a
DenseUnitary on the full space is kept as the reference path for tests.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .classical import RngStream

QUBIT_CAP = 22
NORM_TOL = 1e-10


class QueryCounter:
    def __init__(self):
        self.count = 0


@dataclass
class QState:
    m: int
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if self.amplitudes.size != 1 << self.m:
            raise ValueError(f"need 2^{self.m} amplitudes, got {self.amplitudes.size}")

    @classmethod
    def basis(cls, m: int, index: int) -> "QState":
        if m > QUBIT_CAP:
            raise ValueError(f"{m} qubits exceed the simulation cap {QUBIT_CAP}")
        amps = np.zeros(1 << m, dtype=complex)
        amps[index] = 1.0
        return cls(m, amps)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


# --- unitaries -------------------------------------------------------------

def _local_view(psi: np.ndarray, m: int, qubits: Sequence[int], controls: Sequence[int]):
    """Sub-tensor with controls fixed at 1 and target axes moved last.

    Returns (tensor, index, sub, perm) where sub has shape (..., 2^k).
    """
    t = psi.reshape((2,) * m)
    idx = tuple(1 if q in controls else slice(None) for q in range(m))
    sub = t[idx]
    free = [q for q in range(m) if q not in controls]
    axes = [free.index(q) for q in qubits]
    rest = [a for a in range(len(free)) if a not in axes]
    perm = rest + axes
    sub = np.transpose(sub, perm)
    shape = sub.shape
    return t, idx, sub.reshape(shape[: len(rest)] + (1 << len(qubits),)), (perm, shape)


def _write_back(t, idx, new_sub, layout):
    perm, shape = layout
    new_sub = new_sub.reshape(shape)
    inv = np.argsort(perm)
    t[idx] = np.transpose(new_sub, inv)


class UnitaryOp:
    def apply(self, psi: np.ndarray, m: int) -> np.ndarray:
        raise NotImplementedError

    def adjoint(self) -> "UnitaryOp":
        raise NotImplementedError


class _LocalOp(UnitaryOp):
    def __init__(self, qubits: Sequence[int], controls: Sequence[int] = ()):
        self.qubits = tuple(qubits)
        self.controls = tuple(controls)
        if set(self.qubits) & set(self.controls):
            raise ValueError("a qubit cannot be both target and control")

    def apply(self, psi, m):
        psi = psi.copy()
        t, idx, sub, layout = _local_view(psi, m, self.qubits, self.controls)
        _write_back(t, idx, self._act(sub), layout)
        return psi

    def _act(self, sub: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Gate(_LocalOp):
    """Dense k-qubit unitary on `qubits` (first listed = most significant)."""

    def __init__(self, matrix, qubits, controls=()):
        super().__init__(qubits, controls)
        self.matrix = np.asarray(matrix, dtype=complex)
        if self.matrix.shape != (1 << len(self.qubits),) * 2:
            raise ValueError("matrix size does not match the number of target qubits")
        check_unitary(self.matrix)

    def _act(self, sub):
        return sub @ self.matrix.T

    def adjoint(self):
        return Gate(self.matrix.conj().T, self.qubits, self.controls)


class DiagonalGate(_LocalOp):
    def __init__(self, diag, qubits, controls=()):
        super().__init__(qubits, controls)
        self.diag = np.asarray(diag, dtype=complex)
        if not np.allclose(np.abs(self.diag), 1.0, atol=1e-12):
            raise ValueError("diagonal entries must have modulus 1")

    def _act(self, sub):
        return sub * self.diag

    def adjoint(self):
        return DiagonalGate(self.diag.conj(), self.qubits, self.controls)


class PermutationGate(_LocalOp):
    """Basis permutation |j> -> |perm[j]> on the target qubits."""

    def __init__(self, perm, qubits, controls=()):
        super().__init__(qubits, controls)
        self.perm = np.asarray(perm, dtype=np.int64)
        if sorted(self.perm.tolist()) != list(range(1 << len(self.qubits))):
            raise ValueError("not a permutation of the target basis")

    def _act(self, sub):
        out = np.empty_like(sub)
        out[..., self.perm] = sub
        return out

    def adjoint(self):
        return PermutationGate(np.argsort(self.perm), self.qubits, self.controls)


class MultiplexedRY(_LocalOp):
    """For each basis value s of the selector qubits, RY(angles[s]) on the target.

    RY(t) = [[cos t/2, -sin t/2], [sin t/2, cos t/2]].
    """

    def __init__(self, angles, selectors, target, controls=()):
        super().__init__(tuple(selectors) + (target,), controls)
        self.angles = np.asarray(angles, dtype=float)
        if self.angles.size != 1 << len(selectors):
            raise ValueError("need one angle per selector basis state")
        self.selectors, self.target = tuple(selectors), target

    def _act(self, sub):
        shape = sub.shape
        x = sub.reshape(shape[:-1] + (self.angles.size, 2))
        c, s = np.cos(self.angles / 2), np.sin(self.angles / 2)
        y0 = c * x[..., 0] - s * x[..., 1]
        y1 = s * x[..., 0] + c * x[..., 1]
        return np.stack([y0, y1], axis=-1).reshape(shape)

    def adjoint(self):
        return MultiplexedRY(-self.angles, self.selectors, self.target, self.controls)


class DenseUnitary(UnitaryOp):
    def __init__(self, matrix):
        self.matrix = np.asarray(matrix, dtype=complex)
        check_unitary(self.matrix)

    def apply(self, psi, m):
        if self.matrix.shape[0] != psi.size:
            raise ValueError("dimension mismatch")
        return self.matrix @ psi

    def adjoint(self):
        return DenseUnitary(self.matrix.conj().T)


class Circuit(UnitaryOp):
    def __init__(self, ops: Sequence[UnitaryOp] = ()):
        self.ops = list(ops)

    def apply(self, psi, m):
        for op in self.ops:
            psi = op.apply(psi, m)
        return psi

    def adjoint(self):
        return Circuit([op.adjoint() for op in reversed(self.ops)])

    def __add__(self, other: "Circuit") -> "Circuit":
        return Circuit(self.ops + list(other.ops))


def check_unitary(u: np.ndarray, tol: float = 1e-8):
    err = np.abs(u.conj().T @ u - np.eye(u.shape[0])).max()
    if err > tol:
        raise ValueError(f"matrix is not unitary (max |U^dag U - I| = {err:.2e})")


def apply_unitary(state: QState, u: UnitaryOp) -> QState:
    out = QState(state.m, u.apply(state.amplitudes, state.m))
    if abs(out.norm() - 1.0) > NORM_TOL:
        raise ArithmeticError("norm drifted after a unitary")
    return out


HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)


def ry_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def qft_matrix(t: int) -> np.ndarray:
    M = 1 << t
    j = np.arange(M)
    return np.exp(2j * np.pi * np.outer(j, j) / M) / math.sqrt(M)


# --- queries ---------------------------------------------------------------

@dataclass
class Query:
    """Q = (m', m'', Z, tau, beta).

    tau maps each i in Z to a point of the domain D; beta maps a real value
    to {0, ..., 2^m'' - 1}.
    """

    m_prime: int
    m_dprime: int
    Z: np.ndarray
    tau: Callable
    beta: Callable
    vectorized: bool = False  # tau, f and beta accept whole arrays

    def __post_init__(self):
        self.Z = np.unique(np.asarray(self.Z, dtype=np.int64))
        if self.Z.size == 0:
            raise ValueError("Z must be nonempty")
        if self.Z[0] < 0 or self.Z[-1] >= 1 << self.m_prime:
            raise ValueError("Z must lie in {0, ..., 2^m' - 1}")

    def written_values(self, f: Callable) -> np.ndarray:
        """beta(f(tau(i))) for i in Z, validated against the value register width."""
        if self.vectorized:
            out = np.asarray(self.beta(np.asarray(f(self.tau(self.Z)), dtype=float)),
                             dtype=np.int64).reshape(-1)
        else:
            out = np.array([self.beta(f(self.tau(int(i)))) for i in self.Z], dtype=np.int64)
        if out.size and (out.min() < 0 or out.max() >= 1 << self.m_dprime):
            raise ValueError("beta produced a value outside {0, ..., 2^m'' - 1}")
        return out


def apply_query(state: QState, q: Query, f: Callable,
                counter: QueryCounter | None = None) -> QState:
    """|i>|x>|y> -> |i>|x (+) beta(f(tau(i)))>|y> for i in Z; identity otherwise."""
    if state.m < q.m_prime + q.m_dprime:
        raise ValueError("state has fewer qubits than the query registers")
    K = 1 << q.m_dprime
    shifts = q.written_values(f)
    t = state.amplitudes.reshape(1 << q.m_prime, K, -1)
    out = t.copy()
    dest = (np.arange(K)[None, :] + shifts[:, None]) % K
    out[q.Z[:, None], dest, :] = t[q.Z, :, :]
    if counter is not None:
        counter.count += 1
    return QState(state.m, out.reshape(-1))


# --- algorithms ------------------------------------------------------------

@dataclass
class QAlgorithm:
    """A_n = (m, w, Q, (U_0..U_n), phi). Nothing here depends on f."""

    m: int
    w: int
    query: Query
    unitaries: list
    phi: Callable | np.ndarray
    _phi_table: np.ndarray | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if not 0 <= self.w < 1 << self.m:
            raise ValueError("w must be a basis index")
        if self.query.m_prime + self.query.m_dprime > self.m:
            raise ValueError("query registers exceed m")
        if len(self.unitaries) < 1:
            raise ValueError("need U_0")

    @property
    def n(self) -> int:
        return len(self.unitaries) - 1

    def phi_table(self) -> np.ndarray:
        if self._phi_table is None:
            if isinstance(self.phi, np.ndarray):
                self._phi_table = np.asarray(self.phi, dtype=float)
            else:
                self._phi_table = np.array([self.phi(l) for l in range(1 << self.m)], dtype=float)
        return self._phi_table


def final_state(alg: QAlgorithm, f: Callable, counter: QueryCounter | None = None) -> QState:
    """z = U_n Q_f U_{n-1} ... U_1 Q_f U_0 w."""
    if alg.m > QUBIT_CAP:
        raise ValueError(f"{alg.m} qubits exceed the simulation cap {QUBIT_CAP}")
    state = QState.basis(alg.m, alg.w)
    for i, u in enumerate(alg.unitaries):
        if i > 0:
            state = apply_query(state, alg.query, f, counter)
        state = apply_unitary(state, u)
    return state


def measurement_probabilities(state: QState) -> np.ndarray:
    p = np.clip(state.probabilities(), 0.0, None)
    return p / math.fsum(p)


def sample_basis(probs: np.ndarray, gen: np.random.Generator, size: int | None = None):
    """Inverse-CDF sampling over the basis states."""
    cdf = np.cumsum(probs)
    cdf /= cdf[-1]
    u = gen.random(size)
    return np.minimum(np.searchsorted(cdf, u, side="right"), probs.size - 1)


def run_once(alg: QAlgorithm, f: Callable, rng: RngStream,
             counter: QueryCounter | None = None) -> float:
    z = final_state(alg, f, counter)
    ell = int(sample_basis(measurement_probabilities(z), rng.generator))
    return float(alg.phi_table()[ell])


def output_distribution(alg: QAlgorithm, f: Callable, cap: int = QUBIT_CAP) -> dict:
    """Exact law of phi(xi_f) as {output: probability}."""
    if alg.m > cap:
        raise ValueError(f"{alg.m} qubits exceed the enumeration cap {cap}")
    probs = measurement_probabilities(final_state(alg, f))
    return aggregate(alg.phi_table(), probs)


def aggregate(outputs: np.ndarray, probs: np.ndarray) -> dict:
    keys, inv = np.unique(outputs, return_inverse=True)
    mass = np.bincount(inv, weights=probs, minlength=keys.size)
    return {float(k): float(p) for k, p in zip(keys, mass) if p > 0}


def success_error_from_distribution(dist: dict, truth: float, level: float = 0.75) -> float:
    """inf{eps : P(|truth - output| <= eps) >= level} for an atomic law."""
    items = sorted(dist.items(), key=lambda kv: abs(kv[0] - truth))
    acc = 0.0
    for out, p in items:
        acc += p
        if acc >= level - 1e-12:
            return abs(out - truth)
    return abs(items[-1][0] - truth)


def success_error(alg: QAlgorithm, f: Callable, truth: float) -> float:
    return success_error_from_distribution(output_distribution(alg, f), truth)


def median_boost(alg: QAlgorithm, f: Callable, k: int, rng: RngStream,
                 counter: QueryCounter | None = None) -> float:
    if k < 1 or k % 2 == 0:
        raise ValueError("k must be a positive odd integer")
    outs = [run_once(alg, f, rng.spawn(j), counter) for j in range(k)]
    return float(np.median(outs))
