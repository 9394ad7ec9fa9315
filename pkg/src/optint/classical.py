"""Deterministic and randomized summation and integration with evaluation accounting."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .problem_model import ClassKind, ClassSpec, FunctionHandle, SequenceInput

_MASK64 = (1 << 64) - 1


@dataclass
class Estimate:
    value: float
    evals_used: int
    setting: str


@dataclass
class RngStream:
    """Seeded PCG64 stream. Equal seeds give equal draw sequences."""

    seed: int
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        self.seed = int(self.seed) & _MASK64
        self.generator = np.random.Generator(np.random.PCG64(self.seed))

    def spawn(self, *keys: int) -> "RngStream":
        """Child stream whose seed is a hash of (seed, *keys)."""
        words = np.random.SeedSequence([self.seed, *[int(k) & _MASK64 for k in keys]]
                                       ).generate_state(2, np.uint32)
        return RngStream((int(words[0]) << 32) | int(words[1]))


def _check_budget(n: int, N: int):
    if n < 1:
        raise ValueError("need n >= 1")
    if n >= N:
        raise ValueError(f"need n < N (got n={n}, N={N}); the exact mean is mean_operator")


# --- summation -------------------------------------------------------------

def det_partial_mean(f: SequenceInput, n: int) -> Estimate:
    _check_budget(n, f.N)
    return Estimate(math.fsum(f.values[:n]) / f.N, n, "deterministic")


def theorem1_error(N: int, n: int, p: float) -> float:
    """Worst-case error ((N-n)/N)^(1-1/p) of the optimal deterministic rule on L_p^N."""
    _check_budget(n, N)
    if p == 1:
        return 1.0
    ratio = (N - n) / N
    if math.isinf(p):
        return ratio
    return ratio ** (1.0 - 1.0 / p)


def mathe_coefficient(n: int, N: int) -> float:
    if N < 2:
        raise ValueError("need N >= 2")
    _check_budget(n, N)
    return 1.0 / (n + math.sqrt(n * (N - n) / (N - 1)))


def eq28_error(N: int, n: int) -> float:
    """Minimal randomized error on L_p^N, 2 <= p <= inf."""
    _check_budget(n, N)
    return 1.0 / (1.0 + math.sqrt((N - 1) * n / (N - n)))


def random_subset(N: int, n: int, gen: np.random.Generator) -> np.ndarray:
    """Uniform n-subset of {0..N-1} by a partial Fisher-Yates shuffle.

    The permutation is stored sparsely (only touched positions), so the cost
    is O(n) regardless of N.
    """
    draws = gen.integers(np.arange(n), N)
    moved: dict[int, int] = {}
    out = np.empty(n, dtype=np.int64)
    for j, r in enumerate(draws.tolist()):
        out[j] = moved.get(r, r)
        moved[r] = moved.get(j, j)
    return out


def mathe_estimate(f: SequenceInput, n: int, rng: RngStream) -> Estimate:
    c = mathe_coefficient(n, f.N)
    idx = random_subset(f.N, n, rng.generator)
    return Estimate(c * math.fsum(f.values[idx]), n, "randomized")


def classical_mc_mean(f: SequenceInput, n: int, rng: RngStream) -> Estimate:
    if n < 1:
        raise ValueError("need n >= 1")
    idx = rng.generator.integers(0, f.N, n)
    return Estimate(math.fsum(f.values[idx]) / n, n, "randomized")


def truncated_mc_mean(f: SequenceInput, n: int, p: float, rng: RngStream) -> Estimate:
    """Plain MC applied to f with values above n^(1/p) in magnitude zeroed.

    The threshold is tested on the drawn values only, so exactly n values of
    f are read.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    if not 1 < p < 2:
        raise ValueError("truncated MC is defined for 1 < p < 2")
    idx = rng.generator.integers(0, f.N, n)
    vals = f.values[idx]
    vals = np.where(np.abs(vals) <= n ** (1.0 / p), vals, 0.0)
    return Estimate(math.fsum(vals) / n, n, "randomized")


# --- integration -----------------------------------------------------------

def cells_per_axis(n_budget: int, nodes: int, d: int) -> int:
    """Largest m with m^d * nodes^d <= n_budget (integer arithmetic)."""
    per_cell = nodes ** d
    m = int((n_budget / per_cell) ** (1.0 / d)) + 1
    while m > 0 and m ** d * per_cell > n_budget:
        m -= 1
    return m


def _lagrange_basis(nodes: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Values L_j(t) of the Lagrange basis on `nodes`; shape (len(t), len(nodes))."""
    t = np.asarray(t)[:, None]
    out = np.ones((t.shape[0], nodes.size))
    for j in range(nodes.size):
        for l in range(nodes.size):
            if l != j:
                out[:, j] *= (t[:, 0] - nodes[l]) / (nodes[j] - nodes[l])
    return out


class PiecewiseInterpolant:
    """Tensor Lagrange interpolant of degree k per axis on m^d congruent cells.

    Nodes are the (k+1)-point Gauss-Legendre nodes of each cell, so the
    integral of the interpolant is the composite Gauss rule, exact for
    coordinate degree <= 2k+1.
    """

    def __init__(self, fh: FunctionHandle, k: int, d: int, m: int):
        if m < 1:
            raise ValueError("need at least one cell")
        self.k, self.d, self.m = k, d, m
        self.ref_nodes, ref_w = leggauss(k + 1)  # on [-1, 1]
        self.ref_weights = ref_w / 2.0          # for the unit interval
        h = 1.0 / m
        local = (self.ref_nodes + 1.0) / 2.0
        axis_pts = (np.arange(m)[:, None] + local[None, :]) * h  # (m, k+1)
        # grid of shape (m,)*d + (k+1,)*d + (d,)
        grids = np.meshgrid(*([np.arange(m)] * d), *([np.arange(k + 1)] * d), indexing="ij")
        coords = np.stack([axis_pts[grids[a], grids[d + a]] for a in range(d)], axis=-1)
        self.evals_used = coords.size // d
        self.values = fh(coords.reshape(-1, d)).reshape(coords.shape[:-1])

    @property
    def cell_width(self) -> float:
        return 1.0 / self.m

    def integral(self) -> float:
        w = self.ref_weights
        wt = w
        for _ in range(self.d - 1):
            wt = np.multiply.outer(wt, w)
        cell_sums = np.tensordot(self.values, wt, axes=self.d)
        return math.fsum(cell_sums.ravel()) / self.m ** self.d

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        cell = np.clip(np.floor(x * self.m).astype(np.int64), 0, self.m - 1)
        t = 2.0 * (x * self.m - cell) - 1.0
        vals = self.values[tuple(cell.T)]  # (P,) + (k+1,)*d
        for a in range(self.d):
            L = _lagrange_basis(self.ref_nodes, t[:, a])
            vals = np.einsum("pj,pj...->p...", L, vals)
        return vals


def _integration_order(spec: ClassSpec) -> int:
    if spec.kind not in (ClassKind.HOELDER, ClassKind.SOBOLEV):
        raise ValueError("integration needs a Hoelder or Sobolev class")
    return spec.k


def det_quadrature(fh: FunctionHandle, spec: ClassSpec, n_budget: int) -> Estimate:
    """Composite tensor Gauss-Legendre rule, k+1 nodes per axis and cell."""
    k = _integration_order(spec)
    m = cells_per_axis(n_budget, k + 1, spec.d)
    if m < 1:
        raise ValueError(f"budget {n_budget} below one cell ({(k + 1) ** spec.d} nodes)")
    interp = PiecewiseInterpolant(fh, k, spec.d, m)
    return Estimate(interp.integral(), interp.evals_used, "deterministic")


def mc_control_variate_integrate(fh: FunctionHandle, spec: ClassSpec, n_budget: int,
                                 rng: RngStream) -> Estimate:
    """Integral of the piecewise interpolant plus plain MC on the residual.

    Half the budget builds the interpolant, the other half samples f - Pi f
    at uniform points. Unbiased given the interpolant.
    """
    k = _integration_order(spec)
    if n_budget < 2 * (k + 1) ** spec.d:
        raise ValueError(f"budget {n_budget} too small, need >= {2 * (k + 1) ** spec.d}")
    n1 = n_budget // 2
    n2 = n_budget - n1
    interp = PiecewiseInterpolant(fh, k, spec.d, cells_per_axis(n1, k + 1, spec.d))
    y = rng.generator.random((n2, spec.d))
    resid = fh(y) - interp(y)
    value = interp.integral() + math.fsum(resid) / n2
    return Estimate(value, interp.evals_used + n2, "randomized")
