"""Solution operators, function classes and fooling families.

Sequences are stored 0-based internally; index sets passed by callers are
1-based, matching the usual f(1), ..., f(N) notation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from itertools import product
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.special import gammaln


class ClassKind(str, Enum):
    LP_BALL = "LpBall"
    HOELDER = "Hoelder"
    SOBOLEV = "Sobolev"


@dataclass(frozen=True)
class ClassSpec:
    kind: ClassKind
    p: float = math.inf
    k: int = 0
    alpha: float = 1.0
    d: int = 1

    def __post_init__(self):
        if self.kind is ClassKind.LP_BALL:
            if not 1 <= self.p <= math.inf:
                raise ValueError(f"p must lie in [1, inf], got {self.p}")
        elif self.kind is ClassKind.HOELDER:
            if not 0 < self.alpha <= 1:
                raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
            if self.k < 0 or self.d < 1:
                raise ValueError("need k >= 0 and d >= 1")
        elif self.kind is ClassKind.SOBOLEV:
            if not embedding_ok(self.k, self.p, self.d):
                raise ValueError(
                    f"embedding condition k*p > d violated (k={self.k}, p={self.p}, d={self.d})"
                )

    @classmethod
    def lp(cls, p: float) -> "ClassSpec":
        return cls(ClassKind.LP_BALL, p=p)

    @classmethod
    def hoelder(cls, k: int, alpha: float, d: int) -> "ClassSpec":
        return cls(ClassKind.HOELDER, k=k, alpha=alpha, d=d)

    @classmethod
    def sobolev(cls, k: int, p: float, d: int) -> "ClassSpec":
        return cls(ClassKind.SOBOLEV, p=p, k=k, d=d)

    def label(self) -> str:
        if self.kind is ClassKind.LP_BALL:
            return f"L_{_fmt_p(self.p)}^N"
        if self.kind is ClassKind.HOELDER:
            return f"F_{self.d}^({self.k},{self.alpha:g})"
        return f"W_({_fmt_p(self.p)},{self.d})^{self.k}"


def _fmt_p(p: float) -> str:
    return "inf" if math.isinf(p) else f"{p:g}"


@dataclass
class SequenceInput:
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.values.size < 1:
            raise ValueError("a sequence needs N >= 1 entries")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("sequence values must be finite")

    @property
    def N(self) -> int:
        return self.values.size

    def __getitem__(self, i):
        return self.values[i]

    def __len__(self):
        return self.values.size


class FunctionHandle:
    """Counts point evaluations of a function on [0,1]^d.

    Calling with an array of shape (d,) evaluates one point, shape (P, d)
    evaluates P points; the tally grows by the number of points. A handle
    must not be shared between threads.
    """

    def __init__(self, evaluator: Callable[[np.ndarray], np.ndarray], d: int,
                 exact_integral: float | None = None):
        self.evaluator = evaluator
        self.d = d
        self.exact_integral = exact_integral
        self.eval_count = 0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = x.reshape(1, self.d) if single else x.reshape(-1, self.d)
        self.eval_count += pts.shape[0]
        out = np.asarray(self.evaluator(pts), dtype=float)
        return float(out[0]) if single else out

    def fresh(self) -> "FunctionHandle":
        """Same function, tally reset to zero."""
        return FunctionHandle(self.evaluator, self.d, self.exact_integral)


@dataclass
class FoolingFamily:
    members: list
    cls: ClassSpec
    description: str = ""
    truths: list = field(default_factory=list)

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)


def mean_operator(f: SequenceInput) -> float:
    return math.fsum(f.values) / f.N


def lp_seq_norm(f: SequenceInput, p: float) -> float:
    a = np.abs(f.values)
    if math.isinf(p):
        return float(a.max())
    # scale by the max first so large p does not overflow
    top = a.max()
    if top == 0:
        return 0.0
    return float(top * (math.fsum((a / top) ** p) / f.N) ** (1.0 / p))


def embedding_ok(k: int, p: float, d: int) -> bool:
    if math.isinf(p):
        return k >= 1
    return k * p > d


def extreme_sequence(N: int, p: float, unsampled: Iterable[int]) -> SequenceInput:
    idx = sorted(set(unsampled))
    if not idx:
        raise ValueError("unsampled index set must be nonempty")
    if idx[0] < 1 or idx[-1] > N:
        raise ValueError("unsampled indices must lie in 1..N")
    height = 1.0 if math.isinf(p) else (N / len(idx)) ** (1.0 / p)
    vals = np.zeros(N)
    vals[np.asarray(idx) - 1] = height
    return SequenceInput(vals)


# --- bump family -----------------------------------------------------------

def _bump_coeffs(power: int, d: int) -> np.ndarray:
    """Coefficients of (1 - |u|^2)^power as a d-variate power-series array."""
    c = np.zeros((2 * power + 1,) * d)
    for js in product(range(power + 1), repeat=d):
        s = sum(js)
        if s > power:
            continue
        coef = math.factorial(power) / (
            math.factorial(power - s) * math.prod(math.factorial(j) for j in js))
        c[tuple(2 * j for j in js)] += coef * (-1) ** s
    return c


def polyval_points(c: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Evaluate a d-variate coefficient array at points u of shape (P, d)."""
    # contract the leading axis with each coordinate in turn
    vand = [P.polyvander(u[:, j], c.shape[j] - 1) for j in range(u.shape[1])]
    out = np.einsum("pa,a...->p...", vand[0], c)
    for j in range(1, u.shape[1]):
        out = np.einsum("pa,pa...->p...", vand[j], out)
    return out


def _derivative_multi_indices(k: int, d: int):
    return [i for i in product(range(k + 1), repeat=d) if sum(i) == k]


def _poly_deriv(c: np.ndarray, multi: Sequence[int]) -> np.ndarray:
    for axis, order in enumerate(multi):
        if order:
            c = P.polyder(c, m=order, axis=axis)
    return c


def _abs_coeff_sum(c: np.ndarray) -> float:
    # |u_j| <= 1 on the unit ball, so this bounds |polynomial| there
    return float(np.abs(c).sum())


def _ball_sup(c: np.ndarray, d: int, res: int) -> float:
    """Rigorous upper bound of sup |poly| over the closed unit ball.

    Grid maximum plus (Lipschitz bound) x (covering radius of the grid).
    """
    g = np.linspace(-1.0, 1.0, res)
    pts = np.array(np.meshgrid(*([g] * d), indexing="ij")).reshape(d, -1).T
    spacing = 2.0 / (res - 1)
    reach = 1.0 + spacing * math.sqrt(d)
    pts = pts[np.einsum("pd,pd->p", pts, pts) <= reach ** 2]
    vals = np.abs(polyval_points(c, pts))
    grad_bound = math.sqrt(sum(
        _abs_coeff_sum(_poly_deriv(c, [1 if a == j else 0 for a in range(d)])) ** 2
        for j in range(d)))
    return float(vals.max()) + grad_bound * spacing * math.sqrt(d)


_SUP_RES = {1: 4001, 2: 401, 3: 61}


@lru_cache(maxsize=None)
def bump_hoelder_constant(k: int, alpha: float, d: int) -> float:
    """Hoelder constant H of the k-th derivatives of B(u) = (1-|u|^2)^(k+2).

    For every |i| = k and u, v: |D^i B(u) - D^i B(v)| <= H |u-v|^alpha,
    using |g(u)-g(v)| <= (2 sup|g|)^(1-alpha) (Lip g)^alpha.
    """
    c = _bump_coeffs(k + 2, d)
    res = _SUP_RES.get(d, 25)
    worst = 0.0
    for multi in _derivative_multi_indices(k, d):
        g = _poly_deriv(c, multi)
        sup_g = _ball_sup(g, d, res)
        grads = [_poly_deriv(g, [1 if a == j else 0 for a in range(d)]) for j in range(d)]
        # sup of the Euclidean gradient norm, bounded componentwise
        lip = math.sqrt(sum(_ball_sup(gr, d, res) ** 2 for gr in grads))
        worst = max(worst, (2 * sup_g) ** (1 - alpha) * lip ** alpha)
    return worst


def bump_integral_unit(k: int, d: int) -> float:
    """Integral of (1-|u|^2)^(k+2) over the unit ball in R^d (Beta function form)."""
    K = k + 2
    return math.exp(d / 2 * math.log(math.pi) + gammaln(K + 1) - gammaln(K + 1 + d / 2))


class BumpFunction:
    """Sum of signed bumps A * s_c * (1 - |x-c|^2/r^2)^(k+2), one per grid cell.

    Bumps have radius r = 1/(2m) and sit at the centres of the m^d cells, so
    their supports are disjoint. The amplitude A = r^(k+alpha) / (2^(1-alpha) H)
    (H from bump_hoelder_constant, capped so that |f| <= 1) makes every
    member an element of F_d^{k,alpha}: the factor 2^(1-alpha) covers pairs
    of points in different bumps.
    """

    def __init__(self, k: int, alpha: float, d: int, m: int, signs: np.ndarray,
                 scale: float = 1.0):
        self.k, self.alpha, self.d, self.m = k, alpha, d, m
        self.signs = np.asarray(signs, dtype=float).reshape((m,) * d)
        self.radius = 1.0 / (2 * m)
        H = bump_hoelder_constant(k, alpha, d)
        self.amplitude = scale * min(1.0, self.radius ** (k + alpha) / (2 ** (1 - alpha) * H))
        self.power = k + 2

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        cell = np.clip(np.floor(x * self.m).astype(np.int64), 0, self.m - 1)
        centre = (cell + 0.5) / self.m
        u = (x - centre) / self.radius
        q = np.einsum("pd,pd->p", u, u)
        base = np.where(q < 1.0, np.clip(1.0 - q, 0.0, None) ** self.power, 0.0)
        return self.amplitude * self.signs[tuple(cell.T)] * base

    @property
    def integral(self) -> float:
        one = self.amplitude * self.radius ** self.d * bump_integral_unit(self.k, self.d)
        return one * math.fsum(self.signs.ravel())

    def handle(self) -> FunctionHandle:
        return FunctionHandle(self, self.d, exact_integral=self.integral)


def bump_family(spec: ClassSpec, m_per_axis: int, n_members: int = 4,
                seed: int = 0, scales: Sequence[float] = (1.0,)) -> FoolingFamily:
    """Bump fooling family for a Hoelder class.

    Member 0 is the all-positive pattern; the remaining n_members-1 use
    pseudorandom signs. Each sign pattern is repeated for every amplitude
    factor in `scales` (all <= 1, so membership is preserved).
    """
    if spec.kind is not ClassKind.HOELDER:
        raise ValueError("bump_family needs a Hoelder class spec")
    if m_per_axis < 1:
        raise ValueError("m_per_axis must be >= 1")
    if any(not 0 < s <= 1 for s in scales):
        raise ValueError("amplitude scales must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    cells = m_per_axis ** spec.d
    patterns = [np.ones(cells)]
    for _ in range(n_members - 1):
        patterns.append(rng.choice([-1.0, 1.0], size=cells))
    members, truths = [], []
    for pat in patterns:
        for s in scales:
            b = BumpFunction(spec.k, spec.alpha, spec.d, m_per_axis, pat, scale=s)
            h = b.handle()
            members.append(h)
            truths.append(h.exact_integral)
    desc = (f"{len(members)} bump sums, radius 1/{2 * m_per_axis}, "
            f"{spec.label()}")
    return FoolingFamily(members, spec, desc, truths)


class ConeFunction:
    """Sum over the cells of scale * (R^a - min(|x - c|, R)^a), R = half the cell width.

    Continuous and alpha-Hoelder with constant `scale` (t -> t^a is
    subadditive), so it lies in the k = 0 class for scale <= 1. Unlike the
    smooth bumps it keeps a large mean relative to its oscillation on
    each cell, which is what a residual-based estimator finds hardest.
    """

    def __init__(self, alpha: float, d: int, m: int, scale: float = 1.0):
        if d not in (1, 2):
            raise ValueError("cone integrals are closed-form for d <= 2 only")
        self.alpha, self.d, self.m, self.scale = alpha, d, m, scale

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        c = (np.clip(np.floor(x * self.m), 0, self.m - 1) + 0.5) / self.m
        rho = np.sqrt(np.einsum("pd,pd->p", x - c, x - c))
        R = 0.5 / self.m
        return self.scale * (R ** self.alpha - np.minimum(rho, R) ** self.alpha)

    @property
    def integral(self) -> float:
        a, h = self.alpha, 1.0 / self.m
        R = h / 2
        if self.d == 1:
            mean_pow = R ** a / (1 + a)
        else:
            disk = 2 * math.pi * R ** (a + 2) / (a + 2)
            mean_pow = (disk + R ** a * (h * h - math.pi * R * R)) / (h * h)
        return self.scale * (R ** a - mean_pow)

    def handle(self) -> FunctionHandle:
        return FunctionHandle(self, self.d, self.integral)


def cone_family(spec: ClassSpec, m_per_axis: int,
                scales: Sequence[float] = (0.25, 0.5, 0.75, 1.0)) -> FoolingFamily:
    """Cone fooling family for the k = 0 Hoelder classes, d <= 2."""
    if spec.kind is not ClassKind.HOELDER or spec.k != 0:
        raise ValueError("cone_family needs a Hoelder class with k = 0")
    if any(not 0 < s <= 1 for s in scales):
        raise ValueError("amplitude scales must lie in (0, 1]")
    members = [ConeFunction(spec.alpha, spec.d, m_per_axis, s).handle() for s in scales]
    return FoolingFamily(members, spec, f"{len(members)} cones, {spec.label()}",
                         [h.exact_integral for h in members])


def hoelder_family(spec: ClassSpec, m_per_axis: int, n_members: int = 4,
                   seed: int = 0) -> FoolingFamily:
    """Bumps at several amplitudes, plus cones where k = 0 and d <= 2."""
    fam = bump_family(spec, m_per_axis, n_members, seed, scales=(1.0, 0.8, 0.6, 0.4))
    if spec.k == 0 and spec.d <= 2:
        cones = cone_family(spec, m_per_axis, tuple(np.linspace(0.1, 1.0, 10)))
        fam = FoolingFamily(fam.members + cones.members, spec,
                            fam.description + " + " + cones.description,
                            fam.truths + cones.truths)
    return fam


def hoelder_quotient(fh: FunctionHandle | BumpFunction, k: int, alpha: float,
                     points_per_axis: int = 10) -> float:
    """Largest Hoelder quotient of the k-th derivatives over a grid of point pairs.

    Only defined for BumpFunction members, whose derivatives are exact
    polynomials on each bump. Also folds in sup|f| (must be <= 1).
    """
    bump = fh.evaluator if isinstance(fh, FunctionHandle) else fh
    if not isinstance(bump, BumpFunction):
        raise TypeError("hoelder_quotient only supports bump functions")
    d = bump.d
    g = (np.arange(points_per_axis) + 0.5) / points_per_axis
    pts = np.array(np.meshgrid(*([g] * d), indexing="ij")).reshape(d, -1).T
    c = _bump_coeffs(bump.power, d)
    cell = np.clip(np.floor(pts * bump.m).astype(np.int64), 0, bump.m - 1)
    u = (pts - (cell + 0.5) / bump.m) / bump.radius
    inside = np.einsum("pd,pd->p", u, u) < 1.0
    sgn = bump.signs[tuple(cell.T)]
    worst = float(np.abs(bump(pts)).max())
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt(np.einsum("abd,abd->ab", diff, diff))
    np.fill_diagonal(dist, np.inf)
    for multi in _derivative_multi_indices(k, d):
        dc = _poly_deriv(c, multi)
        vals = np.where(inside, polyval_points(dc, u), 0.0)
        vals = bump.amplitude * sgn * vals * bump.radius ** (-k)
        q = np.abs(vals[:, None] - vals[None, :]) / dist ** alpha
        worst = max(worst, float(q.max()))
    return worst


# --- sequence families -----------------------------------------------------

def linf_sign_family(N: int, size: int, seed: int = 0) -> FoolingFamily:
    """+-1 sequences of the L_inf ball with spread-out means.

    Member j has round(N * q_j) entries equal to +1 (the rest -1), with q_j
    pseudorandom in [0, 1]; the constant +1 sequence is always included.
    """
    rng = np.random.default_rng(seed)
    members = [SequenceInput(np.ones(N))]
    for q in rng.random(size - 1):
        vals = -np.ones(N)
        vals[rng.permutation(N)[: int(round(q * N))]] = 1.0
        members.append(SequenceInput(vals))
    return FoolingFamily(members, ClassSpec.lp(math.inf), f"{size} +-1 sequences, N={N}",
                         [mean_operator(f) for f in members])


def linf_mixed_family(N: int, seed: int = 0) -> FoolingFamily:
    """Constant, alternating, half-zero and random-sign members of the L_inf ball."""
    rng = np.random.default_rng(seed)
    alt = np.where(np.arange(N) % 2 == 0, 1.0, -1.0)
    half = np.zeros(N)
    half[: N // 2] = 1.0
    members = [SequenceInput(v) for v in (
        np.ones(N), alt, half, rng.choice([-1.0, 1.0], size=N),
        np.where(rng.random(N) < 0.25, 1.0, -1.0))]
    return FoolingFamily(members, ClassSpec.lp(math.inf), f"5 mixed L_inf members, N={N}",
                         [mean_operator(f) for f in members])


def spike_family(N: int, p: float, n: int,
                 factors: Sequence[float] = (0.5, 0.8, 0.99, 1.25, 2.0)) -> FoolingFamily:
    """Spike sequences of the L_p ball tuned to sample size n.

    Member with factor c has K = floor(N / H^p) entries of height
    H = c * n^(1/p) (the rest 0), so (1/N) K H^p <= 1. A single tallest
    spike of height N^(1/p) is appended.
    """
    members = []
    for c in factors:
        H = c * n ** (1.0 / p)
        K = int(N // H ** p)
        if K < 1:
            continue
        vals = np.zeros(N)
        vals[:K] = H
        members.append(SequenceInput(vals))
    tall = np.zeros(N)
    tall[0] = N ** (1.0 / p)
    members.append(SequenceInput(tall))
    return FoolingFamily(members, ClassSpec.lp(p), f"spikes tuned to n={n}, N={N}",
                         [mean_operator(f) for f in members])
