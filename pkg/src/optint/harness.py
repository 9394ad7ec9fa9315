"""Experiment driver: sweeps over budgets, worst-case errors over fooling families,
log-log rate fits, CSV/JSON records and the rate comparison table."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import quantum_core as qc
from . import quantum_estimators as qe
from .classical import (RngStream, classical_mc_mean, det_partial_mean, det_quadrature,
                        mathe_estimate, mc_control_variate_integrate, theorem1_error,
                        truncated_mc_mean, cells_per_axis)
from .oracles import aggregate_errors, worst_case_det_lp
from .problem_model import (ClassKind, ClassSpec, FoolingFamily, extreme_sequence,
                            hoelder_family, linf_mixed_family, linf_sign_family, spike_family)

CSV_HEADER = ("problem,setting,class,p,k,alpha,d,N,budget,evals_used,error,"
              "criterion,trials,seed").split(",")

NOT_IMPLEMENTED = "not implemented"
OPEN = "open"

FOOTNOTE_N = "lower bound only for N ≥ n²"
FOOTNOTE_UPPER = "only upper bound"

CRITERION = {"deterministic": "abs", "randomized": "rms", "quantum": "q75"}
ALGORITHMS = {
    ("summation", "deterministic"): {"det"},
    ("summation", "randomized"): {"mathe", "mc", "truncated-mc"},
    ("summation", "quantum"): {"quantum"},
    ("integration", "deterministic"): {"det"},
    ("integration", "randomized"): {"mc"},
    ("integration", "quantum"): {"quantum"},
}


def _fmt17(x: float) -> str:
    return format(float(x), ".17g")


def _class_fields(cls: ClassSpec) -> dict:
    return {"class": cls.label(), "p": _fmt17(cls.p), "k": str(cls.k),
            "alpha": _fmt17(cls.alpha), "d": str(cls.d)}


# --- claimed exponents -------------------------------------------------------

def claimed_exponent(problem: str, setting: str, cls: ClassSpec) -> float | str:
    """Exponent of n in the asymptotic order of the n-th minimal error.

    Returns OPEN where only bounds with a gap are known and NOT_IMPLEMENTED
    where the algorithm reaching the order is outside this package.
    """
    if setting not in CRITERION:
        raise ValueError(f"unknown setting {setting!r}")
    if problem == "summation":
        if cls.kind is not ClassKind.LP_BALL:
            raise ValueError("summation is posed on L_p balls")
        p = cls.p
        if setting == "deterministic":
            return 0.0
        if p == 1:
            raise ValueError("no rate row for randomized or quantum summation at p = 1")
        if setting == "randomized":
            return -0.5 if p >= 2 else -1.0 + 1.0 / p
        if p > 2:
            return -1.0
        return OPEN if p == 2 else NOT_IMPLEMENTED
    if problem == "integration":
        if cls.kind is ClassKind.HOELDER:
            base = -(cls.k + cls.alpha) / cls.d
            return base + {"deterministic": 0.0, "randomized": -0.5, "quantum": -1.0}[setting]
        if cls.kind is ClassKind.SOBOLEV:
            base = -cls.k / cls.d
            if setting == "deterministic":
                return base
            if cls.p < 2:
                return NOT_IMPLEMENTED
            return base + {"randomized": -0.5, "quantum": -1.0}[setting]
        raise ValueError("integration is posed on Hoelder or Sobolev classes")
    raise ValueError(f"unknown problem {problem!r}")


# --- specs and results -------------------------------------------------------

@dataclass
class ExperimentSpec:
    problem: str
    setting: str
    cls: ClassSpec
    n_grid: list
    trials: int = 1
    seed: int = 0
    N: int | None = None
    family_size: int = 4
    algorithm: str | None = None
    run_class: ClassSpec | None = None  # class whose algorithm and family are run
    tolerance: float = 0.15
    r2_min: float = 0.9

    def __post_init__(self):
        self.n_grid = [int(n) for n in self.n_grid]
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ValueError("n_grid must be strictly increasing")
        if not self.n_grid:
            raise ValueError("n_grid is empty")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.problem == "summation":
            if self.N is None or max(self.n_grid) >= self.N:
                raise ValueError("summation needs N > max(n_grid)")
        elif self.problem != "integration":
            raise ValueError(f"unknown problem {self.problem!r}")
        if self.algorithm is None:
            self.algorithm = self._default_algorithm()
        if self.algorithm not in ALGORITHMS.get((self.problem, self.setting), set()):
            raise ValueError(f"algorithm {self.algorithm!r} does not fit "
                             f"{self.problem}/{self.setting}")
        if self.run_class is None:
            self.run_class = self.cls

    def _default_algorithm(self) -> str:
        if self.setting == "deterministic":
            return "det"
        if self.setting == "quantum":
            return "quantum"
        if self.problem == "integration":
            return "mc"
        return "mathe" if self.cls.p >= 2 else "truncated-mc"

    @property
    def criterion(self) -> str:
        return CRITERION[self.setting]


@dataclass
class RateFit:
    slope: float = math.nan
    intercept: float = math.nan
    r_squared: float = math.nan
    claimed_exponent: float | str | None = None
    passed: bool = False
    points: list = field(default_factory=list)
    tolerance: float = math.nan
    status: str = "fitted"
    records: list = field(default_factory=list)
    spec: ExperimentSpec | None = None


def fit_exponent(points: Sequence[tuple[float, float]]) -> RateFit:
    """Ordinary least squares of log(error) on log(budget)."""
    if len(points) < 3:
        raise ValueError("need at least 3 points")
    n = np.array([p[0] for p in points], dtype=float)
    e = np.array([p[1] for p in points], dtype=float)
    if np.any(e <= 0) or np.any(n <= 0):
        raise ValueError("errors and budgets must be positive; report exact algorithms as exact")
    x, y = np.log(n), np.log(e)
    xc = x - x.mean()
    slope = float(xc @ (y - y.mean()) / (xc @ xc))
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    ss_res = float((resid ** 2).sum())
    # log residuals at rounding level mean an exact power law, whatever ss_tot is
    exact = float(np.abs(resid).max()) <= 1e-12 * max(1.0, float(np.abs(y).max()))
    r2 = 1.0 if exact or ss_tot == 0 else max(0.0, 1 - ss_res / ss_tot)
    return RateFit(slope, intercept, r2, points=list(points))


# --- families and runners ----------------------------------------------------

def summation_family(spec: ExperimentSpec, n: int) -> FoolingFamily:
    p = spec.run_class.p
    if spec.setting == "quantum":
        return linf_sign_family(spec.N, spec.family_size, spec.seed)
    if p < 2:
        return spike_family(spec.N, p, n)
    return linf_mixed_family(spec.N, spec.seed)


def integration_grid(spec: ExperimentSpec, n: int) -> int:
    """Cells per axis of the algorithm at budget n; families are built on it."""
    cls = spec.run_class
    if spec.setting == "quantum":
        return qe.split_budget(cls, n)[0]
    if spec.setting == "randomized":
        return cells_per_axis(n // 2, cls.k + 1, cls.d)
    return cells_per_axis(n, cls.k + 1, cls.d)


# Quantum cells use the exact output law of each member (state vector or the
# equivalent two-dimensional formula), so the 3/4-quantile error is computed
# without sampling noise. Single shots already succeed with probability 8/pi^2.
QUANTUM_SHOTS = 1
QUANTUM_SUM_BITS = 1


def quantum_output_law(spec: ExperimentSpec, n: int, f) -> tuple[dict, int]:
    """(law of the final estimate, queries plus evaluations) for one member."""
    if spec.problem == "summation":
        est, oracle = qe.bounded_mean_estimator(f, n, QUANTUM_SUM_BITS, QUANTUM_SHOTS)
        law = qe.median_law(est.distribution(oracle, "auto"), est.cfg.shots)
        return _merge({2 * a - 1: pr for a, pr in law.items()}), \
            est.cfg.shots * est.cfg.queries_per_shot
    plan = qe.plan_quantum_integration(f.fresh(), spec.run_class, n, shots=QUANTUM_SHOTS)
    law = qe.median_law(plan.estimator.distribution(plan.oracle, "auto"),
                        plan.estimator.cfg.shots)
    return _merge({plan.value(a): pr for a, pr in law.items()}), plan.evals_used


def _merge(law: dict) -> dict:
    out: dict = {}
    for v, pr in law.items():
        out[v] = out.get(v, 0.0) + pr
    return out


def _summation_runner(spec: ExperimentSpec, n: int, root: RngStream):
    step = {"mathe": mathe_estimate, "mc": classical_mc_mean,
            "truncated-mc": lambda f, n_, r: truncated_mc_mean(f, n_, spec.run_class.p, r)
            }[spec.algorithm]

    def run(f, idx, trial):
        est = step(f, n, root.spawn(n, idx, trial))
        return est.value, est.evals_used
    return run


def _integration_runner(spec: ExperimentSpec, n: int, root: RngStream):
    cls = spec.run_class
    if spec.setting == "deterministic":
        def run(f, idx, trial):
            est = det_quadrature(f.fresh(), cls, n)
            return est.value, est.evals_used
        return run

    def run(f, idx, trial):
        est = mc_control_variate_integrate(f.fresh(), cls, n, root.spawn(n, idx, trial))
        return est.value, est.evals_used
    return run


def family_at(spec: ExperimentSpec, n: int) -> FoolingFamily:
    if spec.problem == "summation":
        return summation_family(spec, n)
    return hoelder_family(spec.run_class, integration_grid(spec, n), spec.family_size,
                          spec.seed)


def worst_case_at(spec: ExperimentSpec, n: int) -> tuple[float, int, list]:
    """(worst-case error, evals used, per-member errors) at budget n."""
    fam = family_at(spec, n)
    per_member, evals = [], 0
    if spec.setting == "quantum":
        for f, truth in zip(fam.members, fam.truths):
            law, used = quantum_output_law(spec, n, f)
            per_member.append(float(qc.success_error_from_distribution(law, truth)))
            evals = max(evals, used)
        return max(per_member), evals, per_member
    root = RngStream(spec.seed)
    run = (_summation_runner if spec.problem == "summation" else _integration_runner)(
        spec, n, root)
    trials = 1 if spec.setting == "deterministic" else spec.trials
    for idx, (f, truth) in enumerate(zip(fam.members, fam.truths)):
        errs = []
        for t in range(trials):
            value, used = run(f, idx, t)
            errs.append(value - truth)
            evals = max(evals, used)
        per_member.append(aggregate_errors(np.array(errs), spec.criterion))
    return max(per_member), evals, per_member


def _trials_column(spec: ExperimentSpec) -> int:
    # 0 marks an error computed from the exact output law
    return {"deterministic": 1, "randomized": spec.trials, "quantum": 0}[spec.setting]


def _record(spec: ExperimentSpec, n: int, evals: int, err: float) -> dict:
    rec = {"problem": spec.problem, "setting": spec.setting}
    rec.update(_class_fields(spec.cls))
    rec.update({"N": "" if spec.N is None else str(spec.N), "budget": str(n),
                "evals_used": str(evals), "error": _fmt17(err),
                "criterion": "exact" if _is_exact_cell(spec) else spec.criterion,
                "trials": str(_trials_column(spec)),
                "seed": str(spec.seed)})
    return rec


def _is_exact_cell(spec: ExperimentSpec) -> bool:
    return spec.problem == "summation" and spec.setting == "deterministic"


def _exact_det_summation(spec: ExperimentSpec) -> RateFit:
    """Oracle value, attained by the extreme sequence, equal to the closed form."""
    N, p = spec.N, spec.run_class.p
    ok, points, records = True, [], []
    for n in spec.n_grid:
        oracle = worst_case_det_lp(range(1, n + 1), N, p)
        f = extreme_sequence(N, p, range(n + 1, N + 1))
        attained = abs(float(np.mean(f.values)) - det_partial_mean(f, n).value)
        closed = theorem1_error(N, n, p)
        ok &= abs(oracle - closed) <= 1e-12 and abs(attained - closed) <= 1e-12
        points.append((n, oracle))
        records.append(_record(spec, n, n, oracle))
    fit = fit_exponent(points) if len(points) >= 3 and min(e for _, e in points) > 0 else RateFit()
    fit.points, fit.records, fit.spec = points, records, spec
    fit.claimed_exponent = 0.0
    fit.passed = bool(ok)
    fit.status = "exact" if ok else "fail"
    return fit


def run_experiment(spec: ExperimentSpec) -> RateFit:
    claimed = claimed_exponent(spec.problem, spec.setting, spec.cls)
    if isinstance(claimed, str):
        return RateFit(claimed_exponent=claimed, status=claimed, spec=spec)
    if _is_exact_cell(spec):
        return _exact_det_summation(spec)
    points, records = [], []
    for n in spec.n_grid:
        err, evals, _ = worst_case_at(spec, n)
        points.append((evals, err))
        records.append(_record(spec, n, evals, err))
    fit = fit_exponent(points)
    fit.claimed_exponent, fit.records, fit.spec = claimed, records, spec
    fit.tolerance = spec.tolerance
    fit.passed = bool(abs(fit.slope - claimed) <= spec.tolerance
                      and fit.r_squared >= spec.r2_min)
    fit.status = "pass" if fit.passed else "fail"
    return fit


# --- output ------------------------------------------------------------------

def to_csv(fits: Sequence[RateFit]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_HEADER, lineterminator="\n")
    w.writeheader()
    for fit in fits:
        for rec in fit.records:
            w.writerow(rec)
    return buf.getvalue()


def to_json(fits: Sequence[RateFit]) -> str:
    return json.dumps([rec for fit in fits for rec in fit.records], indent=1)


# --- the rate table ----------------------------------------------------------

TABLE_ROWS = [
    ("L_p^N, 2<=p<=inf", "summation"),
    ("L_p^N, 1<p<2", "summation"),
    ("F_d^{k,alpha}", "integration"),
    ("W_{p,d}^k, 2<=p<=inf", "integration"),
    ("W_{p,d}^k, 1<=p<2", "integration"),
]
SETTINGS = ("deterministic", "randomized", "quantum")
CLAIM_TEXT = {
    (0, "deterministic"): "1", (0, "randomized"): "n^-1/2", (0, "quantum"): "n^-1",
    (1, "deterministic"): "1", (1, "randomized"): "n^(-1+1/p)", (1, "quantum"): "n^(-2+2/p)",
    (2, "deterministic"): "n^(-(k+a)/d)", (2, "randomized"): "n^(-(k+a)/d-1/2)",
    (2, "quantum"): "n^(-(k+a)/d-1)",
    (3, "deterministic"): "n^(-k/d)", (3, "randomized"): "n^(-k/d-1/2)",
    (3, "quantum"): "n^(-k/d-1)",
    (4, "deterministic"): "n^(-k/d)", (4, "randomized"): "n^(-k/d-1+1/p)",
    (4, "quantum"): "n^(-k/d-3/2+1/p)",
}
FOOTNOTES = {(1, "quantum"): FOOTNOTE_N, (4, "quantum"): FOOTNOTE_UPPER}
CELL_NOTES = {(0, "quantum"): "p=2: open (log gap)"}


def _cell_text(fit: RateFit | None) -> str:
    if fit is None:
        return "not run"
    if fit.status in (NOT_IMPLEMENTED, OPEN):
        return fit.status
    if fit.status == "exact":
        return "exact ✓"
    mark = "✓" if fit.passed else "✗"
    return (f"{fit.claimed_exponent:+.3f} | {fit.slope:+.3f} (r2 {fit.r_squared:.3f}) {mark}")


def comparison_table(results: dict | None = None) -> str:
    """Text table: claimed order, and per cell the claimed exponent, the measured
    slope and the verdict. `results` maps (row, setting) to a RateFit."""
    results = results or {}
    lines = ["row | setting | claimed order | claimed exp | measured | note"]
    for r, (name, _) in enumerate(TABLE_ROWS):
        for s in SETTINGS:
            notes = [x for x in (FOOTNOTES.get((r, s)), CELL_NOTES.get((r, s))) if x]
            lines.append(f"{name} | {s} | {CLAIM_TEXT[(r, s)]} | "
                         f"{_cell_text(results.get((r, s)))} | {'; '.join(notes)}")
    return "\n".join(lines)


def default_suite() -> dict:
    """One ExperimentSpec per table cell, sized for a single machine."""
    inf = math.inf
    lip1 = ClassSpec.hoelder(0, 1.0, 1)     # Lipschitz functions on [0,1]: inside W^1_p for all p
    pow2 = lambda a, b: [2 ** j for j in range(a, b + 1)]
    return {
        (0, "deterministic"): ExperimentSpec("summation", "deterministic", ClassSpec.lp(inf),
                                             list(range(100, 901, 100)), N=1000),
        (0, "randomized"): ExperimentSpec("summation", "randomized", ClassSpec.lp(inf),
                                          pow2(4, 10), trials=200, N=10 ** 6, tolerance=0.1,
                                          r2_min=0.95),
        (0, "quantum"): ExperimentSpec("summation", "quantum", ClassSpec.lp(inf), pow2(4, 9),
                                       N=1024, family_size=64),
        (1, "deterministic"): ExperimentSpec("summation", "deterministic", ClassSpec.lp(1.5),
                                             list(range(100, 901, 100)), N=1000),
        (1, "randomized"): ExperimentSpec("summation", "randomized", ClassSpec.lp(1.5),
                                          pow2(4, 8), trials=200, N=10 ** 5, tolerance=0.12),
        (1, "quantum"): ExperimentSpec("summation", "quantum", ClassSpec.lp(1.5), pow2(4, 8),
                                       N=10 ** 5),
        (2, "deterministic"): ExperimentSpec("integration", "deterministic",
                                             ClassSpec.hoelder(1, 1.0, 2), pow2(5, 12),
                                             tolerance=0.2),
        (2, "randomized"): ExperimentSpec("integration", "randomized",
                                          ClassSpec.hoelder(1, 1.0, 2), pow2(5, 10),
                                          trials=100, tolerance=0.25),
        (2, "quantum"): ExperimentSpec("integration", "quantum", ClassSpec.hoelder(0, 1.0, 2),
                                       pow2(5, 10), tolerance=0.25),
        (3, "deterministic"): ExperimentSpec("integration", "deterministic",
                                             ClassSpec.sobolev(1, inf, 1), pow2(4, 10),
                                             run_class=lip1, tolerance=0.2),
        (3, "randomized"): ExperimentSpec("integration", "randomized",
                                          ClassSpec.sobolev(1, inf, 1), pow2(4, 10),
                                          trials=100, run_class=lip1, tolerance=0.25),
        (3, "quantum"): ExperimentSpec("integration", "quantum", ClassSpec.sobolev(1, inf, 1),
                                       pow2(5, 10), run_class=lip1,
                                       tolerance=0.3),
        (4, "deterministic"): ExperimentSpec("integration", "deterministic",
                                             ClassSpec.sobolev(1, 1.5, 1), pow2(4, 10),
                                             run_class=lip1, tolerance=0.2),
        (4, "randomized"): ExperimentSpec("integration", "randomized",
                                          ClassSpec.sobolev(1, 1.5, 1), pow2(4, 10),
                                          run_class=lip1),
        (4, "quantum"): ExperimentSpec("integration", "quantum", ClassSpec.sobolev(1, 1.5, 1),
                                       pow2(5, 10), run_class=lip1),
    }


def run_suite(name: str = "default", progress: Callable[[str], None] | None = None) -> dict:
    if name != "default":
        raise ValueError(f"unknown suite {name!r}")
    out = {}
    for key, spec in default_suite().items():
        if progress:
            progress(f"{TABLE_ROWS[key[0]][0]} / {key[1]}")
        out[key] = run_experiment(spec)
    return out


# --- head-to-head ------------------------------------------------------------

@dataclass
class HeadToHead:
    budget: int
    det_worst: float
    wins: list          # per member: seeds whose quantum error is below det_worst
    seeds: int
    lower_bounds: list  # Wilson lower bound at z = 3 of each member's win rate

    @property
    def passed(self) -> bool:
        return min(self.lower_bounds) >= 0.75


def wilson_lower(successes: int, trials: int, z: float = 3.0) -> float:
    p = successes / trials
    den = 1 + z * z / trials
    centre = p + z * z / (2 * trials)
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials))
    return (centre - half) / den


def head_to_head(cls: ClassSpec, n: int, seeds: int = 200, seed: int = 0,
                 family_size: int = 4) -> HeadToHead:
    """Quantum integration against the deterministic rule at equal budget n.

    Both algorithms face the union of the families built on their own grids.
    The quantum runs execute quantum_integrate_hoelder with independent
    streams; a member counts as beaten when, at three standard errors, the
    quantum error is below the deterministic worst case in at least 3/4 of
    the runs (the success level of the quantum error criterion).
    """
    qspec = ExperimentSpec("integration", "quantum", cls, [n], seed=seed,
                           family_size=family_size)
    dspec = ExperimentSpec("integration", "deterministic", cls, [n], seed=seed,
                           family_size=family_size)
    fq, fd = family_at(qspec, n), family_at(dspec, n)
    members, truths = fq.members + fd.members, fq.truths + fd.truths
    det_worst = max(abs(det_quadrature(f.fresh(), cls, n).value - t)
                    for f, t in zip(members, truths))
    root = RngStream(seed)
    wins, lows = [], []
    for idx, (f, truth) in enumerate(zip(members, truths)):
        plan = qe.plan_quantum_integration(f.fresh(), cls, n, shots=QUANTUM_SHOTS)
        w = 0
        for s in range(seeds):
            a_hat = plan.estimator.run(plan.oracle, root.spawn(n, idx, s))
            w += abs(plan.value(a_hat) - truth) < det_worst
        wins.append(w)
        lows.append(wilson_lower(w, seeds))
    return HeadToHead(n, det_worst, wins, seeds, lows)
