"""Command line entry point: single estimates, rate sweeps, oracle checks, the rate table."""
from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import harness as hz
from . import quantum_estimators as qe
from .classical import (RngStream, classical_mc_mean, det_partial_mean, det_quadrature,
                        eq28_error, mathe_estimate, mc_control_variate_integrate,
                        theorem1_error, truncated_mc_mean)
from .oracles import aggregate_errors, mathe_atoms, worst_case_det_lp, worst_case_rms_l2
from .problem_model import (ClassSpec, SequenceInput, bump_family, extreme_sequence,
                            linf_mixed_family, mean_operator, spike_family)

EXIT_OK, EXIT_USAGE, EXIT_CHECK = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _real(text: str) -> float:
    return math.inf if text.lower() in ("inf", "infinity") else float(text)


def _grid(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def _emit(result: dict, as_json: bool):
    if as_json:
        print(json.dumps(result))
    else:
        print("  ".join(f"{k}={v}" for k, v in result.items()))


def _sum_input(p: float, N: int, n: int, seed: int) -> SequenceInput:
    """A hard member of the L_p ball for the chosen budget."""
    if math.isinf(p) or p >= 2:
        return linf_mixed_family(N, seed).members[3]
    return spike_family(N, p, n).members[0]


def cmd_sum(a) -> int:
    if not 1 <= a.n < a.N:
        raise ValueError("need 1 <= n < N")
    if a.setting == "det":
        f = extreme_sequence(a.N, a.p, range(a.n + 1, a.N + 1))
    else:
        f = _sum_input(a.p, a.N, a.n, a.seed)
    truth = mean_operator(f)
    root = RngStream(a.seed)
    errs, used = [], 0
    for t in range(1 if a.setting == "det" else a.trials):
        rng = root.spawn(t)
        if a.setting == "det":
            est = det_partial_mean(f, a.n)
        elif a.setting == "mathe":
            est = mathe_estimate(f, a.n, rng)
        elif a.setting == "mc":
            est = classical_mc_mean(f, a.n, rng)
        elif a.setting == "truncated-mc":
            est = truncated_mc_mean(f, a.n, a.p, rng)
        else:
            if np.abs(f.values).max() > 1:
                raise ValueError("the quantum estimator needs |f| <= 1 (use p = inf)")
            est = qe.quantum_mean_bounded(f, a.n, rng, b=1, shots=1)
        errs.append(est.value - truth)
        used = est.evals_used
    crit = {"det": "abs", "quantum": "q75"}.get(a.setting, "rms")
    _emit({"setting": a.setting, "p": a.p, "N": a.N, "n": a.n, "truth": truth,
           "evals_used": used, "criterion": crit, "trials": len(errs),
           "error": aggregate_errors(np.array(errs), crit)}, a.json)
    return EXIT_OK


def cmd_integrate(a) -> int:
    spec = ClassSpec.hoelder(a.k, a.alpha, a.d)
    grid = hz.integration_grid(hz.ExperimentSpec(
        "integration", {"det": "deterministic", "mc": "randomized",
                        "quantum": "quantum"}[a.setting], spec, [a.n]), a.n)
    f = bump_family(spec, grid, 1).members[0]
    truth = f.exact_integral
    root = RngStream(a.seed)
    errs, used = [], 0
    for t in range(1 if a.setting == "det" else a.trials):
        if a.setting == "det":
            est = det_quadrature(f.fresh(), spec, a.n)
        elif a.setting == "mc":
            est = mc_control_variate_integrate(f.fresh(), spec, a.n, root.spawn(t))
        else:
            est = qe.quantum_integrate_hoelder(f.fresh(), spec, a.n, root.spawn(t))
        errs.append(est.value - truth)
        used = est.evals_used
    crit = {"det": "abs", "mc": "rms", "quantum": "q75"}[a.setting]
    _emit({"setting": a.setting, "class": spec.label(), "n": a.n, "truth": truth,
           "evals_used": used, "criterion": crit, "trials": len(errs),
           "error": aggregate_errors(np.array(errs), crit)}, a.json)
    return EXIT_OK


_SETTING = {"det": "deterministic", "mathe": "randomized", "mc": "randomized",
            "truncated-mc": "randomized", "quantum": "quantum"}


def cmd_rates(a) -> int:
    setting = _SETTING[a.setting]
    if a.problem == "sum":
        cls = ClassSpec.lp(a.p)
        algorithm = "det" if a.setting == "det" else a.setting
        spec = hz.ExperimentSpec("summation", setting, cls, a.grid, trials=a.trials,
                                 seed=a.seed, N=a.N, family_size=a.family_size,
                                 algorithm=algorithm)
    else:
        if a.setting in ("mathe", "truncated-mc"):
            raise ValueError(f"{a.setting} is a summation method")
        cls = ClassSpec.hoelder(a.k, a.alpha, a.d)
        spec = hz.ExperimentSpec("integration", setting, cls, a.grid, trials=a.trials,
                                 seed=a.seed, family_size=a.family_size)
    fit = hz.run_experiment(spec)
    text = hz.to_csv([fit])
    if a.out:
        with open(a.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    print(f"# slope={fit.slope:.6g} r2={fit.r_squared:.6g} claimed={fit.claimed_exponent} "
          f"status={fit.status}", file=sys.stderr)
    return EXIT_OK


def check_det_closed_form(n_max: int) -> list[str]:
    bad = []
    for N in range(2, n_max + 1):
        for n in range(1, N):
            for p in (1.0, 1.5, 2.0, 3.0, math.inf):
                want = theorem1_error(N, n, p)
                got = worst_case_det_lp(range(1, n + 1), N, p)
                f = extreme_sequence(N, p, range(n + 1, N + 1))
                att = abs(mean_operator(f) - det_partial_mean(f, n).value)
                if abs(got - want) > 1e-12 or abs(att - want) > 1e-12:
                    bad.append(f"N={N} n={n} p={p}: oracle {got!r} attained {att!r} want {want!r}")
    return bad


def check_mathe_optimum(n_max: int) -> list[str]:
    bad = []
    for N in range(2, n_max + 1):
        for n in range(1, N):
            got = worst_case_rms_l2(mathe_atoms(N, n))
            want = eq28_error(N, n)
            if abs(got - want) > 1e-10:
                bad.append(f"N={N} n={n}: {got!r} vs {want!r}")
    return bad


def check_qae(n_max: int) -> list[str]:
    """Exact success probability of amplitude estimation on representable amplitudes."""
    bad = []
    N = min(16, max(2, n_max))
    for t in (3, 4, 5):
        M = 1 << t
        for j in range(M // 2 + 1):
            a = math.sin(math.pi * j / M) ** 2
            # half the entries on each of two levels whose midpoint is a
            levels = np.array([0.0, 2 * a]) if a <= 0.5 else np.array([2 * a - 1, 1.0])
            vals = np.where(np.arange(N) % 2 == 0, levels[1], levels[0])
            cfg = qe.QaeConfig(t=t, b=1, shots=1)
            est = qe.AmplitudeEstimator(
                N, cfg, lambda y, hi=levels[1]: (np.asarray(y) == hi).astype(np.int64),
                lambda i, v, lv=levels: lv[v])
            dist = est.distribution(lambda i: vals[i], "exact")
            tol = math.pi / M + math.pi ** 2 / M ** 2
            mass = sum(pr for v, pr in dist.items() if abs(v - a) <= tol)
            exact_mass = sum(pr for v, pr in dist.items() if abs(v - a) <= 1e-12)
            if mass < qe.SUCCESS_PROB - 1e-12 or exact_mass < 1 - 1e-9:
                bad.append(f"M={M} j={j}: mass {mass:.6f}, point mass {exact_mass:.6f}")
    return bad


def cmd_oracle(a) -> int:
    checks = {"thm1": check_det_closed_form, "eq28": check_mathe_optimum, "qae": check_qae}
    bad = checks[a.check](a.Nmax)
    for line in bad:
        print("FAIL", line)
    print(f"{a.check}: {'all checks passed' if not bad else f'{len(bad)} failures'}")
    return EXIT_OK if not bad else EXIT_CHECK


def cmd_table(a) -> int:
    results = hz.run_suite(a.suite, progress=lambda s: print("running", s, file=sys.stderr))
    table = hz.comparison_table(results)
    print(table)
    if a.out:
        with open(a.out, "w") as fh:
            fh.write(table + "\n")
        with open(a.out + ".csv", "w", newline="") as fh:
            fh.write(hz.to_csv(list(results.values())))
    failed = [k for k, r in results.items() if r.status == "fail"]
    return EXIT_OK if not failed else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="optint", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    s = sub.add_parser("sum", help="one summation estimate and its error")
    s.add_argument("--setting", required=True,
                   choices=["det", "mc", "mathe", "truncated-mc", "quantum"])
    s.add_argument("--p", type=_real, required=True)
    s.add_argument("--N", type=int, required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--trials", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_sum)

    i = sub.add_parser("integrate", help="one integration estimate and its error")
    i.add_argument("--setting", required=True, choices=["det", "mc", "quantum"])
    i.add_argument("--k", type=int, required=True)
    i.add_argument("--alpha", type=float, required=True)
    i.add_argument("--d", type=int, required=True)
    i.add_argument("--n", type=int, required=True)
    i.add_argument("--trials", type=int, default=100)
    i.add_argument("--seed", type=int, default=0)
    i.add_argument("--json", action="store_true")
    i.set_defaults(func=cmd_integrate)

    r = sub.add_parser("rates", help="worst-case error sweep written as CSV")
    r.add_argument("--problem", required=True, choices=["sum", "int"])
    r.add_argument("--setting", required=True,
                   choices=["det", "mc", "mathe", "truncated-mc", "quantum"])
    r.add_argument("--grid", type=_grid, required=True)
    r.add_argument("--family-size", type=int, default=4)
    r.add_argument("--out")
    r.add_argument("--p", type=_real, default=math.inf)
    r.add_argument("--N", type=int, default=10 ** 5)
    r.add_argument("--k", type=int, default=0)
    r.add_argument("--alpha", type=float, default=1.0)
    r.add_argument("--d", type=int, default=1)
    r.add_argument("--trials", type=int, default=100)
    r.add_argument("--seed", type=int, default=0)
    r.set_defaults(func=cmd_rates)

    o = sub.add_parser("oracle", help="exact certification checks")
    o.add_argument("--check", required=True, choices=["thm1", "eq28", "qae"])
    o.add_argument("--Nmax", type=int, default=12)
    o.set_defaults(func=cmd_oracle)

    t = sub.add_parser("table", help="run a suite and print the rate table")
    t.add_argument("--suite", default="default", choices=["default"])
    t.add_argument("--out")
    t.set_defaults(func=cmd_table)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        a = ap.parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return int(exc.code or 0)
    try:
        return a.func(a)
    except ValueError as exc:
        print(f"optint: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
