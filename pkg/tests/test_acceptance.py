"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

    python3 -m pytest tests/test_acceptance.py -s      # lines shown live
    python3 tests/test_acceptance.py                    # standalone summary
"""

import io
import math
import sys
import time
import warnings
from contextlib import redirect_stderr, redirect_stdout

import numpy as np
import pytest

from qmceig.cli import main as cli_main
from qmceig.combinatorics import celine_identity_check, gosper_identity_check
from qmceig.cubature import CallableIntegrand, estimate, make_config, stp_estimate, stp_estimate_periodic, \
    stp_estimate_triangle
from qmceig.design import convergence_study, select_optimal_design, selection_stability
from qmceig.fem import UNIVERSE
from qmceig.lattice import GeneratingVector
from qmceig.likelihood import NoiseModel, choose_truncation, tail_bound_erf
from qmceig.oracle import DenseQuadratureSpec, dense_double_integral, verify_lah_sharpness
from qmceig.problems import TOY_DESIGN, fem_order_study, pde_problem, toy_problem

DESK = dict(s=10, q=4, levels=list(range(0, 6)), R=8, seed=7)
PERIODIC = dict(s=10, q=4, seed=7, index_shift=2, design_level=5,
                sweeps={"ftp": (list(range(0, 10)), 11), "stp": (list(range(0, 12)), 13)})
BANDS_DESK = {"ftp": (-0.75, -0.30), "stp": (-1.35, -0.70)}
BANDS_PERIODIC = {"ftp": (-1.4, -0.7), "stp": (-2.6, -1.4)}


def report(number, ok, detail):
    print(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}", flush=True)
    assert ok, detail


def test_criterion_1_combinatorial_identities():
    t0 = time.perf_counter()
    celine = [v for v in range(1, 31) if not celine_identity_check(v)]
    gosper = [(v, l) for v in range(1, 26) for l in range(2, v + 2) if not gosper_identity_check(v, l)]
    lah = verify_lah_sharpness(6, 3, max_dim=3)
    dt = time.perf_counter() - t0
    ok = not celine and not gosper and lah.ok
    report(1, ok, f"celine failures={len(celine)}, gosper failures={len(gosper)}, "
                  f"lah mismatches={len(lah.mismatches)}/{lah.checked}, {dt:.2f} s")


@pytest.mark.parametrize("s", [1, 2])
def test_criterion_2_oracle_equivalence(s):
    toy = toy_problem(s=s)
    a = np.array([1.0 / (j + 1) for j in range(s)])
    spec = DenseQuadratureSpec(s, 1, 32, y_box=((-toy.box.K, toy.box.K),))
    ref = dense_double_integral(spec, lambda th, y: np.exp(-0.5 * (y[:, 0] - th @ a) ** 2),
                                scale=math.exp(toy.log_c))
    errs = {}
    for method in ("ftp", "stp"):
        est = estimate(toy.config(method, 8, R=512, seed=1), toy.integrand(TOY_DESIGN)).mean
        errs[method] = est - ref
    ok = all(abs(e) <= 1e-4 for e in errs.values())
    report(2, ok, f"s={s} dense={ref:.10f} ftp err={errs['ftp']:.2e} stp err={errs['stp']:.2e} (tol 1e-4)")


def test_criterion_3_fem_order():
    hs, errs, slope = fem_order_study((3, 4, 5, 6))
    report(3, 1.8 <= slope <= 2.2, f"L2 slope {slope:.4f} over h=2^-3..2^-6 (band [1.8, 2.2])")


def _sweep(problem, method, levels, R, seed, mode, reference_level=None, outer_family="lattice",
           index_shift=2, design_level=None):
    top = max(levels + ([reference_level] if reference_level is not None else []))
    make = lambda L: problem.config(method, L, R=R, seed=seed, outer_family=outer_family,
                                    index_shift=index_shift, top_level=top)
    pick = design_level if design_level is not None else max(levels)
    design, _ = select_optimal_design(UNIVERSE, 3, problem, make(pick))
    rec = convergence_study(problem, design, make, levels, mode=mode, reference_level=reference_level)
    return design, rec


@pytest.mark.parametrize("method", ["ftp", "stp"])
def test_criterion_4_desk_rates_affine(method):
    t0 = time.perf_counter()
    problem = pde_problem("affine", s=DESK["s"], q=DESK["q"])
    design, rec = _sweep(problem, method, DESK["levels"], DESK["R"], DESK["seed"], "rms")
    dt = time.perf_counter() - t0
    lo, hi = BANDS_DESK[method]
    ok = rec.slope_defined and lo <= rec.fitted_slope <= hi and dt <= 600
    errs = " ".join(f"{e:.2e}" for e in rec.errors)
    report(4, ok, f"{method} slope {rec.fitted_slope:.3f} (band [{lo}, {hi}]), last {rec.window} levels, "
                  f"design {design.label()}, rms errors {errs}, {dt:.1f} s")


@pytest.mark.parametrize("method", ["ftp", "stp"])
def test_criterion_5_desk_rates_periodic(method):
    t0 = time.perf_counter()
    problem = pde_problem("periodic", s=PERIODIC["s"], q=PERIODIC["q"])
    levels, ref = PERIODIC["sweeps"][method]
    design, rec = _sweep(problem, method, levels, 1, PERIODIC["seed"], "abs", reference_level=ref,
                         outer_family="smolyak", index_shift=PERIODIC["index_shift"],
                         design_level=PERIODIC["design_level"])
    dt = time.perf_counter() - t0
    lo, hi = BANDS_PERIODIC[method]
    ok = rec.slope_defined and lo <= rec.fitted_slope <= hi and dt <= 1200
    report(5, ok, f"{method} slope {rec.fitted_slope:.3f} (band [{lo}, {hi}]), levels 0..{max(levels)}, "
                  f"reference level {ref}, design {design.label()}, {dt:.1f} s")


def test_criterion_6_exactness_invariants():
    vec = GeneratingVector((1, 182667, 469891, 498753))
    worst = 0.0
    c, K, k, s = 3.3, 0.5, 3, 4
    f = CallableIntegrand(lambda th, y: np.full(np.broadcast_shapes(th.shape[:-1], y.shape[:-1]), c), s, k)
    want = (2 * K) ** k * c * math.log(c)
    from qmceig.likelihood import TruncationBox
    box = TruncationBox(K, k)
    for L in range(0, 7):
        for method in ("ftp", "stp"):
            cfg = make_config(method, L, s, box, vec, vec, R=2, seed=3)
            worst = max(worst, max(abs(v - want) / want for v in estimate(cfg, f).per_shift))
        cfg = make_config("stp", L, s, box, vec, None, R=1, outer_family="smolyak")
        worst = max(worst, abs(stp_estimate_periodic(cfg, f).mean - want) / want)
    toy = toy_problem(s=2)
    g = toy.integrand(TOY_DESIGN)
    tele = 0.0
    for L in range(0, 5):
        cfg = toy.config("stp", L, R=2, seed=5)
        a, b = stp_estimate(cfg, g).per_shift, stp_estimate_triangle(cfg, g).per_shift
        tele = max(tele, max(abs(x - y) / max(abs(y), 1e-300) for x, y in zip(a, b)))
    report(6, worst <= 1e-12 and tele <= 1e-12,
           f"constant-integrand max rel error {worst:.1e}, STP path difference max rel {tele:.1e} (tol 1e-12)")


def _cli(argv):
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = cli_main(argv)
    return code, out.getvalue()


def _body(text):
    return "\n".join(line for line in text.splitlines() if not line.startswith("#"))


CLI_RUNS = [
    ["cbc", "--n", "256", "--dim", "6"],
    ["weights", "--dim", "4"],
    ["solve-pde", "--problem", "paper_i", "--q", "5"],
    ["eig", "--problem", "paper_i", "--s", "6", "--q", "3", "--levels", "0..3", "--R", "4", "--seed", "7",
     "--design", "0.25,0.5;0.5,0.5;0.75,0.5"],
    ["design-search", "--problem", "paper_i", "--s", "4", "--q", "3", "--levels", "0..2", "--R", "2"],
    ["convergence", "--problem", "paper_i", "--method", "stp", "--levels", "0..6", "--R", "16", "--seed", "7",
     "--s", "6", "--q", "3", "--design", "0.25,0.5;0.5,0.5;0.75,0.5"],
    ["convergence", "--problem", "paper_ii", "--method", "ftp", "--levels", "0..3", "--R", "1",
     "--outer-family", "smolyak", "--s", "4", "--q", "3", "--design", "0.25,0.5;0.5,0.5;0.75,0.5"],
    ["oracle", "--quick"],
]


def test_criterion_7_determinism():
    bad = []
    for argv in CLI_RUNS:
        c1, o1 = _cli(argv)
        c2, o2 = _cli(argv)
        if c1 != 0 or c2 != 0 or _body(o1) != _body(o2) or not _body(o1):
            bad.append(argv[0])
    report(7, not bad, f"{len(CLI_RUNS)} subcommand runs repeated, mismatches: {bad or 'none'}")


def test_criterion_8_truncation():
    cases = failures = 0
    for eps in (1e-2, 1e-4, 1e-8, 1e-12):
        for mu in (1.0, 0.1, 0.01, 0.001):
            for k, G in ((1, [0.0]), (1, [0.4]), (3, [0.38, 0.41, 0.4]), (3, [0.0, 1.0, -2.0])):
                noise = NoiseModel.isotropic(k, mu)
                K, bound = choose_truncation(noise, G, eps)
                check = tail_bound_erf(noise, G, K)
                cases += 1
                failures += not (bound <= eps and check <= eps)
    report(8, failures == 0, f"{cases} (eps, G, mu) cases, {failures} with certified bound above eps")


def test_criterion_9_design_search():
    problem = pde_problem("affine", s=DESK["s"], q=DESK["q"])
    top = max(DESK["levels"])
    tables = {}
    t0 = time.perf_counter()
    for L in (top - 1, top):
        cfg = problem.config("ftp", L, R=DESK["R"], seed=DESK["seed"], top_level=top)
        _, tables[L] = select_optimal_design(UNIVERSE, 3, problem, cfg)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        stable, best, below, gap = selection_stability(tables, UNIVERSE)
    dt = time.perf_counter() - t0
    note = "stable" if stable else f"WARNING unstable: level {top - 1} picked {below.label()}, EIG gap {gap:.3e}"
    ok = all(len(t) == 84 for t in tables.values())
    report(9, ok, f"84 designs at levels {top - 1},{top}; selected {best.label()}; {note}; {dt:.1f} s"
                  + (f" ({len(caught)} warning)" if caught else ""))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s", "-p", "no:cacheprovider"]))
