"""EIG assembly, design enumeration and selection, and convergence studies."""

from __future__ import annotations

import itertools
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .cubature import CubatureResult, NestedEstimatorConfig, estimate
from .fem import Design


@dataclass
class EIGEstimate:
    design: Design
    method: str
    level: int
    value: float
    i_k_estimate: float
    per_shift: list
    node_budget: tuple  # (N_gross, N_net), summed over shifts
    n_inner: int = 0
    n_outer: int = 0
    R: int = 1
    runtime_ms: float = 0.0

    @property
    def log_c(self):
        return self.value + 1.0 + self.i_k_estimate


def enumerate_designs(universe, k: int) -> list[Design]:
    """All unordered k-subsets of the universe, lexicographic in universe order."""
    universe = list(universe)
    if k > len(universe):
        raise ValueError(f"cannot choose {k} sensors out of {len(universe)}")
    if k < 1:
        raise ValueError("k must be >= 1")
    return [Design(c) for c in itertools.combinations(universe, k)]


def assemble_eig(log_c: float, i_k: float) -> float:
    """log C - 1 - I. The exact Gaussian entropy term is -k/2 rather than -1;
    the difference is the same for every design, so rankings are unaffected."""
    return log_c - 1.0 - i_k


def eig_for_design(design: Design, problem, config: NestedEstimatorConfig, estimator=None) -> EIGEstimate:
    """Estimate the double integral for one design and turn it into an EIG."""
    t0 = time.perf_counter()
    f = problem.integrand(design)
    res: CubatureResult = (estimator or estimate)(config, f, check_positive=True)
    i_k = res.mean
    return EIGEstimate(design, config.method, config.L, assemble_eig(problem.log_c, i_k), i_k,
                       list(res.per_shift), (res.N_gross, res.N_net), res.n_inner, res.n_outer, config.R,
                       1e3 * (time.perf_counter() - t0))


def _design_key(design, universe):
    return tuple(universe.index(x) for x in design.sensors)


def select_optimal_design(universe, k: int, problem, config: NestedEstimatorConfig, designs=None, estimator=None):
    """Evaluate every design at the configured level; the optimum minimises
    the double-integral estimate (maximises EIG). Ties go to the
    lexicographically first design. Returns (design, table in design order)."""
    universe = [tuple(map(float, x)) for x in universe]
    designs = enumerate_designs(universe, k) if designs is None else designs
    table = [eig_for_design(d, problem, config, estimator) for d in designs]
    best = min(range(len(table)), key=lambda i: (table[i].i_k_estimate, _design_key(designs[i], universe)))
    return designs[best], table


@dataclass
class ConvergenceRecord:
    method: str
    mode: str
    levels: list
    estimates: list
    per_shift: list
    errors: list
    budgets: list  # N_net per level
    budgets_gross: list
    n_inner: list
    n_outer: list
    reference: float
    window: int
    fitted_slope: float = math.nan
    slope_defined: bool = False
    runtimes_ms: list = field(default_factory=list)


def fit_slope(budgets, errors, window: int):
    """Least-squares slope of log(error) against log(N) over the last
    ``window`` points. Returns (slope, defined)."""
    if len(errors) < window:
        raise ValueError(f"need at least {window} levels for the fit window")
    N = np.asarray(budgets[-window:], dtype=np.float64)
    e = np.asarray(errors[-window:], dtype=np.float64)
    if np.any(e <= 0) or not np.all(np.isfinite(e)):
        return math.nan, False
    slope = np.polyfit(np.log(N), np.log(e), 1)[0]
    return float(slope), True


def default_window(method):
    return 3 if method == "ftp" else 5


def convergence_study(problem, design: Design, config_for_level, levels, mode: str = "rms",
                      reference_level: int | None = None, reference_value: float | None = None,
                      window: int | None = None, integrand=None) -> ConvergenceRecord:
    """Run the estimator over a level sweep and fit the error decay.

    ``config_for_level(L)`` returns the estimator config at level L.
    rms: per-shift deviations from the mean at the top sweep level.
    abs: |estimate - reference|, the reference coming from ``reference_value``
    or from a single run at ``reference_level``.
    """
    levels = list(levels)
    if len(levels) < 3:
        raise ValueError("a convergence study needs at least 3 levels")
    if mode not in ("rms", "abs"):
        raise ValueError("mode must be 'rms' or 'abs'")
    f = integrand if integrand is not None else problem.integrand(design)
    results, times = [], []
    for L in levels:
        t0 = time.perf_counter()
        results.append(estimate(config_for_level(L), f, check_positive=integrand is None))
        times.append(1e3 * (time.perf_counter() - t0))
    method = config_for_level(levels[0]).method
    window = window or default_window(method)
    if mode == "rms":
        ref = results[-1].mean
        errors = [math.sqrt(float(np.mean((np.asarray(r.per_shift) - ref) ** 2))) for r in results]
    else:
        if reference_value is None:
            if reference_level is None:
                raise ValueError("abs mode needs a reference level or value")
            reference_value = estimate(config_for_level(reference_level), f).mean
        ref = reference_value
        errors = [abs(r.mean - ref) for r in results]
    # differences at the rounding level of the reference count as exact
    floor = 32 * np.finfo(np.float64).eps * max(abs(ref), 1.0)
    errors = [0.0 if e <= floor else e for e in errors]
    budgets = [r.N_net for r in results]
    if any(b2 <= b1 for b1, b2 in zip(budgets, budgets[1:])):
        raise ValueError("budgets must increase strictly with the level")
    slope, ok = fit_slope(budgets, errors, window)
    return ConvergenceRecord(method, mode, levels, [r.mean for r in results], [r.per_shift for r in results],
                             errors, budgets, [r.N_gross for r in results], [r.n_inner for r in results],
                             [r.n_outer for r in results], ref, window, slope, ok, times)


def selection_stability(tables_by_level: dict, universe):
    """Compare the argmin designs at the two highest levels. Returns
    (stable, best_top, best_below, eig_gap_at_top)."""
    lv = sorted(tables_by_level)
    if len(lv) < 2:
        raise ValueError("need two levels")
    universe = [tuple(map(float, x)) for x in universe]

    def best(table):
        return min(table, key=lambda e: (e.i_k_estimate, _design_key(e.design, universe)))

    top, below = best(tables_by_level[lv[-1]]), best(tables_by_level[lv[-2]])
    stable = top.design == below.design
    gap = 0.0
    if not stable:
        other = next(e for e in tables_by_level[lv[-1]] if e.design == below.design)
        gap = top.value - other.value
        warnings.warn(f"selected design changed between levels {lv[-2]} and {lv[-1]}; EIG gap {gap:.3e}")
    return stable, top.design, below.design, gap
