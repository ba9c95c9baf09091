"""Inner/outer cubature and their full-tensor (FTP) and sparse-tensor (STP)
combinations for the double integral

    I = int_box g( mean_theta f(theta, y) ) dy,   g(x) = x log x.

Inner averages are handled in log space: integrands report log of the
inner mean, and g is applied as exp(l) * l.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product
from math import comb
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from . import kernels
from .lattice import GeneratingVector, ShiftStream, make_shifts, unit_points
from .likelihood import NoiseModel, TruncationBox


def g_xlogx(x):
    """x log x with g(0) = 0."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise ValueError("g(x) = x log x needs x >= 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(x > 0, x * np.log(np.where(x > 0, x, 1.0)), 0.0)
    return float(out) if out.ndim == 0 else out


def g_from_log(logx):
    """g(exp(l)) = exp(l) * l, with l = -inf mapping to 0."""
    logx = np.asarray(logx, dtype=np.float64)
    if np.any(np.isnan(logx)):
        raise ValueError("inner average is not a number")
    with np.errstate(invalid="ignore"):
        return np.where(np.isneginf(logx), 0.0, np.exp(logx) * logx)


# ------------------------------------------------------------------ rules

@dataclass(frozen=True, eq=False)
class InnerRule:
    """Shifted lattice rule on [-1/2, 1/2]^s with 2^(level + offset) points."""

    generator: GeneratingVector
    s: int
    shifts: np.ndarray
    offset: int = 1

    def __post_init__(self):
        sh = np.atleast_2d(np.asarray(self.shifts, dtype=np.float64))
        if sh.shape[1] != self.s:
            raise ValueError("inner shift dimension must equal s")
        if self.offset < 0:
            raise ValueError("offset must be >= 0")
        sh.setflags(write=False)
        object.__setattr__(self, "shifts", sh)

    @property
    def R(self):
        return self.shifts.shape[0]

    def n(self, level: int) -> int:
        return 2 ** (int(level) + self.offset)

    def nodes(self, level: int, shift_index: int) -> np.ndarray:
        n = self.n(level)
        z = self.generator.reduced(n, self.s)
        return unit_points(z, n, self.shifts[shift_index]) - 0.5


@lru_cache(maxsize=64)
def smolyak_trapezoid(k: int, level: int):
    """Combination-technique trapezoidal rule on [0,1]^k.

    Returns (nodes, weights) with duplicates merged; nodes are sorted
    lexicographically and the weights sum to one.
    """
    D = 2 ** max(level, 1)
    base = D + 1
    codes, wts = [], []
    for alpha in product(range(level + 1), repeat=k):
        a = sum(alpha)
        if not max(0, level - k + 1) <= a <= level:
            continue
        coef = (-1) ** (level - a) * comb(k - 1, level - a)
        axes_c, axes_w = [], []
        for m in alpha:
            if m == 0:
                axes_c.append(np.array([D // 2])); axes_w.append(np.array([1.0]))
            else:
                c = np.arange(2 ** m + 1) * (D // 2 ** m)
                w = np.full(2 ** m + 1, 1.0 / 2 ** m)
                w[0] = w[-1] = 0.5 / 2 ** m
                axes_c.append(c); axes_w.append(w)
        grid_c = np.meshgrid(*axes_c, indexing="ij")
        grid_w = np.meshgrid(*axes_w, indexing="ij")
        code = sum(gc.ravel().astype(np.int64) * base ** j for j, gc in enumerate(grid_c))
        codes.append(code)
        wts.append(coef * np.prod([gw.ravel() for gw in grid_w], axis=0))
    codes = np.concatenate(codes)
    uniq, inv = np.unique(codes, return_inverse=True)
    weights = np.bincount(inv, weights=np.concatenate(wts))
    coords = np.stack([(uniq // base ** j) % base for j in range(k)], axis=1)
    order = np.lexsort(coords.T[::-1])
    nodes = coords[order] / D
    nodes.setflags(write=False)
    weights = weights[order]
    weights.setflags(write=False)
    return nodes, weights


@dataclass(frozen=True, eq=False)
class OuterRule:
    """Outer rule on the data box c + [-K, K]^k.

    ``lattice``: shifted lattice with 2^(level + offset) points, equal weights
    (2K)^k / n. ``smolyak``: Smolyak trapezoidal rule of index level + index_shift.
    """

    family: str
    box: TruncationBox
    generator: GeneratingVector | None = None
    shifts: np.ndarray | None = None
    offset: int = 1
    index_shift: int = 2

    def __post_init__(self):
        if self.family not in ("lattice", "smolyak"):
            raise ValueError("outer family must be 'lattice' or 'smolyak'")
        if self.family == "lattice":
            if self.generator is None or self.shifts is None:
                raise ValueError("a lattice outer rule needs a generator and shifts")
            sh = np.atleast_2d(np.asarray(self.shifts, dtype=np.float64))
            if sh.shape[1] != self.box.k:
                raise ValueError("outer shift dimension must equal k")
            sh.setflags(write=False)
            object.__setattr__(self, "shifts", sh)

    @property
    def k(self):
        return self.box.k

    @property
    def R(self):
        return self.shifts.shape[0] if self.family == "lattice" else None

    def n(self, level: int) -> int:
        if self.family == "lattice":
            return 2 ** (int(level) + self.offset)
        return len(smolyak_trapezoid(self.k, int(level) + self.index_shift)[1])

    def nodes_weights(self, level: int, shift_index: int = 0):
        lo = np.asarray(self.box.lower)
        span = 2.0 * self.box.K
        vol = self.box.volume
        if self.family == "lattice":
            n = self.n(level)
            z = self.generator.reduced(n, self.k)
            x = unit_points(z, n, self.shifts[shift_index % self.R])
            return lo + span * x, np.full(n, vol / n)
        x, w = smolyak_trapezoid(self.k, int(level) + self.index_shift)
        return lo + span * x, vol * w


def outer_quadrature(rule: OuterRule, shift_index: int, h: Callable, level: int = 0) -> float:
    """Volume-weighted outer rule applied to a vectorised h(Y) -> (m,)."""
    Y, w = rule.nodes_weights(level, shift_index)
    return float(np.sum(w * np.asarray(h(Y), dtype=np.float64)))


def inner_average(rule: InnerRule, shift_index: int, f: Callable, y, level: int = 0) -> float:
    """Plain average of f(theta, y) over the inner points (volume one)."""
    theta = rule.nodes(level, shift_index)
    return float(np.mean(np.asarray(f(theta, np.asarray(y)), dtype=np.float64)))


# ------------------------------------------------------------- integrands

class GaussianIntegrand:
    """f(theta, y) = C exp(-0.5 |y - G(theta)|^2_{Gamma^-1}).

    ``forward`` maps an (n, s) array of parameters to (n, k) observations.
    """

    def __init__(self, forward: Callable, noise: NoiseModel, s: int, log_scale: float | None = None,
                 log_means_fn=None):
        self.forward = forward
        self.noise = noise
        self.s = s
        self.k = noise.k
        self.log_c = noise.log_norm if log_scale is None else log_scale
        self.log_means_fn = log_means_fn

    def prepare(self, theta):
        G = np.asarray(self.forward(theta), dtype=np.float64).reshape(len(theta), self.k)
        return self.noise.whiten(G)

    def log_means(self, state, Y, base: int, strides):
        fn = self.log_means_fn or kernels.log_means
        return fn(self.noise.whiten(Y), state, int(base), np.asarray(strides, dtype=np.int64), self.log_c)


class CallableIntegrand:
    """Generic positive integrand f(theta, y), vectorised as
    f(theta[None, :, :], y[:, None, :]) -> (m, n)."""

    def __init__(self, f: Callable, s: int, k: int, log_input: bool = False):
        self.f, self.s, self.k, self.log_input = f, s, k, log_input

    def prepare(self, theta):
        return np.asarray(theta, dtype=np.float64)

    def log_means(self, state, Y, base: int, strides):
        theta = state[base - 1::base]
        vals = np.broadcast_to(np.asarray(self.f(theta[None, :, :], np.asarray(Y)[:, None, :]), dtype=np.float64),
                               (len(Y), len(theta)))
        if self.log_input:
            logv = vals
        else:
            if np.any(vals < 0):
                raise ValueError("integrand must be nonnegative")
            with np.errstate(divide="ignore"):
                logv = np.log(vals)
        out = np.empty((len(Y), len(strides)))
        for l, t in enumerate(strides):
            step = t // base
            cols = logv[:, step - 1::step]
            out[:, l] = logsumexp(cols, axis=1) - math.log(cols.shape[1])
        return out


# --------------------------------------------------------------- estimator

@dataclass(frozen=True, eq=False)
class NestedEstimatorConfig:
    method: str
    L: int
    inner: InnerRule
    outer: OuterRule
    sigma: float = 1.0

    def __post_init__(self):
        if self.method not in ("ftp", "stp"):
            raise ValueError("method must be 'ftp' or 'stp'")
        if self.L < 0:
            raise ValueError("L must be >= 0")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.method == "stp":
            self.stp_levels()  # validates sigma

    @property
    def R(self):
        return self.inner.R

    def stp_levels(self):
        """[(l1, inner level)] for l1 = 0..L/sigma."""
        top = self.L / self.sigma
        if abs(top - round(top)) > 1e-12:
            raise ValueError("L / sigma must be an integer")
        out = []
        for l1 in range(int(round(top)) + 1):
            m = self.sigma * self.L - self.sigma ** 2 * l1
            if abs(m - round(m)) > 1e-12:
                raise ValueError("sigma L - sigma^2 l1 must be an integer for every l1")
            out.append((l1, int(round(m))))
        return out

    def with_level(self, L: int, method: str | None = None) -> "NestedEstimatorConfig":
        return NestedEstimatorConfig(method or self.method, L, self.inner, self.outer, self.sigma)


def make_config(method, L, s, box: TruncationBox, inner_vector, outer_vector=None, R=1, seed=0,
                offset=1, outer_offset=1, outer_family="lattice", sigma=1.0, index_shift=2):
    """Build a config with reproducible shifts: inner stream 0, outer stream 1."""
    inner = InnerRule(inner_vector, s, make_shifts(ShiftStream(seed, s, R, stream=0)), offset)
    if outer_family == "lattice":
        outer = OuterRule("lattice", box, outer_vector, make_shifts(ShiftStream(seed, box.k, R, stream=1)),
                          outer_offset, index_shift)
    else:
        outer = OuterRule("smolyak", box, None, None, outer_offset, index_shift)
    return NestedEstimatorConfig(method, L, inner, outer, sigma)


@dataclass
class CubatureResult:
    per_shift: list
    n_inner: int
    n_outer: int
    N_gross: int
    N_net: int

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_shift))


def _positive(logz):
    if not np.all(np.isfinite(logz)):
        raise FloatingPointError("inner average underflowed to zero or is not finite")
    return logz


def ftp_estimate(config: NestedEstimatorConfig, f, check_positive: bool = False) -> CubatureResult:
    """Q1_L g(Q2_L f) for every shift."""
    L = config.L
    vals = []
    n_in = config.inner.n(L)
    n_out = config.outer.n(L)
    for r in range(config.R):
        state = f.prepare(config.inner.nodes(L, r))
        Y, w = config.outer.nodes_weights(L, r)
        logz = f.log_means(state, Y, 1, [1])[:, 0]
        if check_positive:
            _positive(logz)
        vals.append(float(np.sum(w * g_from_log(logz))))
    N = n_in * n_out * config.R
    return CubatureResult(vals, n_in, n_out, N, N)


def _stp_plan(config: NestedEstimatorConfig, shift_index: int):
    """Unique outer nodes across all l1 and the inner strides each one needs.

    Returns (levels, top, node array, per-l1 (ids, weights, prev ids, prev
    weights), per-node stride sets).
    """
    levels = config.stp_levels()
    top = levels[0][1]
    registry: dict[bytes, int] = {}
    rows = []
    per_level = []
    cache = {}

    def level_nodes(l1):
        if l1 not in cache:
            Y, w = config.outer.nodes_weights(l1, shift_index)
            ids = np.empty(len(Y), dtype=np.int64)
            for i, y in enumerate(Y):
                key = y.tobytes()
                j = registry.get(key)
                if j is None:
                    j = registry[key] = len(rows)
                    rows.append(y)
                ids[i] = j
            cache[l1] = (ids, w)
        return cache[l1]

    strides: dict[int, set] = {}
    for l1, m in levels:
        t = 2 ** (top - m)
        ids, w = level_nodes(l1)
        prev = level_nodes(l1 - 1) if l1 > 0 else (np.empty(0, dtype=np.int64), np.empty(0))
        for j in np.concatenate([ids, prev[0]]):
            strides.setdefault(int(j), set()).add(t)
        per_level.append((l1, m, t, ids, w, prev[0], prev[1]))
    return top, np.array(rows), per_level, strides


def stp_estimate(config: NestedEstimatorConfig, f, check_positive: bool = False) -> CubatureResult:
    """Single-sum sparse tensor estimator

        sum_{l1} Delta1_{l1} g(Q2_{sigma L - sigma^2 l1} f)

    with every (outer node, inner point) pair evaluated at most once.
    """
    if config.method != "stp":
        config = config.with_level(config.L, "stp")
    vals = []
    N_net = N_gross = 0
    n_out = 0
    for r in range(config.R):
        top, Y, per_level, strides = _stp_plan(config, r)
        n_top = config.inner.n(top)
        state = f.prepare(config.inner.nodes(top, r))
        # group nodes that need the same stride set into one kernel call
        groups: dict[tuple, list] = {}
        for j, ts in strides.items():
            groups.setdefault(tuple(sorted(ts)), []).append(j)
        logz = {}
        for ts, ids in sorted(groups.items()):
            ids = np.array(sorted(ids), dtype=np.int64)
            out = f.log_means(state, Y[ids], ts[0], list(ts))
            if check_positive:
                _positive(out)
            for col, t in enumerate(ts):
                logz[t] = logz.get(t, {})
                logz[t].update(zip(ids.tolist(), out[:, col]))
            N_net += len(ids) * (n_top // ts[0])
        total = 0.0
        for l1, m, t, ids, w, pids, pw in per_level:
            cur = np.array([logz[t][j] for j in ids.tolist()])
            term = float(np.sum(w * g_from_log(cur)))
            if len(pids):
                prv = np.array([logz[t][j] for j in pids.tolist()])
                term -= float(np.sum(pw * g_from_log(prv)))
            total += term
            N_gross += len(ids) * config.inner.n(m)
        vals.append(total)
        n_out = len(per_level[-1][3])
    return CubatureResult(vals, config.inner.n(config.stp_levels()[0][1]), n_out, N_gross, N_net)


def stp_estimate_triangle(config: NestedEstimatorConfig, f) -> CubatureResult:
    """Reference path: the full index-set sum of Delta1 Delta2 terms with each
    inner level evaluated from scratch (no strides, no node sharing)."""
    vals = []
    N = 0
    for r in range(config.R):
        total = 0.0
        for l1, mmax in config.stp_levels():
            for sign, lvl in ((1.0, l1), (-1.0, l1 - 1)):
                if lvl < 0:
                    continue
                Y, w = config.outer.nodes_weights(lvl, r)
                prev_g = np.zeros(len(Y))
                for l2 in range(mmax + 1):
                    theta = config.inner.nodes(l2, r)
                    gz = g_from_log(f.log_means(f.prepare(theta), Y, 1, [1])[:, 0])
                    total += sign * float(np.sum(w * (gz - prev_g)))
                    prev_g = gz
                    N += len(Y) * len(theta)
        vals.append(total)
    return CubatureResult(vals, config.inner.n(config.stp_levels()[0][1]),
                          config.outer.n(config.stp_levels()[-1][0]), N, N)


def stp_estimate_periodic(config: NestedEstimatorConfig, f_per, check_positive: bool = False) -> CubatureResult:
    """STP with the Smolyak trapezoidal outer rule and a single inner shift."""
    if config.outer.family != "smolyak":
        raise ValueError("the periodic estimator needs the Smolyak trapezoidal outer rule")
    if config.R != 1:
        raise ValueError("the periodic estimator uses a single inner shift")
    if getattr(f_per, "periodic", True) is False:
        raise ValueError("the periodic estimator needs a periodic integrand")
    return stp_estimate(config, f_per, check_positive)


def estimate(config: NestedEstimatorConfig, f, check_positive: bool = False) -> CubatureResult:
    if config.method == "ftp":
        return ftp_estimate(config, f, check_positive)
    return stp_estimate(config, f, check_positive)


def node_budget(config: NestedEstimatorConfig) -> tuple[int, int]:
    """(N_gross, N_net) integrand evaluations summed over all shifts."""
    if config.method == "ftp":
        N = config.inner.n(config.L) * config.outer.n(config.L) * config.R
        return N, N
    gross = net = 0
    for r in range(config.R):
        top, _, per_level, strides = _stp_plan(config, r)
        n_top = config.inner.n(top)
        net += sum(n_top // min(ts) for ts in strides.values())
        gross += sum(len(ids) * config.inner.n(m) for _, m, _, ids, *_ in per_level)
    return gross, net
