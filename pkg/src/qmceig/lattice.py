"""Rank-1 lattice rules: points, random shifts, vector I/O and CBC search."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .weights import WeightSchedule

PRNG_NAME = "numpy.PCG64/SeedSequence-v1"


def is_power_of_two(n) -> bool:
    return isinstance(n, (int, np.integer)) and n >= 1 and (n & (n - 1)) == 0


def _require_power_of_two(n):
    if not is_power_of_two(n):
        raise ValueError(f"n={n} is not a power of two")


@dataclass(frozen=True)
class GeneratingVector:
    components: tuple
    modulus_hint: int | None = None

    def __post_init__(self):
        comps = tuple(int(c) for c in self.components)
        if not comps or any(c < 1 for c in comps):
            raise ValueError("generating vector components must be positive integers")
        object.__setattr__(self, "components", comps)

    def __len__(self):
        return len(self.components)

    def reduced(self, n: int, s: int) -> np.ndarray:
        """First s components reduced mod n, checked for use with n points."""
        if s > len(self.components):
            raise ValueError(f"generating vector has {len(self.components)} components, need {s}")
        z = np.array(self.components[:s], dtype=np.int64) % n
        if n > 1 and np.any(z == 0):
            raise ValueError(f"component is a multiple of n={n}")
        return z


@dataclass(frozen=True)
class ShiftStream:
    seed: int
    dimension: int
    count: int
    stream: int = 0  # separates e.g. inner and outer shifts under one seed


def make_shifts(stream: ShiftStream) -> np.ndarray:
    """``count`` uniform shift vectors in [0,1)^dimension, reproducible from the seed."""
    ss = np.random.SeedSequence(int(stream.seed), spawn_key=(int(stream.stream), int(stream.dimension)))
    rng = np.random.Generator(np.random.PCG64(ss))
    return rng.random((int(stream.count), int(stream.dimension)))


@dataclass(frozen=True)
class ShiftedLatticeRule:
    generator: GeneratingVector
    n: int
    shifts: tuple
    lower: tuple
    upper: tuple

    def __post_init__(self):
        _require_power_of_two(self.n)
        shifts = np.atleast_2d(np.asarray(self.shifts, dtype=np.float64)) if len(self.shifts) else np.zeros((0, len(self.lower)))
        if shifts.size and (np.any(shifts < 0) or np.any(shifts >= 1)):
            raise ValueError("shift components must lie in [0,1)")
        if len(self.lower) != len(self.upper) or any(lo >= hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("box needs lower < upper componentwise")
        if shifts.size and shifts.shape[1] != len(self.lower):
            raise ValueError("shift dimension does not match the box")
        object.__setattr__(self, "shifts", tuple(map(tuple, shifts)))
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))

    @property
    def dimension(self):
        return len(self.lower)

    @property
    def R(self):
        return len(self.shifts)

    @property
    def volume(self):
        return float(np.prod(np.subtract(self.upper, self.lower)))


def unit_points(z: np.ndarray, n: int, shift) -> np.ndarray:
    """frac(i z / n + shift) for i = 1..n, as an (n, s) array."""
    i = np.arange(1, n + 1, dtype=np.int64)
    x = (np.outer(i, z) % n) / n + np.asarray(shift, dtype=np.float64)
    return x - np.floor(x)


def lattice_points(rule: ShiftedLatticeRule, shift_index: int) -> np.ndarray:
    """The n shifted lattice points of ``rule`` mapped onto its box, i = 1..n."""
    if not 0 <= shift_index < rule.R:
        raise IndexError(f"shift_index {shift_index} outside 0..{rule.R - 1}")
    z = rule.generator.reduced(rule.n, rule.dimension)
    lo = np.asarray(rule.lower)
    return lo + (np.asarray(rule.upper) - lo) * unit_points(z, rule.n, rule.shifts[shift_index])


# ------------------------------------------------------------------- I/O

def load_generating_vector(path, s: int) -> GeneratingVector:
    """Read a vector stored one integer per line or as "index value" pairs."""
    rows = []
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            rows.append([int(tok) for tok in line.split()])
        except ValueError as exc:
            raise ValueError(f"non-integer token in line {raw!r}") from exc
    widths = {len(r) for r in rows}
    if len(widths) > 1 or widths - {1, 2}:
        raise ValueError("expected one or two integer columns throughout")
    if widths == {2}:
        table = {}
        for idx, val in rows:
            if idx in table:
                raise ValueError(f"duplicate index {idx}")
            table[idx] = val
        missing = [j for j in range(1, s + 1) if j not in table]
        if len(table) < s:
            raise ValueError("insufficient components")
        if missing:
            raise ValueError(f"missing index {missing[0]}")
        comps = [table[j] for j in range(1, s + 1)]
    else:
        if len(rows) < s:
            raise ValueError("insufficient components")
        comps = [r[0] for r in rows[:s]]
    return GeneratingVector(tuple(comps))


BUNDLED_VECTOR = "lattice_1024_2p20.txt"
BUNDLED_MAX_N = 2 ** 20


def bundled_generating_vector(s: int) -> GeneratingVector:
    """The shipped off-the-shelf embedded vector (s <= 1024, n <= 2^20)."""
    from importlib.resources import files
    path = files("qmceig").joinpath("data", BUNDLED_VECTOR)
    return GeneratingVector(load_generating_vector(path, s).components, modulus_hint=BUNDLED_MAX_N)


def save_generating_vector(path, vector: GeneratingVector) -> None:
    Path(path).write_text("".join(f"{c}\n" for c in vector.components))


# ------------------------------------------------------------------- CBC

def _structured_factors(weights: WeightSchedule, s: int):
    """Rescaled (Gamma'_M, beta'_{j,m}) with gamma_u unchanged up to one
    global factor exp(log_scale), chosen so nothing overflows."""
    alpha = weights.alpha
    lf = np.array([[weights.log_factor(j, m) for m in range(1, alpha + 1)] for j in range(1, s + 1)])
    finite = lf[:, 0][np.isfinite(lf[:, 0])]
    t = -float(finite.mean()) if finite.size else 0.0
    lf = lf + t * np.arange(1, alpha + 1)
    lo = np.array([-np.inf] + [weights.log_order(M) - t * M for M in range(1, alpha * s + 1)])
    log_scale = float(lo[1:].max()) if s else 0.0
    return np.exp(lo - log_scale), np.exp(lf), log_scale


def cbc_search(n: int, s: int, weights: WeightSchedule, scorer=None):
    """Greedy component-by-component search.

    Returns (z, errors) where errors[d-1] is the squared shift-averaged
    worst-case error of (z_1..z_d).
    """
    _require_power_of_two(n)
    scorer = kernels.cbc_scores if scorer is None else scorer
    alpha = weights.alpha
    order, factor, log_scale = _structured_factors(weights, s)
    table = kernels.bernoulli2_table(n)
    candidates = np.arange(1, n, 2, dtype=np.int64)
    i = np.arange(1, n + 1, dtype=np.int64)
    P = np.zeros((alpha * s + 1, n))
    P[0] = 1.0
    z, errors, e2 = [], [], 0.0
    for d in range(s):
        top = alpha * d  # highest order reachable before adding component d+1
        A = np.zeros(n)
        for m in range(1, alpha + 1):
            A += factor[d, m - 1] * (order[m:top + m + 1, None] * P[:top + 1]).sum(axis=0)
        if d == 0 or candidates.size <= 1:
            zd = 1
            score = float(table[(i * zd) % n] @ A) / n
        else:
            scores = scorer(table, A, candidates, n) / n
            best = scores.min()
            tol = 1e-12 * max(np.abs(scores).max(), 1e-300)
            pick = int(np.flatnonzero(scores <= best + tol)[0])
            zd, score = int(candidates[pick]), float(scores[pick])
        omega = table[(i * zd) % n]
        newP = P.copy()
        for m in range(1, alpha + 1):
            newP[m:top + m + 1] += factor[d, m - 1] * omega * P[:top + 1]
        P = newP
        e2 += score
        z.append(zd)
        errors.append(e2 * math.exp(log_scale) if log_scale < 700 else math.inf)
    return z, errors


def cbc_construct(n: int, s: int, weights: WeightSchedule) -> GeneratingVector:
    """Generating vector for n points in s dimensions by CBC."""
    z, _ = cbc_search(n, s, weights)
    return GeneratingVector(tuple(z), modulus_hint=n)


def worst_case_error_sq(z: Sequence[int], n: int, weights: WeightSchedule) -> float:
    """Squared shift-averaged worst-case error of a given vector (order-resolved)."""
    _require_power_of_two(n)
    s = len(z)
    alpha = weights.alpha
    order, factor, log_scale = _structured_factors(weights, s)
    table = kernels.bernoulli2_table(n)
    i = np.arange(1, n + 1, dtype=np.int64)
    P = np.zeros((alpha * s + 1, n))
    P[0] = 1.0
    for d, zd in enumerate(z):
        omega = table[(i * int(zd)) % n]
        top = alpha * d
        newP = P.copy()
        for m in range(1, alpha + 1):
            newP[m:top + m + 1] += factor[d, m - 1] * omega * P[:top + 1]
        P = newP
    return float((order[1:, None] * P[1:]).sum() / n) * math.exp(log_scale)
