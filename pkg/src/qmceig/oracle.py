"""Brute-force references kept deliberately separate from the engine:
tensor Gauss-Legendre for small double integrals, exhaustive Lah checks and
sparse-grid node enumeration."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .combinatorics import chi_recursion, multivariate_lah

NODE_GUARD = 10 ** 8


@dataclass(frozen=True)
class DenseQuadratureSpec:
    s: int
    k: int
    points_per_dim: int = 16
    theta_box: tuple = ()
    y_box: tuple = ()

    def __post_init__(self):
        if not (1 <= self.s <= 2 and 1 <= self.k <= 2):
            raise ValueError("dense oracle handles s, k <= 2 only")
        if not self.theta_box:
            object.__setattr__(self, "theta_box", ((-0.5, 0.5),) * self.s)
        if not self.y_box:
            object.__setattr__(self, "y_box", ((-1.0, 1.0),) * self.k)


def _tensor_gauss(box, p):
    x, w = np.polynomial.legendre.leggauss(p)
    pts, wts = [], []
    for lo, hi in box:
        pts.append(lo + (hi - lo) * (x + 1) / 2)
        wts.append(w * (hi - lo) / 2)
    grid = np.stack([g.ravel() for g in np.meshgrid(*pts, indexing="ij")], axis=1)
    weight = np.prod([g.ravel() for g in np.meshgrid(*wts, indexing="ij")], axis=0)
    return grid, weight


def _dense_once(spec, f, p, scale):
    if p ** (spec.s + spec.k) > NODE_GUARD:
        raise ValueError("dense oracle node guard exceeded")
    th, wth = _tensor_gauss(spec.theta_box, p)
    y, wy = _tensor_gauss(spec.y_box, p)
    vol = float(np.prod([hi - lo for lo, hi in spec.theta_box]))
    total = 0.0
    for yi, wi in zip(y, wy):
        vals = np.broadcast_to(np.asarray(f(th, yi[None, :]), dtype=np.float64), (len(th),))
        inner = scale * float(vals @ wth) / vol
        total += wi * (inner * math.log(inner) if inner > 0 else 0.0)
    return total


def dense_double_integral(spec: DenseQuadratureSpec, f, scale: float = 1.0, tol: float = 1e-8,
                          max_refinements: int = 3) -> float:
    """int_y g(scale * mean_theta f(theta, y)) dy by tensor Gauss-Legendre,
    doubling the order until two successive values agree to ``tol``.

    f is called as f(theta (n, s), y (1, k)) and must broadcast to (n,).
    """
    p = spec.points_per_dim
    prev = _dense_once(spec, f, p, scale)
    for _ in range(max_refinements):
        p *= 2
        cur = _dense_once(spec, f, p, scale)
        if abs(cur - prev) < tol:
            return cur
        prev = cur
    raise RuntimeError("dense oracle did not converge")


@dataclass
class LahReport:
    checked: int = 0
    mismatches: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.mismatches


def _multi_indices(dim, total):
    for c in itertools.combinations(range(total + dim - 1), dim - 1):
        bars = (-1,) + c + (total + dim - 1,)
        yield tuple(bars[i + 1] - bars[i] - 1 for i in range(dim))


def verify_lah_sharpness(max_order: int, k_max: int, max_dim: int = 3) -> LahReport:
    """Compare the recursion (beta=1, b=1) with the closed form for every
    1 <= |lam| <= |nu| <= max_order, dim(nu) <= max_dim, dim(lam) <= k_max.
    Pairs with |lam| > |nu| must give a zero recursion value."""
    if max_order > 7:
        raise ValueError("max_order <= 7")
    rep = LahReport()
    for dim in range(1, max_dim + 1):
        for a in range(1, max_order + 1):
            for nu in _multi_indices(dim, a):
                for k in range(1, k_max + 1):
                    for c in range(1, max_order + 1):
                        for lam in _multi_indices(k, c):
                            chi = chi_recursion(nu, lam)
                            want = multivariate_lah(nu, lam) if c <= a else Fraction(0)
                            rep.checked += 1
                            if chi != want:
                                rep.mismatches.append((nu, lam, chi, want))
    return rep


def sparse_node_count(k: int, level: int) -> int:
    """Distinct nodes of the Smolyak trapezoidal rule, by set union over the
    index band max(0, level-k+1) <= |alpha| <= level."""
    if k > 4 or level > 12:
        raise ValueError("k <= 4 and level <= 12")

    def univariate(m):
        if m == 0:
            return [Fraction(1, 2)]
        return [Fraction(j, 2 ** m) for j in range(2 ** m + 1)]

    nodes = set()
    for alpha in itertools.product(range(level + 1), repeat=k):
        if max(0, level - k + 1) <= sum(alpha) <= level:
            nodes.update(itertools.product(*(univariate(m) for m in alpha)))
    return len(nodes)


def smolyak_coefficient_sum(k: int, level: int) -> int:
    """sum over the band of (-1)^(level-|alpha|) C(k-1, level-|alpha|); equals 1."""
    total = 0
    for alpha in itertools.product(range(level + 1), repeat=k):
        a = sum(alpha)
        if max(0, level - k + 1) <= a <= level:
            total += (-1) ** (level - a) * math.comb(k - 1, level - a)
    return total
