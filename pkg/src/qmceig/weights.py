"""Weight schedules gamma_u for the lattice-rule error criterion.

Every schedule is stored in the structured form

    gamma_u = sum_{m in {1..alpha}^u} Gamma_{|m|} prod_{j in u} beta_{j, m_j}

(alpha = 1 gives POD weights), which is what the order-resolved CBC search
consumes. Values are kept as logarithms because the outer-rule weights
overflow double precision at moderate orders.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import zeta

from .combinatorics import stirling2


@dataclass(frozen=True)
class RegularityParams:
    C: float = 1.0
    beta: float = 1.0
    b: tuple = ()
    p: float = 0.5
    mu_min: float = 1.0
    R_const: float = 1.0
    K: float = 0.5
    k: int = 1

    def __post_init__(self):
        object.__setattr__(self, "b", tuple(float(v) for v in self.b))
        if self.C < 1:
            raise ValueError("C must be >= 1")
        if self.beta < 1:
            raise ValueError("beta must be >= 1")
        if not 0 < self.p < 1:
            raise ValueError("p must lie in (0, 1)")
        if not 0 < self.mu_min <= 1:
            raise ValueError("mu_min must lie in (0, 1]")
        if any(v < 0 for v in self.b):
            raise ValueError("b_j must be nonnegative")
        if self.R_const < 1:
            raise ValueError("R_const must be >= 1")
        if self.K <= 0 or self.k < 1:
            raise ValueError("K must be positive and k >= 1")


def rho(lam: float) -> float:
    """2 zeta(2 lam) / (2 pi^2)^lam for lam in (1/2, 1]."""
    if not 0.5 < lam <= 1.0:
        raise ValueError("lambda must lie in (1/2, 1]")
    return 2.0 * float(zeta(2.0 * lam, 1.0)) / (2.0 * math.pi ** 2) ** lam


def _log(x):
    return math.log(x) if x > 0 else -math.inf


@dataclass(frozen=True)
class WeightSchedule:
    """Lazily evaluated weights. ``log_order(M)`` is log Gamma_M and
    ``log_factor(j, m)`` is log beta_{j,m} with 1-based j."""

    kind: str
    lam: float | None
    alpha: int
    log_order: Callable[[int], float] = field(repr=False)
    log_factor: Callable[[int, int], float] = field(repr=False)
    params: RegularityParams | None = None

    def log_gamma(self, u: Sequence[int]) -> float:
        u = tuple(u)
        if not u:
            return 0.0
        if self.alpha == 1:
            return self.log_order(len(u)) + sum(self.log_factor(j, 1) for j in u)
        # dynamic program over the total order |m|; poly[M] in log space
        poly = np.array([0.0])
        for j in u:
            fac = np.array([self.log_factor(j, m) for m in range(1, self.alpha + 1)])
            new = np.full(poly.size + self.alpha, -np.inf)
            for m in range(1, self.alpha + 1):
                new[m:m + poly.size] = np.logaddexp(new[m:m + poly.size], poly + fac[m - 1])
            poly = new
        orders = np.arange(poly.size)
        terms = np.array([self.log_order(int(M)) if M else -np.inf for M in orders]) + poly
        return float(np.logaddexp.reduce(terms[len(u):]))

    def gamma(self, u: Sequence[int]) -> float:
        return math.exp(self.log_gamma(u))

    def order_table(self, d_max: int, members=None) -> list[float]:
        """gamma for u = {1..d} (or the first d of ``members``), d = 0..d_max."""
        members = list(range(1, d_max + 1)) if members is None else list(members)
        return [self.gamma(members[:d]) for d in range(d_max + 1)]


def _lambda_theorem1(p, beta, delta):
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    if math.isclose(p, 1.0 / beta):
        raise ValueError("p = 1/beta is excluded")
    if not 0 < delta < 0.5:
        raise ValueError("delta must lie in (0, 1/2)")
    if 2.0 / 3.0 < p < 1.0 / beta:
        return p / (2.0 - p)
    if p <= min(2.0 / 3.0, 1.0 / beta):
        return 1.0 / (2.0 - 2.0 * delta)
    raise ValueError("p outside the admissible range for this beta")


def _pod_schedule(kind, params, lam, c):
    e = 2.0 / (1.0 + lam)
    sr = math.sqrt(rho(lam))
    beta = params.beta
    b = params.b

    def log_order(M):
        return e * beta * math.lgamma(M + 1)

    def log_factor(j, m):
        if j > len(b):
            raise IndexError(f"no b_j for j={j}")
        return e * _log(c * b[j - 1] / sr)

    return WeightSchedule(kind, lam, 1, log_order, log_factor, params)


def pod_weights_inner(params: RegularityParams, delta: float = 0.25) -> WeightSchedule:
    """POD weights for the inner (parameter) rule, c_j = 2^beta C b_j / sqrt(mu_min)."""
    lam = _lambda_theorem1(params.p, params.beta, delta)
    c = 2.0 ** params.beta * params.C / math.sqrt(params.mu_min)
    return _pod_schedule("POD", params, lam, c)


def pod_weights_stp_inner(params: RegularityParams, delta: float = 0.25) -> WeightSchedule:
    """POD weights tuned for the sparse-tensor estimator,
    c_j = 4 C^beta R mu_min^{-1} b_j. lambda = p/(2-p) when that lies in
    (1/2, 1]; otherwise the inner-rule case split is used."""
    lam = params.p / (2.0 - params.p)
    if not 0.5 < lam <= 1.0:
        lam = _lambda_theorem1(params.p, params.beta, delta)
    c = 4.0 * params.C ** params.beta * params.R_const / params.mu_min
    return _pod_schedule("POD", params, lam, c)


def order_dependent_weights_outer(params: RegularityParams, delta: float = 0.25) -> WeightSchedule:
    """Order-dependent weights for the outer (data) rule."""
    if delta <= 0 or delta >= 0.5:
        raise ValueError("delta must lie in (0, 1/2)")
    lam = 1.0 / (2.0 - 2.0 * delta)
    e = 2.0 / (1.0 + lam)
    k, K, C, mu = params.k, params.K, params.C, params.mu_min
    log_x = (k * math.log(1.1) + math.log(k) - 0.5 * math.log(mu)
             + (k * K * K + 2.0 * math.sqrt(k) * K * C + C * C) / (2.0 * mu)
             - math.log(math.log(2.0)) - 0.5 * math.log(rho(lam)))

    def log_order(M):
        return e * math.lgamma(M + 1)

    def log_factor(j, m):
        return e * log_x

    return WeightSchedule("OrderDependent", lam, 1, log_order, log_factor, params)


def spod_weights_periodic(params: RegularityParams) -> WeightSchedule:
    """SPOD weights for the periodic parameterisation, alpha = floor(1/p) + 1."""
    if params.p >= 1.0 / params.beta:
        raise ValueError("SPOD weights need p < 1/beta")
    alpha = int(math.floor(1.0 / params.p)) + 1
    C, beta, mu, b = params.C, params.beta, params.mu_min, params.b

    def log_order(M):
        return (M * math.log(C) + beta * (M - 1) * math.log(2.0)
                - 0.5 * M * math.log(mu) + beta * math.lgamma(M + 1))

    def log_factor(j, m):
        if j > len(b):
            raise IndexError(f"no b_j for j={j}")
        return m * _log(b[j - 1]) + math.log(stirling2(alpha, m))

    return WeightSchedule("SPOD", None, alpha, log_order, log_factor, params)


def product_weights(gammas: Sequence[float]) -> WeightSchedule:
    """gamma_u = prod_{j in u} gammas[j-1]."""
    gammas = tuple(float(g) for g in gammas)

    def log_factor(j, m):
        return _log(gammas[j - 1])

    return WeightSchedule("Product", None, 1, lambda M: 0.0, log_factor, None)
