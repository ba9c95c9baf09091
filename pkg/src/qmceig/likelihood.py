"""Gaussian likelihood, its normalising constant, and data-box truncation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import log_ndtr, logsumexp


@dataclass(frozen=True, eq=False)
class NoiseModel:
    Gamma: np.ndarray

    def __post_init__(self):
        G = np.atleast_2d(np.asarray(self.Gamma, dtype=np.float64))
        if G.shape[0] != G.shape[1] or not np.allclose(G, G.T, rtol=0, atol=1e-14 * np.abs(G).max()):
            raise ValueError("Gamma must be a symmetric square matrix")
        w, V = np.linalg.eigh(G)
        if w[0] <= 0:
            raise ValueError("Gamma must be positive definite")
        G = G.copy()
        G.setflags(write=False)
        inv_sqrt = (V / np.sqrt(w)) @ V.T
        inv_sqrt = 0.5 * (inv_sqrt + inv_sqrt.T)
        inv_sqrt.setflags(write=False)
        object.__setattr__(self, "Gamma", G)
        object.__setattr__(self, "mu_min", float(w[0]))
        object.__setattr__(self, "inv_sqrt", inv_sqrt)
        object.__setattr__(self, "log_norm", float(-0.5 * (G.shape[0] * math.log(2 * math.pi) + np.sum(np.log(w)))))

    @classmethod
    def isotropic(cls, k: int, gamma: float) -> "NoiseModel":
        return cls(gamma * np.eye(k))

    @property
    def k(self) -> int:
        return self.Gamma.shape[0]

    def whiten(self, v) -> np.ndarray:
        """Gamma^{-1/2} v for row vectors v (..., k)."""
        v = np.asarray(v, dtype=np.float64)
        if v.shape[-1] != self.k:
            raise ValueError(f"expected vectors of length {self.k}, got {v.shape[-1]}")
        return v @ self.inv_sqrt  # symmetric root


@dataclass(frozen=True)
class TruncationBox:
    K: float
    k: int
    center: tuple | None = None

    def __post_init__(self):
        if not self.K > 0:
            raise ValueError("K must be positive")
        c = (0.0,) * self.k if self.center is None else tuple(float(v) for v in np.broadcast_to(self.center, (self.k,)))
        object.__setattr__(self, "center", c)

    @property
    def lower(self):
        return tuple(c - self.K for c in self.center)

    @property
    def upper(self):
        return tuple(c + self.K for c in self.center)

    @property
    def volume(self):
        return (2.0 * self.K) ** self.k


def potential(noise: NoiseModel, y, G) -> np.ndarray | float:
    """0.5 (y-G)^T Gamma^{-1} (y-G), broadcasting over leading axes."""
    r = noise.whiten(np.asarray(y, dtype=np.float64) - np.asarray(G, dtype=np.float64))
    out = 0.5 * np.sum(r * r, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def log_likelihood(noise: NoiseModel, y, G):
    return noise.log_norm - potential(noise, y, G)


def likelihood_density(noise: NoiseModel, y, G):
    return np.exp(log_likelihood(noise, y, G))


def _prefactor_log(noise, G_bar):
    return 0.5 * noise.log_norm + float(np.dot(G_bar, G_bar)) / (4.0 * noise.mu_min)


def _exp(x):
    return math.exp(x) if x < 709.0 else math.inf


def _log_erfc(x):
    """log erfc(x), finite far into the tail where erfc itself underflows."""
    return math.log(2.0) + float(log_ndtr(-math.sqrt(2.0) * x))


def log_tail_bound_erf(noise: NoiseModel, G_bar, K: float, center=None) -> float:
    """Logarithm of :func:`tail_bound_erf`."""
    if K < 0:
        raise ValueError("K must be nonnegative")
    G_bar = np.asarray(G_bar, dtype=np.float64) - (0.0 if center is None else np.asarray(center, dtype=np.float64))
    mu, k = noise.mu_min, noise.k
    r = 2.0 * math.sqrt(mu)
    # per axis, the mass outside [-K, K] is t/2 with t = erfc((K+g)/r) + erfc((K-g)/r)
    log_t = np.array([np.logaddexp(_log_erfc((K + g) / r), _log_erfc((K - g) / r)) for g in G_bar])
    log_half_t = log_t - math.log(2.0)
    log_half_t = np.minimum(log_half_t, 0.0)
    if log_half_t.max() < -18.0:
        # 1 - prod(1 - t/2) = sum t/2 to double precision
        log_outside = float(logsumexp(log_half_t))
    else:
        with np.errstate(divide="ignore"):  # t = 2 at K = 0: everything lies outside
            inside = float(np.sum(np.log1p(-np.exp(log_half_t))))
        log_outside = math.log(-math.expm1(inside)) if inside < 0 else -math.inf
    return _prefactor_log(noise, G_bar) + 0.5 * k * math.log(4.0 * math.pi * mu) + log_outside


def tail_bound_erf(noise: NoiseModel, G_bar, K: float, center=None) -> float:
    """Bound on the neglected integral outside c + [-K, K]^k via the exact
    Gaussian tail mass (erf form), evaluated in log space."""
    return _exp(log_tail_bound_erf(noise, G_bar, K, center))


def displayed_tail_bound(noise: NoiseModel, G_bar, K: float) -> float:
    """C^{1/2} e^{|G|^2/(4 mu)} e^{-(K-M)^2/(4 mu)} for K >= M."""
    G_bar = np.asarray(G_bar, dtype=np.float64)
    M = float(np.max(np.abs(G_bar)))
    if K < M:
        return math.inf
    return _exp(_prefactor_log(noise, G_bar) - (K - M) ** 2 / (4.0 * noise.mu_min))


def choose_truncation(noise: NoiseModel, G_bar, eps: float, guard: bool = True):
    """Half-width K with a certified bound on the neglected tail.

    The closed-form choice K = M + 2 sqrt(mu log(C^{1/2} e^{|G|^2/4mu}/eps))
    ignores the volume of the Gaussian tail region, which matters when
    k (4 pi mu)^{k/2} > 1. With ``guard`` the result is enlarged until the
    erf tail bound is also <= eps. Returns (K, certified_bound).
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    G_bar = np.asarray(G_bar, dtype=np.float64)
    mu = noise.mu_min
    M = float(np.max(np.abs(G_bar)))
    log_arg = _prefactor_log(noise, G_bar) - math.log(eps)
    if log_arg <= 0:
        K = M
    else:
        K = M + 2.0 * math.sqrt(mu * log_arg)
        while displayed_tail_bound(noise, G_bar, K) > eps:  # absorb rounding
            K = np.nextafter(K, math.inf)
    bound = displayed_tail_bound(noise, G_bar, K)
    if guard and tail_bound_erf(noise, G_bar, K) > eps:
        hi = max(K, 1.0)
        while tail_bound_erf(noise, G_bar, hi) > eps:
            hi *= 2.0
        log_eps = math.log(eps)
        K = brentq(lambda x: log_tail_bound_erf(noise, G_bar, x) - log_eps, K, hi, xtol=1e-14, rtol=1e-14)
        while tail_bound_erf(noise, G_bar, K) > eps:
            K = np.nextafter(K, math.inf)
    if guard:
        bound = tail_bound_erf(noise, G_bar, K)
    return float(K), float(bound)
