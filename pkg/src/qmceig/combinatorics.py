"""Exact combinatorics: Stirling numbers, multivariate Lah numbers, the
Faa di Bruno coefficient recursion and two summation identities."""

from __future__ import annotations

import itertools
from fractions import Fraction
from functools import lru_cache
from math import comb, factorial, prod

import mpmath


@lru_cache(maxsize=None)
def _stirling_row(n: int) -> tuple:
    if n == 0:
        return (1,)
    prev = _stirling_row(n - 1) + (0,)
    return tuple((k * prev[k] if k else 0) + (prev[k - 1] if k else 0) for k in range(n + 1))


def stirling2(n: int, k: int) -> int:
    """Stirling number of the second kind S(n, k), exact."""
    if n < 0 or k < 0:
        raise ValueError("n and k must be nonnegative")
    if k > n:
        return 0
    # build rows bottom-up so deep n never hits the recursion limit
    for m in range(0, n, 256):
        _stirling_row(m)
    return _stirling_row(n)[k]


def _check_multi_index(idx, name):
    idx = tuple(int(v) for v in idx)
    if any(v < 0 for v in idx):
        raise ValueError(f"{name} must have nonnegative entries")
    return idx


def multivariate_lah(nu, lam) -> Fraction:
    """|nu|!(|nu|-1)! / (lam! (|nu|-|lam|)! (|lam|-1)!)."""
    nu = _check_multi_index(nu, "nu")
    lam = _check_multi_index(lam, "lam")
    a, b = sum(nu), sum(lam)
    if not 1 <= b <= a:
        raise ValueError("need 1 <= |lam| <= |nu|")
    den = prod(factorial(v) for v in lam) * factorial(a - b) * factorial(b - 1)
    return Fraction(factorial(a) * factorial(a - 1), den)


def _is_exact(x):
    return isinstance(x, (int, Fraction)) and not isinstance(x, bool)


def chi_recursion(nu, lam, b=None, beta=1):
    """Coefficient chi_{nu,lam} of the Gaussian Faa di Bruno recursion, with
    the defining inequality taken as equality.

    Exact (``Fraction``) when beta is an integer and every b_j is an int or
    Fraction; otherwise a 50-digit ``mpmath.mpf``.
    """
    nu = _check_multi_index(nu, "nu")
    lam = tuple(int(v) for v in lam)
    s = len(nu)
    b = (1,) * s if b is None else tuple(b)
    if len(b) != s:
        raise ValueError("b must have one entry per component of nu")
    exact = _is_exact(beta) or (isinstance(beta, float) and beta.is_integer())
    exact = exact and all(_is_exact(v) for v in b)
    bb = [Fraction(v) for v in b] if exact else [mpmath.mpf(v) for v in b]
    if exact:
        if all(v.denominator == 1 for v in bb):
            bb = [int(v) for v in bb]  # integer arithmetic is much faster
        return Fraction(_chi_exact(nu, lam, tuple(bb), int(beta)))
    with mpmath.workdps(50):
        return _chi_generic(nu, lam, bb, mpmath.mpf(beta), {})


def _chi_terms(n, l):
    """One expansion step, shared by both arithmetic modes: yields
    (j, m, lam - e_ell, nu - e_j - m, binomial(nu - e_j, m))."""
    j = next(i for i, v in enumerate(n) if v)
    rest = n[:j] + (n[j] - 1,) + n[j + 1:]
    for ell in (i for i, v in enumerate(l) if v):
        l_minus = l[:ell] + (l[ell] - 1,) + l[ell + 1:]
        for m in itertools.product(*(range(v + 1) for v in rest)):
            coef = prod(comb(r, mi) for r, mi in zip(rest, m))
            diff = tuple(r - mi for r, mi in zip(rest, m))
            yield j, m, l_minus, diff, coef


def _chi_base(n, l):
    if any(v < 0 for v in l):
        return 0
    if not any(l):
        return 1 if not any(n) else 0
    if sum(n) < sum(l):
        return 0
    return None


@lru_cache(maxsize=None)
def _chi_exact(n, l, b, beta):
    base = _chi_base(n, l)
    if base is not None:
        return base
    total = 0
    for j, m, l_minus, diff, coef in _chi_terms(n, l):
        bpow = prod(b[i] ** (mi + (i == j)) for i, mi in enumerate(m))
        total += coef * factorial(sum(m) + 1) ** beta * bpow * _chi_exact(diff, l_minus, b, beta)
    return total


def _chi_generic(n, l, b, beta, memo):
    base = _chi_base(n, l)
    if base is not None:
        return mpmath.mpf(base)
    key = (n, l)
    if key not in memo:
        total = mpmath.mpf(0)
        for j, m, l_minus, diff, coef in _chi_terms(n, l):
            bpow = mpmath.mpf(1)
            for i, mi in enumerate(m):
                bpow *= b[i] ** (mi + (i == j))
            total += coef * mpmath.factorial(sum(m) + 1) ** beta * bpow * _chi_generic(diff, l_minus, b, beta, memo)
        memo[key] = total
    return memo[key]


def celine_identity_check(v: int) -> bool:
    """sum_{l=1..v} 1/((v-l)!(l-1)!) == 2^(v-1)/(v-1)!, exactly."""
    if v < 1:
        raise ValueError("v must be >= 1")
    lhs = sum(Fraction(1, factorial(v - l) * factorial(l - 1)) for l in range(1, v + 1))
    return lhs == Fraction(2 ** (v - 1), factorial(v - 1))


def gosper_identity_check(v: int, lam: int) -> bool:
    """sum_{l=lam-1..v} (v-l+1)(l-1)!/(l-lam+1)! == (v+1)!/((v-lam+1)! lam (lam-1))."""
    if v < 1 or not 2 <= lam <= v + 1:
        raise ValueError("need v >= 1 and 2 <= lam <= v+1")
    lhs = sum(Fraction((v - l + 1) * factorial(l - 1), factorial(l - lam + 1))
              for l in range(lam - 1, v + 1))
    return lhs == Fraction(factorial(v + 1), factorial(v - lam + 1) * lam * (lam - 1))


def stirling_telescoping_check(n: int, k: int) -> bool:
    """sum_m C(n,m) S(n-m, k-1) == S(n+1, k)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return sum(comb(n, m) * stirling2(n - m, k - 1) for m in range(n + 1)) == stirling2(n + 1, k)
