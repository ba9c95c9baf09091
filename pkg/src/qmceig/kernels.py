"""Hot loops: CBC candidate scoring and strided inner log-means.

Each kernel has a numpy implementation (``*_numpy``) and a numba one
(``*_numba``). The public names dispatch on ``_accel.USE_NUMBA``.
"""

import numpy as np
from scipy.special import logsumexp

from ._accel import HAVE_NUMBA, USE_NUMBA, njit, prange


def bernoulli2_table(n):
    """B2(k/n) for k = 0..n-1, with B2(x) = x^2 - x + 1/6."""
    x = np.arange(n, dtype=np.float64) / n
    return x * x - x + 1.0 / 6.0


# ---------------------------------------------------------------- CBC scores

def cbc_scores_numpy(table, weights, candidates, n):
    """score[c] = sum_{i=1..n} table[(i*z_c) mod n] * weights[i-1]."""
    candidates = np.asarray(candidates, dtype=np.int64)
    i = np.arange(1, n + 1, dtype=np.int64)
    out = np.empty(candidates.size)
    chunk = max(1, (1 << 22) // max(n, 1))
    for start in range(0, candidates.size, chunk):
        zs = candidates[start:start + chunk]
        idx = np.outer(zs, i) % n
        out[start:start + chunk] = table[idx] @ weights
    return out


@njit(cache=True, parallel=True)
def _cbc_scores_jit(table, weights, candidates, n):
    out = np.empty(candidates.size)
    for c in prange(candidates.size):
        z = candidates[c]
        acc = 0.0
        idx = 0
        for i in range(n):
            idx += z
            if idx >= n:
                idx -= n
            acc += table[idx] * weights[i]
        out[c] = acc
    return out


def cbc_scores_numba(table, weights, candidates, n):
    return _cbc_scores_jit(np.ascontiguousarray(table, dtype=np.float64),
                           np.ascontiguousarray(weights, dtype=np.float64),
                           np.ascontiguousarray(candidates, dtype=np.int64), int(n))


# ------------------------------------------------------- inner log-means

def log_means_numpy(yw, gw, base, strides, log_c):
    """Log of C * mean_i exp(-0.5 |yw - gw_i|^2) over strided subsets.

    Rows of ``gw`` are inner nodes i = 1..n in lattice order; the subset for
    stride t keeps positions p with (p + 1) % t == 0. Only positions on the
    ``base`` stride are ever touched, so every stride must be a multiple of it.
    """
    n = gw.shape[0]
    pos = np.arange(base - 1, n, base)
    sub = gw[pos]
    out = np.empty((yw.shape[0], len(strides)))
    chunk = max(1, (1 << 21) // max(sub.shape[0] * max(sub.shape[1], 1), 1))
    for start in range(0, yw.shape[0], chunk):
        diff = yw[start:start + chunk, None, :] - sub[None, :, :]
        v = -0.5 * np.einsum("mnk,mnk->mn", diff, diff)
        for l, t in enumerate(strides):
            cols = np.arange(t // base - 1, sub.shape[0], t // base)
            out[start:start + chunk, l] = log_c + logsumexp(v[:, cols], axis=1) - np.log(cols.size)
    return out


@njit(cache=True, parallel=True)
def _log_means_jit(yw, gw, base, strides, log_c):
    m, k = yw.shape
    n = gw.shape[0]
    cnt = n // base
    nl = strides.size
    out = np.empty((m, nl))
    for r in prange(m):
        v = np.empty(cnt)
        for q in range(cnt):
            p = (q + 1) * base - 1
            acc = 0.0
            for d in range(k):
                t = yw[r, d] - gw[p, d]
                acc += t * t
            v[q] = -0.5 * acc
        for l in range(nl):
            step = strides[l] // base
            vmax = -np.inf
            for q in range(step - 1, cnt, step):
                if v[q] > vmax:
                    vmax = v[q]
            acc = 0.0
            for q in range(step - 1, cnt, step):
                acc += np.exp(v[q] - vmax)
            out[r, l] = log_c + vmax + np.log(acc) - np.log(cnt // step)
    return out


def log_means_numba(yw, gw, base, strides, log_c):
    return _log_means_jit(np.ascontiguousarray(yw, dtype=np.float64),
                          np.ascontiguousarray(gw, dtype=np.float64), int(base),
                          np.ascontiguousarray(strides, dtype=np.int64), float(log_c))


if USE_NUMBA:
    cbc_scores = cbc_scores_numba
    log_means = log_means_numba
else:
    cbc_scores = cbc_scores_numpy
    log_means = log_means_numpy

BACKENDS = {"numpy": (cbc_scores_numpy, log_means_numpy)}
if HAVE_NUMBA:
    BACKENDS["numba"] = (cbc_scores_numba, log_means_numba)
