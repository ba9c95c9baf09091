import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from qmceig.likelihood import (NoiseModel, TruncationBox, choose_truncation, displayed_tail_bound,
                               likelihood_density, log_likelihood, potential, tail_bound_erf)


def test_noise_model_invariants():
    A = np.array([[0.04, 0.01], [0.01, 0.02]])
    nm = NoiseModel(A)
    assert nm.mu_min == pytest.approx(np.linalg.eigvalsh(A)[0], abs=1e-12)
    assert np.linalg.norm(nm.inv_sqrt @ nm.inv_sqrt - np.linalg.inv(A)) < 1e-10
    assert nm.log_norm == pytest.approx(-0.5 * math.log(np.linalg.det(2 * math.pi * A)), rel=1e-13)


@pytest.mark.parametrize("G", [np.array([[1.0, 0.5], [0.2, 1.0]]), np.array([[1.0, 0.0], [0.0, -1.0]])])
def test_noise_model_rejects_invalid(G):
    with pytest.raises(ValueError):
        NoiseModel(G)


def test_potential_values():
    nm = NoiseModel.isotropic(1, 0.01)
    assert potential(nm, [0.3], [0.3]) == 0.0
    assert potential(nm, [0.4], [0.3]) == pytest.approx(0.5, rel=1e-12)
    eye = NoiseModel.isotropic(3, 1.0)
    y, G = np.array([1.0, 2.0, 3.0]), np.array([0.5, 0.0, -1.0])
    assert potential(eye, y, G) == pytest.approx(0.5 * np.sum((y - G) ** 2))
    with pytest.raises(ValueError):
        potential(eye, [1.0, 2.0], [0.0, 0.0])


def test_density_values():
    nm3 = NoiseModel.isotropic(3, 0.01)
    assert likelihood_density(nm3, np.zeros(3), np.zeros(3)) == pytest.approx(63.4936, abs=1e-4)
    assert likelihood_density(nm3, np.zeros(3), np.zeros(3)) == pytest.approx((2 * math.pi * 0.01) ** -1.5, rel=1e-13)
    nm1 = NoiseModel.isotropic(1, 0.01)
    assert likelihood_density(nm1, [0.1], [0.0]) == pytest.approx(2.41971, abs=1e-5)


@given(st.floats(0, 3), st.floats(0, 3))
def test_density_monotone_in_distance(a, b):
    nm = NoiseModel.isotropic(2, 0.3)
    lo, hi = sorted((a, b))
    assert likelihood_density(nm, [lo, 0], [0, 0]) >= likelihood_density(nm, [hi, 0], [0, 0])


def test_log_space_consistency():
    nm = NoiseModel(np.array([[0.02, 0.005], [0.005, 0.01]]))
    y, G = np.array([0.3, -0.2]), np.array([0.1, 0.1])
    assert likelihood_density(nm, y, G) == pytest.approx(math.exp(nm.log_norm) * math.exp(-potential(nm, y, G)),
                                                          rel=1e-14)
    assert log_likelihood(nm, y, G) == pytest.approx(nm.log_norm - potential(nm, y, G))


def test_density_integrates_to_one():
    nm1 = NoiseModel.isotropic(1, 0.05)
    one, _ = integrate.quad(lambda y: likelihood_density(nm1, [y], [0.2]), -5, 5, epsabs=1e-12)
    assert one == pytest.approx(1.0, abs=1e-6)
    nm2 = NoiseModel(np.array([[0.5, 0.1], [0.1, 0.3]]))
    x, w = np.polynomial.legendre.leggauss(120)
    y = 8 * x
    Y = np.stack(np.meshgrid(y, y, indexing="ij"), axis=-1).reshape(-1, 2)
    dens = likelihood_density(nm2, Y, np.array([0.1, -0.2]))
    assert float(dens @ np.outer(8 * w, 8 * w).ravel()) == pytest.approx(1.0, abs=1e-6)


def test_truncation_box():
    box = TruncationBox(0.5, 3)
    assert box.volume == 1.0 and box.lower == (-0.5,) * 3
    shifted = TruncationBox(0.5, 2, center=0.3)
    assert shifted.lower == pytest.approx((-0.2, -0.2)) and shifted.upper == pytest.approx((0.8, 0.8))
    with pytest.raises(ValueError):
        TruncationBox(0.0, 1)


def test_choose_truncation_closed_form_example():
    nm = NoiseModel.isotropic(1, 1.0)
    K, bound = choose_truncation(nm, [0.0], 1e-6, guard=False)
    assert K == pytest.approx(2 * math.sqrt(math.log((2 * math.pi) ** -0.25 / 1e-6)), rel=1e-12)
    assert bound <= 1e-6
    assert displayed_tail_bound(nm, [0.0], K) <= 1e-6


def test_choose_truncation_degenerate_branch():
    nm = NoiseModel.isotropic(1, 1.0)
    K, _ = choose_truncation(nm, [0.4], 10.0, guard=False)
    assert K == 0.4


def test_choose_truncation_rejects_nonpositive_eps():
    with pytest.raises(ValueError):
        choose_truncation(NoiseModel.isotropic(1, 1.0), [0.0], 0.0)


@given(st.floats(1e-12, 1e-1), st.floats(1e-12, 1e-1))
def test_choose_truncation_monotone_in_eps(e1, e2):
    nm = NoiseModel.isotropic(2, 0.05)
    lo, hi = sorted((e1, e2))
    assert choose_truncation(nm, [0.3, 0.2], lo)[0] >= choose_truncation(nm, [0.3, 0.2], hi)[0]


def test_tail_bound_limits():
    nm = NoiseModel.isotropic(1, 1.0)
    assert tail_bound_erf(nm, [0.0], 50.0) < 1e-12
    nm2 = NoiseModel.isotropic(2, 0.3)
    G = np.array([0.2, -0.1])
    want = math.exp(0.5 * nm2.log_norm + G @ G / (4 * 0.3)) * (4 * math.pi * 0.3)
    assert tail_bound_erf(nm2, G, 0.0) == pytest.approx(want, rel=1e-13)


def test_tail_bound_nonincreasing():
    nm = NoiseModel.isotropic(3, 0.01)
    vals = [tail_bound_erf(nm, [0.4, 0.35, 0.3], K) for K in np.linspace(0, 2, 41)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def mp_tail_bound(noise, G, K):
    """The erf-form bound in 50-digit arithmetic."""
    import mpmath
    with mpmath.workdps(50):
        mu = mpmath.mpf(noise.mu_min)
        r = 2 * mpmath.sqrt(mu)
        inside = mpmath.mpf(1)
        for g in G:
            inside *= (mpmath.erf((mpmath.mpf(g) + K) / r) - mpmath.erf((mpmath.mpf(g) - K) / r)) / 2
        pref = mpmath.exp(mpmath.mpf(noise.log_norm) / 2 + sum(mpmath.mpf(g) ** 2 for g in G) / (4 * mu))
        return pref * (4 * mpmath.pi * mu) ** (mpmath.mpf(noise.k) / 2) * (1 - inside)


@pytest.mark.parametrize("k, mu, G, K", [(1, 1.0, [0.0], 3.0), (2, 0.3, [0.2, -0.1], 0.7),
                                         (3, 0.01, [0.38, 0.41, 0.4], 0.9),
                                         (3, 0.001, [0.0, 1.0, -2.0], 4.3)])
def test_tail_bound_matches_high_precision(k, mu, G, K):
    nm = NoiseModel.isotropic(k, mu)
    want = mp_tail_bound(nm, G, K)
    assert tail_bound_erf(nm, G, K) == pytest.approx(float(want), rel=1e-9)


def test_truncation_certified_when_prefactor_is_huge():
    nm = NoiseModel.isotropic(3, 0.001)
    G = [0.0, 1.0, -2.0]
    K, bound = choose_truncation(nm, G, 1e-12)
    assert bound <= 1e-12
    assert float(mp_tail_bound(nm, G, K)) <= 1e-12 * (1 + 1e-9)
