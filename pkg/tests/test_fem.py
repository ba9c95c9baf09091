import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qmceig.fem import UNIVERSE, Design, DiffusionField, ForwardModel, UnitSquareMesh, coefficient_eval
from qmceig.problems import fem_order_study


def series_solution(x, terms=400):
    """-lap u = 10 x1 on the unit square, u = 0 on the boundary, as a double sine series."""
    m = np.arange(1, terms + 1)
    n = np.arange(1, terms + 1, 2)  # even n vanish
    fm = 10.0 * 2.0 * (-1.0) ** (m + 1) / (m * math.pi)
    fn = 2.0 * 2.0 / (n * math.pi)
    coef = fm[:, None] * fn[None, :] / (math.pi ** 2 * (m[:, None] ** 2 + n[None, :] ** 2))
    sx = np.sin(math.pi * m * x[0])
    sy = np.sin(math.pi * n * x[1])
    return float(sx @ coef @ sy)


def test_coefficient_values():
    assert coefficient_eval(DiffusionField("affine", 1), (0.5, 0.5), (0.5,)) == pytest.approx(1.05, abs=1e-15)
    assert coefficient_eval(DiffusionField("periodic", 1), (0.5, 0.5), (0.25,)) == pytest.approx(
        1 + 0.1 / math.sqrt(6), abs=1e-15)
    assert round(1 + 0.1 / math.sqrt(6), 6) == 1.040825
    for kind in ("affine", "periodic"):
        assert coefficient_eval(DiffusionField(kind, 4), (0.3, 0.7), np.zeros(4)) == 1.0


@given(st.lists(st.floats(-0.5, 0.5), min_size=10, max_size=10))
def test_affine_coefficient_lower_bound(theta):
    model = ForwardModel(3, DiffusionField("affine", 10), use_cache=False)
    assert model.element_coefficients(np.array(theta)).min() >= 0.91


def test_field_rejects_bad_theta():
    f = DiffusionField("affine", 2)
    with pytest.raises(ValueError):
        f.check_theta([0.6, 0.0])
    with pytest.raises(ValueError):
        f.check_theta([0.1])
    with pytest.raises(ValueError):
        DiffusionField("lognormal", 2)


def test_zero_source_gives_zero():
    model = ForwardModel(3, DiffusionField("affine", 2), "zero", use_cache=False)
    u = model.assemble_and_solve(np.array([0.3, -0.2]))
    assert np.all(u == 0.0)
    assert np.all(model.observe(u, Design(UNIVERSE[:3])) == 0.0)


def test_observation_is_nodal_value():
    model = ForwardModel(3, DiffusionField("affine", 2), use_cache=False)
    u = model.assemble_and_solve(np.zeros(2))
    node = model.mesh.node_of((0.25, 0.5))
    assert model.observe(u, Design(((0.25, 0.5),)))[0] == u[node]


def test_sensor_must_be_a_node():
    model = ForwardModel(2, DiffusionField("affine", 2), use_cache=False)
    with pytest.raises(ValueError):
        model.forward(np.zeros(2), Design(((0.3, 0.5),)))
    with pytest.raises(ValueError):
        UnitSquareMesh(2).node_of((0.125, 0.5))


def test_design_validation():
    with pytest.raises(ValueError):
        Design(())
    with pytest.raises(ValueError):
        Design(((0.5, 0.5), (0.5, 0.5)))
    with pytest.raises(ValueError):
        Design(((1.0, 0.5),))


def test_matches_series_solution():
    model = ForwardModel(6, DiffusionField("affine", 1), use_cache=False)
    u = model.assemble_and_solve(np.zeros(1))
    for x in UNIVERSE:
        assert u[model.mesh.node_of(x)] == pytest.approx(series_solution(x), rel=2e-3)


def test_nodal_values_converge_at_second_order():
    x = (0.5, 0.5)
    ref = series_solution(x)
    errs = []
    for q in (3, 4, 5):
        model = ForwardModel(q, DiffusionField("affine", 1), use_cache=False)
        errs.append(abs(model.forward(np.zeros(1), Design((x,)))[0] - ref))
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.25)
    assert errs[1] / errs[2] == pytest.approx(4, rel=0.25)


def test_doubling_coefficient_halves_solution():
    theta = np.array([0.4, -0.3, 0.1])
    u1 = ForwardModel(4, DiffusionField("affine", 3), use_cache=False).assemble_and_solve(theta)
    u2 = ForwardModel(4, DiffusionField("affine", 3, amplitude=0.2, base=2.0),
                      use_cache=False).assemble_and_solve(theta)
    assert np.allclose(u2, 0.5 * u1, rtol=1e-12, atol=1e-16)


def test_both_kinds_agree_at_zero():
    d = Design(UNIVERSE)
    a = ForwardModel(4, DiffusionField("affine", 5)).forward(np.zeros(5), d)
    b = ForwardModel(4, DiffusionField("periodic", 5)).forward(np.zeros(5), d)
    assert np.array_equal(a, b)


def test_periodic_kind_is_periodic():
    model = ForwardModel(4, DiffusionField("periodic", 3), use_cache=False)
    d = Design(UNIVERSE)
    lo = model.forward(np.array([-0.5, 0.2, 0.1]), d)
    hi = model.forward(np.array([0.5, 0.2, 0.1]), d)
    assert np.allclose(lo, hi, rtol=1e-13)


def test_finite_difference_ratio():
    model = ForwardModel(4, DiffusionField("affine", 4), use_cache=False)
    d = Design(UNIVERSE)
    theta = np.array([0.1, -0.2, 0.05, 0.3])
    for j in range(4):
        e = np.eye(4)[j]
        fd = [(model.forward(theta + h * e, d) - model.forward(theta - h * e, d)) / (2 * h) for h in (1e-3, 1e-4)]
        assert np.allclose(fd[0], fd[1], rtol=0.05, atol=1e-12)


def test_permuting_design_permutes_output():
    model = ForwardModel(4, DiffusionField("affine", 3))
    theta = np.array([0.2, -0.1, 0.4])
    d = Design(UNIVERSE[:3])
    p = Design(tuple(reversed(UNIVERSE[:3])))
    assert np.array_equal(model.forward(theta, d)[::-1], model.forward(theta, p))


def test_cache_avoids_second_solve():
    model = ForwardModel(3, DiffusionField("affine", 2))
    thetas = np.array([[0.1, 0.2], [0.3, -0.4]])
    model.forward_batch(thetas, Design(UNIVERSE[:3]))
    before = model.solves
    model.forward_batch(thetas, Design(UNIVERSE[3:6]))
    assert model.solves == before == 2
    model.clear_cache()
    model.forward_batch(thetas, Design(UNIVERSE[:1]))
    assert model.solves == 4


def test_manufactured_l2_order():
    _, errs, slope = fem_order_study((3, 4, 5, 6))
    assert all(e1 > e2 for e1, e2 in zip(errs, errs[1:]))
    assert 1.8 <= slope <= 2.2


def test_range_matches_series_at_zero():
    model = ForwardModel(5, DiffusionField("affine", 10))
    vals = model.universe_batch(np.zeros((1, 10)))[0]
    want = [series_solution(x) for x in UNIVERSE]
    assert np.allclose(vals, want, rtol=5e-3)


@pytest.mark.xfail(strict=True, reason="the 10*x1 problem has observations from about 0.16 (corner sensors) "
                                        "to 0.37 (centre); only the centre column is near the quoted range")
def test_forward_range_in_quoted_band():
    model = ForwardModel(5, DiffusionField("affine", 10))
    theta = np.random.default_rng(0).random((16, 10)) - 0.5
    vals = model.universe_batch(theta)
    assert vals.min() >= 0.3 and vals.max() <= 0.5
