import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from freeknot.quadrature import (IntegrationWarning, adaptive_gauss_cells, adaptive_simpson,
                                 adaptive_simpson_cells, break_partition, gauss_rule, integrate_piecewise,
                                 points_for_degree)


@pytest.mark.parametrize("m", [1, 2, 3, 5, 8, 16])
def test_gauss_exact_to_degree(m):
    rule = gauss_rule(m)
    for k in range(2 * m):
        exact = 0.0 if k % 2 else 2.0 / (k + 1)
        assert np.sum(rule.weights * rule.nodes ** k) == pytest.approx(exact, abs=1e-14)
    # first degree that is not integrated exactly
    k = 2 * m
    assert abs(np.sum(rule.weights * rule.nodes ** k) - 2.0 / (k + 1)) > 1e-12


def test_gauss_rule_range():
    with pytest.raises(ValueError):
        gauss_rule(0)
    with pytest.raises(ValueError):
        gauss_rule(33)


def test_mapped_rule_on_many_cells():
    x, w = gauss_rule(3).mapped([0.0, 1.0], [1.0, 3.0])
    assert x.shape == w.shape == (2, 3)
    assert np.sum(w, axis=1) == pytest.approx([1.0, 2.0])
    assert np.sum(w * x ** 5) == pytest.approx(3.0 ** 6 / 6)


@given(st.integers(0, 30))
def test_points_for_degree_is_minimal(deg):
    m = points_for_degree(deg)
    assert 2 * m - 1 >= deg
    assert m == 1 or 2 * (m - 1) - 1 < deg


def test_break_partition():
    part = break_partition([-2.0, 0.1, 0.1, 0.5, 3.0], 0.0, 1.0)
    assert part.tolist() == [0.0, 0.1, 0.5, 1.0]
    with pytest.raises(ValueError):
        break_partition([], 1.0, 1.0)


def test_integrate_piecewise_is_exact_on_kinks():
    f = lambda x: np.where(x < 0.3, (x - 0.3) ** 3, 2 * (x - 0.3) ** 2)
    exact = -(0.3 ** 4) / 4 + 2 * 0.7 ** 3 / 3
    assert integrate_piecewise(f, [0.0, 0.3, 1.0], 3) == pytest.approx(exact, abs=1e-15)


@pytest.mark.parametrize("f, a, b, exact", [
    (np.sin, 0.0, np.pi, 2.0),
    (np.exp, -1.0, 2.0, math.e ** 2 - math.e ** -1),
    (lambda x: 1.0 / (1.0 + 25 * x * x), -1.0, 1.0, 2.0 * math.atan(5.0) / 5.0),
    (lambda x: x ** 2.5, 0.0, 1.0, 2.0 / 7.0),
])
def test_adaptive_simpson_known_integrals(f, a, b, exact):
    assert adaptive_simpson(f, a, b, tol=1e-12) == pytest.approx(exact, abs=1e-10)


def test_adaptive_simpson_orientation_and_scalar_functions():
    assert adaptive_simpson(np.cos, 1.0, 0.0) == pytest.approx(-math.sin(1.0), abs=1e-12)
    assert adaptive_simpson(np.cos, 0.5, 0.5) == 0.0
    assert adaptive_simpson(lambda x: 3.0, 0.0, 2.0) == pytest.approx(6.0)
    assert adaptive_simpson(math.cos, 0.0, 1.0) == pytest.approx(math.sin(1.0), abs=1e-12)
    with pytest.raises(ValueError):
        adaptive_simpson(np.cos, 0.0, 1.0, tol=0.0)


def test_depth_cap_warns():
    step = lambda x: (x > 1.0 / 3.0).astype(float)
    with pytest.warns(IntegrationWarning):
        value, info = adaptive_simpson(step, 0.0, 1.0, tol=1e-14, max_depth=8, full_output=True)
    assert info.depth_exceeded
    assert value == pytest.approx(2.0 / 3.0, abs=1e-2)


def test_smooth_integrand_does_not_warn():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        adaptive_simpson(np.exp, 0.0, 1.0)


def test_vector_cells_match_scalar_calls():
    a, b = np.array([0.0, 1.0, 2.5]), np.array([1.0, 2.5, 3.0])

    def func(cid, x):
        return np.stack([np.sin(x), x * np.cos(cid + x)], axis=1)

    res, info = adaptive_simpson_cells(func, a, b, tol=1e-12)
    assert res.shape == (3, 2)
    for c in range(3):
        assert res[c, 0] == pytest.approx(adaptive_simpson(np.sin, a[c], b[c]), abs=1e-12)
        g = lambda x, c=c: x * np.cos(c + x)
        assert res[c, 1] == pytest.approx(adaptive_simpson(g, a[c], b[c]), abs=1e-12)
    assert info.evaluations > 0 and info.segments >= 3


def test_adaptive_gauss_relative_accuracy():
    # tiny integrand: absolute tolerances would accept garbage here
    f = lambda cid, x: (1e-20 * np.exp(-50 * x * x))[:, None]
    res, info = adaptive_gauss_cells(f, [-1.0], [1.0], rtol=1e-12)
    exact = 1e-20 * math.sqrt(math.pi / 50) * math.erf(math.sqrt(50))
    assert res[0, 0] == pytest.approx(exact, rel=1e-11)
    assert not info.depth_exceeded


@pytest.mark.parametrize("tol", [1e-2, 1e-6, 1e-12])
def test_simpson_is_exact_on_cubics_at_any_tolerance(tol):
    f = lambda x: 4 * x**3 - 3 * x**2 + 2 * x - 1
    exact = (2.0**4 - 2.0**3 + 2.0**2 - 2.0) - (0.5**4 - 0.5**3 + 0.5**2 - 0.5)
    assert adaptive_simpson(f, 0.5, 2.0, tol=tol) == pytest.approx(exact, abs=1e-13)
    assert adaptive_simpson(lambda x: x * x, 0.0, 1.0, tol=tol) == pytest.approx(1 / 3, abs=1e-15)
