import math

import numpy as np
import pytest

from polydd.errors import ParameterError
from polydd.quadrature import gauss_legendre_01, gauss_lobatto, polygon_rule, triangle_rule


@pytest.mark.parametrize("m", range(2, 11))
def test_lobatto_exactness(m):
    x, w = gauss_lobatto(m)
    assert x[0] == -1.0 and x[-1] == 1.0
    assert np.all(np.diff(x) > 0)
    np.testing.assert_allclose(x, -x[::-1], atol=1e-15)
    for p in range(2 * m - 2):
        exact = 0.0 if p % 2 else 2.0 / (p + 1)
        assert abs(w @ x**p - exact) < 1e-13


def test_lobatto_known_nodes():
    x, w = gauss_lobatto(4)
    np.testing.assert_allclose(x, [-1, -1 / math.sqrt(5), 1 / math.sqrt(5), 1], atol=1e-15)
    np.testing.assert_allclose(w, [1 / 6, 5 / 6, 5 / 6, 1 / 6], atol=1e-15)


def test_lobatto_rejects_one_point():
    with pytest.raises(ParameterError):
        gauss_lobatto(1)


def test_lobatto_arrays_are_read_only():
    x, _ = gauss_lobatto(5)
    with pytest.raises(ValueError):
        x[0] = 0.0


@pytest.mark.parametrize("n", [1, 3, 6])
def test_gauss_legendre_unit_interval(n):
    x, w = gauss_legendre_01(n)
    for p in range(2 * n):
        assert abs(w @ x**p - 1.0 / (p + 1)) < 1e-14


@pytest.mark.parametrize("degree", [0, 2, 5, 8])
def test_triangle_rule_reference_monomials(degree):
    pts, w = triangle_rule((0, 0), (1, 0), (0, 1), degree)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            exact = math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
            assert abs(w @ (pts[:, 0] ** a * pts[:, 1] ** b) - exact) < 1e-14


def test_polygon_rule_square():
    sq = np.array([[0, 0], [2, 0], [2, 1], [0, 1]], float)
    pts, w = polygon_rule(sq, 4)
    assert abs(w.sum() - 2.0) < 1e-14
    assert abs(w @ (pts[:, 0] ** 2 * pts[:, 1] ** 2) - (8 / 3) * (1 / 3)) < 1e-13
