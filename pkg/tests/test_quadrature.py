from __future__ import annotations

import math

import numpy as np
import pytest

from sepmap_lab.errors import QuadratureBudgetExceeded
from sepmap_lab.quadrature import NODES, WG7, WK15, gk_integrate


def _rule(weights, deg):
    return float(weights @ NODES ** deg)


def _exact(deg):
    return 0.0 if deg % 2 else 2.0 / (deg + 1)


@pytest.mark.parametrize("deg", range(0, 23))
def test_kronrod_exact_through_degree_22(deg):
    assert _rule(WK15, deg) == pytest.approx(_exact(deg), abs=1e-14)


@pytest.mark.parametrize("deg", range(0, 14))
def test_gauss_exact_through_degree_13(deg):
    assert _rule(WG7, deg) == pytest.approx(_exact(deg), abs=1e-14)


def test_gauss_not_exact_at_degree_14():
    assert abs(_rule(WG7, 14) - _exact(14)) > 1e-6


def test_kronrod_not_exact_at_degree_24():
    assert abs(_rule(WK15, 24) - _exact(24)) > 1e-10


def test_adaptive_integral_of_sech_squared():
    val, err = gk_integrate(lambda s: 1 / np.cosh(s) ** 2, -30, 30, abstol=1e-13)
    assert val == pytest.approx(2 * math.tanh(30), abs=1e-13)
    assert err <= 1e-13


def test_vector_valued_integrand():
    val, _ = gk_integrate(lambda s: np.stack([np.sin(s), np.cos(s)]), 0, math.pi)
    assert val == pytest.approx([2.0, 0.0], abs=1e-12)


def test_budget_exceeded():
    with pytest.raises(QuadratureBudgetExceeded):
        gk_integrate(lambda s: np.sign(s - 0.1234567), -1, 1, abstol=1e-15, max_panels=20)


def test_result_is_bit_reproducible():
    f = lambda s: np.exp(-s * s) * np.cos(3 * s)
    assert gk_integrate(f, -5, 5)[0] == gk_integrate(f, -5, 5)[0]
