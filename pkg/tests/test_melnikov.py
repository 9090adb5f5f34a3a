from __future__ import annotations

import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sepmap_lab.errors import OverlappingZones, SmallDivisor
from sepmap_lab.golden import residue_theta
from sepmap_lab.hamiltonian import (ModelSpec, arnold_perturbation, classical_arnold, real_mode,
                                    resonant_arnold, TrigPerturbation)
from sepmap_lab.melnikov import (ResonanceVector, boldface_H1, boldface_H1_partials, bump_psi,
                                 bump_psi_prime, classify_zone, half_loop_partials, inv_partial,
                                 apply_partial, melnikov_grid, theta_partials, theta_partials_interp,
                                 theta_splitting)

mp.mp.dps = 30


def _oracle(eta, xi, tau, sigma):
    """Direct high-precision quadrature of the loop integral for classical Arnold."""
    def f(s):
        q = 4 * mp.atan(mp.exp(sigma * s))
        return (1 - mp.cos(q)) * (mp.cos(xi + eta * s) + mp.cos(s - tau))
    return float(mp.quad(f, [-mp.inf, -5, 0, 5, mp.inf]))


@pytest.mark.parametrize("eta,xi,tau,sigma", [(0.3, 0.2, 0.0, 1), (0.8, 1.0, 0.3, 1),
                                              (1.7, 4.0, -2.5, -1), (0.05, 2.2, 1.1, -1)])
def test_theta_against_high_precision_quadrature(eta, xi, tau, sigma):
    got = theta_splitting(eta, xi, tau, sigma, classical_arnold(1e-3))
    assert got == pytest.approx(_oracle(eta, xi, tau, sigma), abs=1e-10)


def test_residue_formula_against_quadrature():
    for eta in (0.3, 1.0, 2.0):
        want = float(mp.quad(lambda s: 2 / mp.cosh(s) ** 2 * mp.cos(eta * s), [-mp.inf, 0, mp.inf]))
        assert residue_theta(eta, 0.0) == pytest.approx(want, abs=1e-13)


def test_pendulum_free_terms_do_not_split():
    a = theta_splitting(0.6, 1.0, 0.4, 1, classical_arnold(1e-3))
    b = theta_splitting(0.6, 1.0, 0.4, 1, resonant_arnold(1e-3, 0.25))
    assert a == pytest.approx(b, abs=1e-13)


eta_s = st.floats(0.2, 1.8)
ang = st.floats(-10, 10)


@settings(max_examples=25, deadline=None)
@given(eta_s, ang, ang, st.sampled_from([1, -1]))
def test_theta_is_periodic(eta, xi, tau, s):
    m = classical_arnold(1e-3)
    base = theta_splitting(eta, xi, tau, s, m)
    assert theta_splitting(eta, xi + 2 * math.pi, tau, s, m) == pytest.approx(base, abs=1e-12)
    assert theta_splitting(eta, xi, tau + 2 * math.pi, s, m) == pytest.approx(base, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(eta_s, ang, ang, st.sampled_from([1, -1]))
def test_theta_closed_form(eta, xi, tau, s):
    # each mode is a sech^2 Fourier transform: 2 pi k / sinh(pi k / 2)
    want = 2 * math.pi * eta * math.cos(xi) / math.sinh(math.pi * eta / 2) \
        + 2 * math.pi * math.cos(tau) / math.sinh(math.pi / 2)
    assert theta_splitting(eta, xi, tau, s, classical_arnold(1e-3)) == pytest.approx(want, abs=1e-10)


def test_partials_match_finite_differences():
    m = classical_arnold(1e-3)
    eta, xi, tau, d = 0.9, 0.7, -0.4, 1e-5
    p = theta_partials(eta, xi, tau, 1, m)
    f = lambda e, x, t: theta_splitting(e, x, t, 1, m)
    assert p.d_xi == pytest.approx((f(eta, xi + d, tau) - f(eta, xi - d, tau)) / (2 * d), abs=1e-8)
    assert p.d_tau == pytest.approx((f(eta, xi, tau + d) - f(eta, xi, tau - d)) / (2 * d), abs=1e-8)
    assert p.d_eta == pytest.approx((f(eta + d, xi, tau) - f(eta - d, xi, tau)) / (2 * d), abs=1e-7)


def test_interpolated_partials():
    m = classical_arnold(1e-3)
    rng = np.random.default_rng(0)
    for _ in range(10):
        eta, xi, tau = rng.uniform(0.3, 1.5), rng.uniform(0, 6), rng.uniform(-3, 3)
        a = theta_partials(eta, xi, tau, -1, m)
        b = theta_partials_interp(eta, xi, tau, -1, m)
        assert b.d_xi == pytest.approx(a.d_xi, abs=1e-11)
        assert b.d_tau == pytest.approx(a.d_tau, abs=1e-11)
        assert b.d_eta == pytest.approx(a.d_eta, abs=1e-8)


def test_half_loop_tends_to_full_derivatives():
    m = classical_arnold(1e-3)
    p = theta_partials(0.8, 1.0, 0.3, 1, m)
    dI, dH = half_loop_partials(0.8, 1.0, 0.3, 1, m, s_end=30.0)
    assert dI == pytest.approx(-p.d_xi, abs=1e-10)
    assert dH == pytest.approx(-p.d_tau, abs=1e-10)


def test_melnikov_grid_shape_and_error():
    g = melnikov_grid(0.8, "+", classical_arnold(1e-3), 5, 3)
    assert g.values.shape == (5, 3)
    assert g.error < 1e-9
    assert g.values[0, 1] == pytest.approx(theta_splitting(0.8, 0.0, 0.0, 1, classical_arnold(1e-3)))


@given(st.floats(-3, 3))
def test_bump_range_and_plateau(r):
    v = bump_psi(r)
    assert 0.0 <= v <= 1.0
    if abs(r) <= 0.5:
        assert v == 1.0
    if abs(r) >= 1:
        assert v == 0.0
    assert bump_psi(-r) == v


def test_bump_derivative_and_vector_path():
    r = np.linspace(-1.2, 1.2, 97)
    d = 1e-6
    fd = (bump_psi(r + d) - bump_psi(r - d)) / (2 * d)
    assert np.max(np.abs(bump_psi_prime(r) - fd)) < 1e-5
    assert all(bump_psi(float(x)) == pytest.approx(y, abs=1e-15) for x, y in zip(r, bump_psi(r)))


def test_zone_classification():
    m = resonant_arnold(1e-3, 0.25)
    assert classify_zone(0.1, m).k == ResonanceVector(1, 0)
    assert not classify_zone(0.8, m).resonant
    assert str(classify_zone(0.8, m)) == "NonResonant"


def test_overlapping_zones_rejected():
    extra = real_mode(0, 1, 0, 1.0) + real_mode(0, 2, 1, 1.0)
    with pytest.raises(OverlappingZones):
        ModelSpec(arnold_perturbation(extra=extra), 1e-3, beta=0.6)


def test_averaged_term_vanishes_far_from_resonance():
    m = resonant_arnold(1e-3, 0.25)
    assert boldface_H1(0.8, 1.0, 0.3, m) == 0.0
    # deep inside the zone only the cos(phi) coefficient survives
    assert boldface_H1(0.05, 1.0, 0.3, m) == pytest.approx(0.25 * math.cos(1.0), abs=1e-14)
    dI, dphi, dt = boldface_H1_partials(0.05, 1.0, 0.3, m)
    assert dphi == pytest.approx(-0.25 * math.sin(1.0)) and dt == 0.0 and dI == 0.0


def test_inverse_operator():
    m = classical_arnold(1e-3)
    f = {(1, 0): 0.5 + 0.1j, (1, 1): 0.2j, (0, 1): 1.0}
    g = apply_partial(inv_partial(f, 0.8, m), 0.8)
    for k in f:
        assert g[k] == pytest.approx(f[k])
    with pytest.raises(SmallDivisor):
        inv_partial({(1, -1): 1.0}, 1.0, m)
