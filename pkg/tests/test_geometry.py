from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sepmap_lab.geometry import (SeparatrixBranch, chi, gamma_full, kappa, kappa_at, mu,
                                 pendulum_separatrix, separatrix_rel, separatrix_time, separatrix_trig)
from sepmap_lab.hamiltonian import pendulum_energy

branches = st.sampled_from([+1, -1])
times = st.floats(-25, 25, allow_nan=False)


def test_branch_parse():
    assert SeparatrixBranch.parse("+") is SeparatrixBranch.PLUS
    assert SeparatrixBranch.parse(-1) is SeparatrixBranch.MINUS
    assert str(SeparatrixBranch.MINUS) == "-"
    with pytest.raises(ValueError):
        SeparatrixBranch.parse("0")


@given(branches, times)
def test_separatrix_has_zero_energy(s, t):
    p, cq, _ = separatrix_trig(s, t)
    assert p * p / 2 + cq - 1 == pytest.approx(0.0, abs=1e-14)


@given(branches, st.floats(-8, 8, allow_nan=False))
def test_separatrix_solves_pendulum_equations(s, t):
    d = 1e-5
    p0, q0 = pendulum_separatrix(s, t)
    pp, qp = pendulum_separatrix(s, t + d)
    pm, qm = pendulum_separatrix(s, t - d)
    assert (qp - qm) / (2 * d) == pytest.approx(p0, abs=1e-8)
    assert (pp - pm) / (2 * d) == pytest.approx(math.sin(q0), abs=1e-8)


@given(branches, st.floats(-15, 15, allow_nan=False))
def test_separatrix_time_inverts_q(s, t):
    _, q = pendulum_separatrix(s, t)
    assert separatrix_time(q, s) == pytest.approx(t, abs=1e-9 * math.cosh(t))


@given(branches, times)
def test_trig_form_matches_angles(s, t):
    p, q = pendulum_separatrix(s, t)
    p2, cq, sq = separatrix_trig(s, t)
    assert p2 == pytest.approx(p, abs=1e-15)
    assert cq == pytest.approx(math.cos(q), abs=1e-12)
    assert sq == pytest.approx(math.sin(q), abs=1e-12)


def test_rel_form_tends_to_saddle():
    for s in (+1, -1):
        for t in (-30.0, 30.0):
            p, q = separatrix_rel(s, t)
            assert abs(p) < 1e-12 and abs(q) < 1e-12


def test_gamma_full_rotor_phase():
    g = gamma_full(0.7, 1.0, 2.0, +1)
    assert g.phi == pytest.approx(1.0 + 0.7 * 2.0)
    assert pendulum_energy(g.p, g.q) == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("s", [+1, -1])
def test_gluing_constants(s):
    assert mu(0.4, s) == pytest.approx(0.0, abs=1e-12)
    assert chi(0.4, s, 1.3) == pytest.approx(0.0, abs=1e-12)
    # p and q - saddle both behave like 4 e^{-|t|}; eigen-projections give 32
    assert kappa(0.0, s) == pytest.approx(1 / 32, rel=1e-9)
    assert kappa_at(0.0, s, 20.0) == pytest.approx(kappa_at(0.0, s, 30.0), rel=1e-6)
