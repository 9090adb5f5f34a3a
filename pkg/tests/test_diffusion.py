from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from sepmap_lab.diffusion import (WalkSpec, drift_variance_from_increments, empirical_drift_variance,
                                  ks_distance, melnikov_variance, normal_cdf, sample_stream,
                                  sign_words, signs_at, simulate_ensemble, simulate_paths,
                                  summarize, walk_increments, walk_step)
from sepmap_lab.errors import InsufficientData, WrongZone
from sepmap_lab.hamiltonian import classical_arnold, resonant_arnold


def test_n_steps_is_exact_for_decimal_delta():
    assert WalkSpec.constant(1, 0, 0.01).n_steps == 10_000
    assert WalkSpec.constant(1, 0, 0.02, s=2.0).n_steps == 5_000
    with pytest.raises(ValueError):
        WalkSpec.constant(1, 0, 2.0)


def test_walk_step():
    spec = WalkSpec.constant(2.0, 0.5, 0.1)
    assert walk_step(1.0, spec, 1) == pytest.approx(1.0 + 0.2 + 0.005)
    assert walk_step(1.0, spec, -1) == pytest.approx(1.0 - 0.2 + 0.005)
    with pytest.raises(ValueError):
        walk_step(1.0, spec, 0)


def test_sign_bits_follow_raw_words():
    words = sign_words(7, [3], 130)
    raw = np.random.Philox(key=(7 << 64) | 3).random_raw(3)
    assert (words[0] == raw).all()
    bits = np.unpackbits(raw.view(np.uint8), bitorder="little")
    expected = 1.0 - 2.0 * bits[:130]
    got = np.array([signs_at(words, j)[0] for j in range(130)])
    assert (got == expected).all()


def test_streams_are_keyed_by_index():
    spec = WalkSpec.constant(1.0, 0.0, 0.1)
    a = simulate_paths(spec, 50, seed=1)
    b = simulate_paths(spec, 20, seed=1)
    assert (a[:20] == b).all()
    assert not (simulate_paths(spec, 20, seed=2) == b).all()
    with pytest.raises(ValueError):
        sample_stream(-1, 0)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 3), st.floats(-2, 2), st.floats(-1, 1))
def test_constant_walk_moments(sigma, b, eta0):
    # eta_n = eta0 + b s + sigma delta * (sum of signs): mean and variance are exact
    spec = WalkSpec.constant(sigma, b, 0.1, eta0)
    x = simulate_paths(spec, 2000, seed=0)
    n = x.size
    assert abs(np.mean(x) - (eta0 + b)) < 5 * sigma / math.sqrt(n)
    assert abs(np.var(x, ddof=1) / sigma ** 2 - 1) < 5 * math.sqrt(2 / n)


def test_walk_values_lie_on_lattice():
    spec = WalkSpec.constant(1.0, 0.0, 0.25)
    x = simulate_paths(spec, 100, seed=3)
    k = x / 0.25
    assert np.allclose(k, np.round(k)) and np.all(np.round(k) % 2 == 0)


def test_normal_cdf_against_scipy():
    x = np.linspace(-6, 6, 101)
    assert normal_cdf(x, 0.3, 2.0) == pytest.approx(stats.norm.cdf(x, 0.3, math.sqrt(2.0)), abs=1e-15)


def test_ks_against_scipy():
    rng = np.random.default_rng(0)
    x = rng.normal(0.2, 1.0, 3000)
    ours = ks_distance(x, lambda v: normal_cdf(v))
    assert ours == pytest.approx(stats.kstest(x, "norm").statistic, abs=1e-14)


def test_summary_histogram():
    s = summarize(np.array([0.0, 1.0, 1.0, 2.0]), (1.0, 1.0), bins=2)
    assert s.counts.tolist() == [1, 3]
    assert s.mean == 1.0 and s.variance == pytest.approx(2 / 3)
    with pytest.raises(ValueError):
        simulate_ensemble(WalkSpec.constant(1, 0, 0.1), 10, 0)


def test_ensemble_rejects_varying_coefficients():
    spec = WalkSpec(lambda e: 1 + 0 * e, lambda e: np.sin(e), 0.1)
    with pytest.raises(ValueError):
        simulate_ensemble(spec, 200, 0)


def test_estimator_on_exact_two_point_increments():
    eta = np.linspace(0, 1, 4000, endpoint=False)
    d = 0.1 * np.where(np.arange(4000) % 2 == 0, 1.0, -1.0) + 0.3 * 0.01
    est = drift_variance_from_increments(eta, d, 0.1, 4)
    for b in est:
        assert b.b_hat == pytest.approx(0.3, abs=1e-9)
        assert b.sigma_hat == pytest.approx(1.0, rel=1e-3)
        assert b.count == 1000 and not b.flagged


def test_sparse_bins_flagged():
    est = drift_variance_from_increments(np.array([0.0, 0.1, 5.0]), np.array([0.1, -0.1, 0.2]), 0.1,
                                         np.array([0.0, 1.0, 2.0, 6.0]))
    assert not est[0].flagged and est[1].flagged and est[2].flagged


def test_drift_standard_error_is_calibrated():
    spec = WalkSpec.constant(1.0, 0.5, 0.1, s=1.0)
    zs = []
    for seed in range(40):
        x, dx = walk_increments(spec, 200, seed)
        b = drift_variance_from_increments(x, dx, 0.1, 1)[0]
        zs.append((b.b_hat - 0.5) / b.b_se)
    assert 0.6 < np.std(zs) < 1.4


def test_empirical_requires_long_orbit():
    with pytest.raises(InsufficientData):
        empirical_drift_variance([], 4, eps=0.1)


def test_melnikov_variance_closed_form():
    # d_xi Theta = -a sin(xi) with a = 2 pi eta / sinh(pi eta / 2); variance a^2/2
    m = classical_arnold(1e-3)
    for eta in (0.5, 1.2):
        a = 2 * math.pi * eta / math.sinh(math.pi * eta / 2)
        assert melnikov_variance(eta, m) == pytest.approx(a * a / 2, rel=1e-10)
    with pytest.raises(WrongZone):
        melnikov_variance(0.05, resonant_arnold(1e-3, 0.25))
