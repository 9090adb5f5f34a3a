"""Random-walk model of the slow action, Monte Carlo ensembles and drift/variance estimation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import InsufficientData, WrongZone
from .hamiltonian import ModelSpec
from .melnikov import classify_zone, theta_partials

CHUNK = 8192


@dataclass(frozen=True)
class WalkSpec:
    sigma_fn: Callable
    b_fn: Callable
    delta: float
    eta0: float = 0.0
    s: float = 1.0

    def __post_init__(self):
        if not self.delta > 0 or not self.s > 0:
            raise ValueError("delta and s must be positive")
        if self.n_steps < 1:
            raise ValueError("s * delta^-2 must be at least 1")

    @property
    def n_steps(self) -> int:
        # guard against 1/0.01**2 = 9999.999...
        return int(math.floor(self.s / self.delta ** 2 * (1 + 1e-12)))

    @classmethod
    def constant(cls, sigma: float, b: float, delta: float, eta0: float = 0.0, s: float = 1.0) -> "WalkSpec":
        return cls(_Const(sigma), _Const(b), delta, eta0, s)


class _Const:
    """Constant coefficient that broadcasts over arrays and reports its value."""

    def __init__(self, value: float):
        self.value = float(value)

    def __call__(self, eta):
        return np.zeros_like(np.asarray(eta, dtype=float)) + self.value

    def __repr__(self) -> str:
        return f"const({self.value!r})"


def walk_step(eta, spec: WalkSpec, omega):
    """``eta + sigma(eta) delta omega + b(eta) delta^2``."""
    om = np.asarray(omega)
    if not np.all((om == 1) | (om == -1)):
        raise ValueError("omega must be +1 or -1")
    d = spec.delta
    out = eta + spec.sigma_fn(eta) * d * om + spec.b_fn(eta) * d * d
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------- random signs

def sample_stream(seed: int, index: int) -> np.random.Philox:
    """Counter-based stream for one sample, keyed on ``(seed, index)``."""
    if seed < 0 or index < 0:
        raise ValueError("seed and index must be non-negative")
    return np.random.Philox(key=(int(seed) << 64) | int(index))


def sign_words(seed: int, indices: Sequence[int], n_steps: int) -> np.ndarray:
    """Raw 64-bit words, one row per sample; step ``j`` uses bit ``j % 64`` of word ``j // 64``."""
    n_words = (n_steps + 63) // 64
    out = np.empty((len(indices), n_words), dtype=np.uint64)
    for r, i in enumerate(indices):
        out[r] = sample_stream(seed, i).random_raw(n_words)
    return out


def signs_at(words: np.ndarray, j: int) -> np.ndarray:
    bit = (words[:, j // 64] >> np.uint64(j % 64)) & np.uint64(1)
    return 1.0 - 2.0 * bit.astype(float)


def simulate_paths(spec: WalkSpec, n_samples: int, seed: int) -> np.ndarray:
    """Final values ``eta_{n_delta}`` of independent walks, in sample-index order."""
    out = np.empty(n_samples)
    d = spec.delta
    for start in range(0, n_samples, CHUNK):
        idx = range(start, min(start + CHUNK, n_samples))
        words = sign_words(seed, idx, spec.n_steps)
        eta = np.full(len(idx), float(spec.eta0))
        for j in range(spec.n_steps):
            eta = eta + spec.sigma_fn(eta) * d * signs_at(words, j) + spec.b_fn(eta) * d * d
        out[start:start + len(idx)] = eta
    return out


def walk_increments(spec: WalkSpec, n_samples: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Every ``(eta_n, eta_{n+1} - eta_n)`` pair of ``n_samples`` walks, step-major order."""
    words = sign_words(seed, range(n_samples), spec.n_steps)
    d = spec.delta
    eta = np.full(n_samples, float(spec.eta0))
    starts = np.empty((spec.n_steps, n_samples))
    incs = np.empty((spec.n_steps, n_samples))
    for j in range(spec.n_steps):
        new = eta + spec.sigma_fn(eta) * d * signs_at(words, j) + spec.b_fn(eta) * d * d
        starts[j], incs[j] = eta, new - eta
        eta = new
    return starts.ravel(), incs.ravel()


# ---------------------------------------------------------------- summaries

def normal_cdf(x, mean: float = 0.0, var: float = 1.0) -> np.ndarray:
    z = (np.asarray(x, dtype=float) - mean) / math.sqrt(2.0 * var)
    return np.array([0.5 * math.erfc(-v) for v in z.ravel()]).reshape(z.shape)


def ks_distance(samples, cdf) -> float:
    """Two-sided Kolmogorov-Smirnov statistic of ``samples`` against ``cdf``."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    F = cdf(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


@dataclass(frozen=True)
class EnsembleSummary:
    n_samples: int
    bin_edges: np.ndarray
    counts: np.ndarray
    mean: float
    variance: float
    ks_distance: float
    target: tuple[float, float]


def summarize(x: np.ndarray, target: tuple[float, float], bins: int = 64) -> EnsembleSummary:
    mean_t, var_t = target
    ks = ks_distance(x, lambda v: normal_cdf(v, mean_t, var_t))
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, bins + 1)
    counts = np.histogram(x, edges)[0]
    return EnsembleSummary(int(x.size), edges, counts, float(np.mean(x)), float(np.var(x, ddof=1)),
                           ks, (float(mean_t), float(var_t)))


def _const_value(fn, name: str) -> float:
    if isinstance(fn, _Const):
        return fn.value
    vals = np.asarray(fn(np.linspace(-10, 10, 41)), dtype=float)
    if np.ptp(vals) != 0:
        raise ValueError(f"the Gaussian reference needs a constant {name}")
    return float(vals[0])


def simulate_ensemble(spec: WalkSpec, n_samples: int, seed: int, bins: int = 64) -> EnsembleSummary:
    """Ensemble of walks compared with ``N(eta0 + b s, sigma^2 s)`` for constant coefficients."""
    if n_samples < 100:
        raise ValueError("need at least 100 samples")
    sigma = _const_value(spec.sigma_fn, "sigma")
    b = _const_value(spec.b_fn, "b")
    x = simulate_paths(spec, n_samples, seed)
    return summarize(x, (spec.eta0 + b * spec.s, sigma ** 2 * spec.s), bins)


# ---------------------------------------------------------------- estimation

@dataclass(frozen=True)
class BinEstimate:
    lo: float
    hi: float
    count: int
    b_hat: float
    sigma_hat: float
    b_se: float
    sigma_se: float
    flagged: bool = False

    @property
    def center(self) -> float:
        return 0.5 * (self.lo + self.hi)


def _edges(values: np.ndarray, bin_spec) -> np.ndarray:
    if np.ndim(bin_spec) == 0:
        lo, hi = float(values.min()), float(values.max())
        if lo == hi:
            lo, hi = lo - 0.5, hi + 0.5
        return np.linspace(lo, hi * (1 + 1e-12) + 1e-300, int(bin_spec) + 1)
    return np.asarray(bin_spec, dtype=float)


def drift_variance_from_increments(eta: np.ndarray, d_eta: np.ndarray, eps: float, bin_spec=10
                                   ) -> list[BinEstimate]:
    """Per-bin ``b = mean/eps^2`` and ``sigma = stdev/eps`` of increments binned by start value.

    Standard errors: ``stdev/(eps^2 sqrt n)`` for the drift; for ``sigma`` the
    exact variance of the sample variance, ``(m4 - (n-3)/(n-1) s^4)/n``,
    carried through ``d s = d s^2 / (2 s)``.
    """
    eta = np.asarray(eta, dtype=float)
    d_eta = np.asarray(d_eta, dtype=float)
    edges = _edges(eta, bin_spec)
    which = np.searchsorted(edges, eta, side="right") - 1
    out = []
    for j in range(len(edges) - 1):
        x = d_eta[which == j]
        n = x.size
        if n < 2:
            out.append(BinEstimate(edges[j], edges[j + 1], n, math.nan, math.nan, math.nan, math.nan, True))
            continue
        m = float(np.mean(x))
        c = x - m
        s2 = float(np.sum(c * c) / (n - 1))
        m4 = float(np.mean(c ** 4))
        var_s2 = max(m4 - (n - 3) / (n - 1) * s2 * s2, 0.0) / n
        s = math.sqrt(s2)
        sig_se = math.sqrt(var_s2) / (2 * s) if s > 0 else 0.0
        out.append(BinEstimate(edges[j], edges[j + 1], n, m / eps ** 2, s / eps,
                               s / (eps ** 2 * math.sqrt(n)), sig_se / eps))
    return out


def empirical_drift_variance(orbit, bin_spec=10, eps: float | None = None, model: ModelSpec | None = None
                             ) -> list[BinEstimate]:
    """Binned drift and spread of ``eta`` increments along a separatrix-map orbit."""
    states = [r[0] if isinstance(r, tuple) else r for r in orbit]
    if len(states) < 1000:
        raise InsufficientData(f"orbit has {len(states)} states; need at least 1000")
    if eps is None:
        if model is None:
            raise ValueError("give eps or model")
        eps = model.epsilon
    eta = np.array([s.eta for s in states])
    return drift_variance_from_increments(eta[:-1], np.diff(eta), eps, bin_spec)


def melnikov_variance(eta: float, model: ModelSpec, sigma=1, n: int = 64) -> float:
    """Mean of ``(d_xi Theta)^2`` over the ``(xi, tau)`` torus on an ``n x n`` grid."""
    if classify_zone(eta, model).resonant:
        raise WrongZone(f"eta = {eta} is resonant")
    g = 2 * math.pi * np.arange(n) / n
    X, T = np.meshgrid(g, g, indexing="ij")
    d = theta_partials(eta, X, T, sigma, model).d_xi
    return float(np.mean(d * d) - np.mean(d) ** 2)
