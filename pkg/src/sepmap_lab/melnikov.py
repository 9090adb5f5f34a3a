"""Resonance bookkeeping, bump-filtered averages and splitting potentials.

Fourier tables are dicts ``{(k_phi, k_t): complex}`` for functions of the
rotor angle and time, ``f = sum f_k exp(i (k_phi phi + k_t t))``.

The splitting potential is evaluated mode by mode. Along the separatrix
``Gamma(eta, xi, s)`` with time ``s - tau`` a term with wave vector
``(k_q, k_phi, k_t)`` contributes

    exp(i (k_phi xi - k_t tau)) * A(eta),
    A(eta) = int [c(eta, p(s), cos q(s), sin q(s)) e^{i k_q q(s)} - c(eta, 0, 1, 0)] e^{i w s} ds

with ``w = k_phi eta + k_t``; only ``A`` needs quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .errors import OverlappingZones, SmallDivisor
from .geometry import SeparatrixBranch, pendulum_separatrix, separatrix_trig
from .hamiltonian import ModelSpec, TrigPerturbation, frequency_nu, saddle_linearization
from .quadrature import gk_integrate

Fourier = dict[tuple[int, int], complex]

QUAD_T = 30.0
QUAD_TOL = 1e-11


# ---------------------------------------------------------------- resonances

@dataclass(frozen=True, order=True)
class ResonanceVector:
    k_phi: int
    k_t: int

    def normalized(self) -> "ResonanceVector":
        """Sign-normalized: first nonzero component positive."""
        if self.k_phi < 0 or (self.k_phi == 0 and self.k_t < 0):
            return ResonanceVector(-self.k_phi, -self.k_t)
        return self

    def primitive(self) -> "ResonanceVector":
        g = math.gcd(self.k_phi, self.k_t)
        if g == 0:
            return self
        return ResonanceVector(self.k_phi // g, self.k_t // g).normalized()

    def divisor(self, I) -> float:
        return self.k_phi * frequency_nu(I) + self.k_t

    def __str__(self) -> str:
        return f"({self.k_phi},{self.k_t})"


@dataclass(frozen=True)
class ZoneLabel:
    kind: str  # "NonResonant" or "Resonant"
    k: ResonanceVector | None
    beta: float

    @property
    def resonant(self) -> bool:
        return self.kind == "Resonant"

    def __str__(self) -> str:
        return "NonResonant" if not self.resonant else f"Resonant{self.k}"


@lru_cache(maxsize=64)
def saddle_polynomials(pert: TrigPerturbation) -> dict[tuple[int, int], dict[int, complex]]:
    """Coefficients of ``H1(I, phi, 0, 0, t)`` as polynomials in ``I`` per mode."""
    out: dict[tuple[int, int], dict[int, complex]] = {}
    for (kq, kphi, kt), cd in pert.merged().items():
        for (a, b, c, d), z in cd.items():
            # p = 0, sin q = 0, cos q = 1, e^{i kq q} = 1 at the saddle
            if b or d:
                continue
            poly = out.setdefault((kphi, kt), {})
            poly[a] = poly.get(a, 0j) + z
    return {k: {a: z for a, z in poly.items() if abs(z) > 1e-15}
            for k, poly in out.items() if any(abs(z) > 1e-15 for z in poly.values())}


def saddle_modes(pert: TrigPerturbation, I: float, derivative: bool = False) -> Fourier:
    """Fourier table of ``H1`` (or its ``I``-derivative) restricted to ``p = q = 0``."""
    out: Fourier = {}
    for k, poly in saddle_polynomials(pert).items():
        if derivative:
            out[k] = sum(z * a * I ** (a - 1) for a, z in poly.items() if a)
        else:
            out[k] = sum(z * I ** a for a, z in poly.items())
    return out


@lru_cache(maxsize=64)
def harmonic_sets(pert: TrigPerturbation) -> tuple[set[ResonanceVector], set[ResonanceVector]]:
    """``(N, N2)``: sign-normalized harmonics of ``H1`` at the saddle and pairwise sums."""
    raw = [ResonanceVector(*k) for k in saddle_polynomials(pert) if k != (0, 0)]
    N = {k.normalized() for k in raw}
    N2 = set()
    for a in raw:
        for b in raw:
            s = ResonanceVector(a.k_phi + b.k_phi, a.k_t + b.k_t)
            if (s.k_phi, s.k_t) != (0, 0):
                N2.add(s.normalized())
    return N, N2


def _zone_interval(k: ResonanceVector, beta: float, window: tuple[float, float]):
    lo, hi = window
    if k.k_phi == 0:
        return (lo, hi) if abs(k.k_t) <= beta else None
    a = (-k.k_t - beta) / k.k_phi
    b = (-k.k_t + beta) / k.k_phi
    a, b = min(a, b), max(a, b)
    a, b = max(a, lo), min(b, hi)
    return (a, b) if a <= b else None


def resonant_intervals(model: ModelSpec) -> dict[ResonanceVector, list[tuple[float, float]]]:
    N, N2 = harmonic_sets(model.perturbation)
    out: dict[ResonanceVector, list[tuple[float, float]]] = {}
    for k in sorted(N | N2):
        iv = _zone_interval(k, model.beta, model.action_window)
        if iv is not None:
            out.setdefault(k.primitive(), []).append(iv)
    return out


def validate_zones(model: ModelSpec) -> None:
    """Raise ``OverlappingZones`` if two distinct primitive resonances share an action."""
    ivs = resonant_intervals(model)
    keys = sorted(ivs)
    for i, ka in enumerate(keys):
        for kb in keys[i + 1:]:
            for a0, a1 in ivs[ka]:
                for b0, b1 in ivs[kb]:
                    if max(a0, b0) <= min(a1, b1):
                        raise OverlappingZones(
                            f"resonant zones {ka} and {kb} overlap on [{max(a0, b0)}, {min(a1, b1)}]")


def classify_zone(I: float, model: ModelSpec) -> ZoneLabel:
    N, N2 = harmonic_sets(model.perturbation)
    hits = {k.primitive() for k in N | N2 if abs(k.divisor(I)) <= model.beta}
    if not hits:
        return ZoneLabel("NonResonant", None, model.beta)
    if len(hits) > 1:
        raise OverlappingZones(f"I={I} lies in several resonant zones: {sorted(hits)}")
    return ZoneLabel("Resonant", hits.pop(), model.beta)


# ---------------------------------------------------------------- bump and averages

def _f(x):
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)


def _f_scalar(x: float) -> float:
    return math.exp(-1.0 / x) if x > 0 else 0.0


def _bump_scalar(r: float) -> tuple[float, float]:
    x = min(max(2.0 * (1.0 - abs(r)), 0.0), 1.0)
    if x >= 1.0:
        return 1.0, 0.0
    if x <= 0.0:
        return 0.0, 0.0
    fx, g = _f_scalar(x), _f_scalar(1.0 - x)
    dpsi_dx = (fx / x ** 2 * g + fx * g / (1.0 - x) ** 2) / (fx + g) ** 2
    return fx / (fx + g), dpsi_dx * (-2.0 * math.copysign(1.0, r))


def bump_psi(r):
    """Smooth even bump: 1 on ``|r| <= 1/2``, 0 on ``|r| >= 1``."""
    if np.ndim(r) == 0:
        return _bump_scalar(float(r))[0]
    r = np.abs(np.asarray(r, dtype=float))
    x = np.clip(2.0 * (1.0 - r), 0.0, 1.0)
    fx, g = _f(x), _f(1.0 - x)
    out = fx / (fx + g)
    return float(out) if out.ndim == 0 else out


def bump_psi_prime(r):
    if np.ndim(r) == 0:
        return _bump_scalar(float(r))[1]
    r = np.asarray(r, dtype=float)
    x = np.clip(2.0 * (1.0 - np.abs(r)), 0.0, 1.0)
    inside = (x > 0) & (x < 1)
    xs = np.where(inside, x, 0.5)
    fx, g = _f(xs), _f(1.0 - xs)
    dfx, dg = fx / xs ** 2, g / (1.0 - xs) ** 2
    dpsi_dx = (dfx * g + fx * dg) / (fx + g) ** 2
    out = np.where(inside, dpsi_dx * (-2.0 * np.sign(r)), 0.0)
    return float(out) if out.ndim == 0 else out


def _weights(k: tuple[int, int], I: float, beta: float) -> tuple[float, float]:
    r = (k[0] * float(I) + k[1]) / beta
    # nu(I) = I, so d nu/dI = 1
    w, dw = _bump_scalar(r)
    return w, dw * k[0] / beta


def boldface_modes(pert: TrigPerturbation, I: float, beta: float, derivative: bool = False) -> Fourier:
    """Fourier table of ``Hbar1(I, ., .)``; with ``derivative`` its ``I``-derivative."""
    base = saddle_modes(pert, I)
    dbase = saddle_modes(pert, I, derivative=True) if derivative else {}
    out: Fourier = {}
    for k, z in base.items():
        w, dw = _weights(k, I, beta)
        if derivative:
            val = w * dbase.get(k, 0j) + dw * z
        else:
            val = w * z
        if val != 0:
            out[k] = val
    return out


def eval_fourier(f: Fourier, phi, t):
    if not f:
        return np.zeros(np.broadcast(np.asarray(phi), np.asarray(t)).shape) + 0.0
    keys = np.array(list(f.keys()))
    vals = np.array(list(f.values()))
    phi = np.asarray(phi, dtype=float)[..., None]
    t = np.asarray(t, dtype=float)[..., None]
    z = np.sum(vals * np.exp(1j * (keys[:, 0] * phi + keys[:, 1] * t)), axis=-1)
    return z.real if z.ndim else float(z.real)


def d_phi(f: Fourier) -> Fourier:
    return {k: 1j * k[0] * z for k, z in f.items() if k[0]}


def d_t(f: Fourier) -> Fourier:
    return {k: 1j * k[1] * z for k, z in f.items() if k[1]}


def boldface_H1(I: float, phi, t, model: ModelSpec):
    return eval_fourier(boldface_modes(model.perturbation, I, model.beta), phi, t)


def boldface_H1_frozen(I: float, phi, model: ModelSpec):
    """Time-frozen ``H1(I, phi) = Hbar1(I, phi, 0)``."""
    return boldface_H1(I, phi, 0.0, model)


def boldface_H1_partials(I: float, phi, t, model: ModelSpec) -> tuple:
    """``(d_I, d_phi, d_t)`` of ``Hbar1`` at one point."""
    m = boldface_modes(model.perturbation, I, model.beta)
    dm = boldface_modes(model.perturbation, I, model.beta, derivative=True)
    return eval_fourier(dm, phi, t), eval_fourier(d_phi(m), phi, t), eval_fourier(d_t(m), phi, t)


def xy_modes(pert: TrigPerturbation, I: float) -> Fourier:
    """Fourier table of ``d_xy H1`` at the saddle.

    With ``x, y`` the saddle eigen-coordinates normalized so that the pendulum
    energy is ``lam * x * y`` to second order, ``d_xy = (d_pp - d_qq) / (2 lam)``.
    """
    lam = saddle_linearization(I).lam
    out: Fourier = {}
    for (kq, kphi, kt), cd in pert.merged().items():
        for (a, b, c, d), z in cd.items():
            base = z * I ** a
            f_pp = 2 * base if (b == 2 and d == 0) else 0.0
            f_qq = 0.0
            if b == 0:
                # second q-derivative at 0 of cos^c q sin^d q e^{i kq q}
                if d == 0:
                    f_qq = base * (-c - kq * kq)
                elif d == 1:
                    f_qq = base * 2j * kq
                elif d == 2:
                    f_qq = base * 2.0
            val = (f_pp - f_qq) / (2 * lam)
            if val != 0:
                out[(kphi, kt)] = out.get((kphi, kt), 0j) + val
    return out


def boldface_H2(I: float, phi, t, model: ModelSpec):
    out: Fourier = {}
    for k, z in xy_modes(model.perturbation, I).items():
        w, _ = _weights(k, I, model.beta)
        if w:
            out[k] = w * z
    return eval_fourier(out, phi, t)


# ---------------------------------------------------------------- inner operator

def _divisor(k, I):
    return k[0] * frequency_nu(I) + k[1]


def apply_partial(f: Fourier, I: float, period: float = 2 * math.pi) -> Fourier:
    """``nu(I) d_phi + d_t`` on a table whose angles have the given period."""
    w = 2 * math.pi / period
    return {k: z * 1j * w * _divisor(k, I) for k, z in f.items()}


def inv_partial(f: Fourier, I: float, model: ModelSpec, period: float = 2 * math.pi) -> Fourier:
    """Inverse of ``nu(I) d_phi + d_t`` on modes with divisor above ``beta/2``."""
    w = 2 * math.pi / period
    out: Fourier = {}
    for k, z in f.items():
        if z == 0:
            continue
        div = _divisor(k, I)
        if abs(div) <= model.beta / 2:
            raise SmallDivisor(f"mode {k} has divisor {div} <= beta/2 at I={I}")
        out[k] = z / (1j * w * div)
    return out


def vartheta_modes(I: float, model: ModelSpec) -> Fourier:
    base = saddle_modes(model.perturbation, I)
    bar = boldface_modes(model.perturbation, I, model.beta)
    diff = {k: z - bar.get(k, 0j) for k, z in base.items()}
    return {k: -z for k, z in inv_partial(diff, I, model).items()}


def vartheta(I: float, phi, tau, sigma, model: ModelSpec):
    # the inner average does not see the loop, so sigma only labels the branch
    SeparatrixBranch.parse(sigma)
    return eval_fourier(vartheta_modes(I, model), phi, tau)


# ---------------------------------------------------------------- splitting potential

class ModeTable(NamedTuple):
    k_phi: np.ndarray
    k_t: np.ndarray
    A: np.ndarray
    dA: np.ndarray
    err: float


def _row_integrand(pert: TrigPerturbation, eta: float, sigma: int):
    rows = pert.rows
    omega = rows.kphi * eta + rows.kt
    saddle_val = np.where((rows.b == 0) & (rows.d == 0), 1.0, 0.0)
    a = rows.a
    ea = eta ** a
    dea = np.where(a > 0, a * eta ** np.maximum(a - 1, 0), 0.0)

    def f(s):
        p, cq, sq = separatrix_trig(sigma, s)
        _, q = pendulum_separatrix(sigma, s)
        shape = p[:, None] ** rows.b * cq[:, None] ** rows.c * sq[:, None] ** rows.d
        shape = shape * np.exp(1j * rows.kq * q[:, None]) - saddle_val
        ph = np.exp(1j * omega * s[:, None])
        g = rows.coef * shape * ph  # (nodes, rows)
        val = g * ea
        dval = g * dea + val * 1j * rows.kphi * s[:, None]
        out = np.concatenate([val.real, val.imag, dval.real, dval.imag], axis=1)
        return out.T
    return f


def _integrate_rows(pert: TrigPerturbation, eta: float, sigma: int, lo: float, hi: float):
    n = pert.rows.coef.size
    if n == 0 or hi <= lo:
        z = np.zeros(n, dtype=complex)
        return z, z.copy(), 0.0
    val, err = gk_integrate(_row_integrand(pert, eta, sigma), lo, hi, abstol=QUAD_TOL, initial=8)
    A = val[:n] + 1j * val[n:2 * n]
    dA = val[2 * n:3 * n] + 1j * val[3 * n:]
    return A, dA, err


@lru_cache(maxsize=4096)
def _mode_table_cached(pert: TrigPerturbation, eta: float, sigma: int, lo: float, hi: float) -> ModeTable:
    rows = pert.rows
    if lo < 0 < hi:
        A1, d1, e1 = _integrate_rows(pert, eta, sigma, lo, 0.0)
        A2, d2, e2 = _integrate_rows(pert, eta, sigma, 0.0, hi)
        A, dA, err = A1 + A2, d1 + d2, e1 + e2
    else:
        A, dA, err = _integrate_rows(pert, eta, sigma, lo, hi)
    return ModeTable(rows.kphi, rows.kt, A, dA, err)


def mode_table(pert: TrigPerturbation, eta: float, sigma, lo: float = -QUAD_T, hi: float = QUAD_T) -> ModeTable:
    return _mode_table_cached(pert, float(eta), int(SeparatrixBranch.parse(sigma)), float(lo), float(hi))


class ThetaPartials(NamedTuple):
    d_xi: float
    d_tau: float
    d_eta: float


def _combine(tab: ModeTable, xi, tau, factor):
    ph = np.exp(1j * (np.multiply.outer(np.asarray(xi, dtype=float), tab.k_phi)
                      - np.multiply.outer(np.asarray(tau, dtype=float), tab.k_t)))
    return np.sum(factor * ph, axis=-1).real


def theta_splitting(eta: float, xi, tau, sigma, model: ModelSpec, return_error: bool = False):
    """Splitting potential of the generalized Arnold model.

    The time argument along the loop is ``s - tau`` when the pendulum sits at
    separatrix time ``s``; the saddle subtraction is evaluated at the same
    rotor angle ``xi + eta*s`` so each integrand decays exponentially.
    """
    tab = mode_table(model.perturbation, eta, sigma)
    val = _combine(tab, xi, tau, tab.A)
    val = float(val) if np.ndim(val) == 0 else val
    return (val, tab.err) if return_error else val


def theta_partials(eta: float, xi, tau, sigma, model: ModelSpec) -> ThetaPartials:
    tab = mode_table(model.perturbation, eta, sigma)
    d_xi = _combine(tab, xi, tau, 1j * tab.k_phi * tab.A)
    d_tau = _combine(tab, xi, tau, -1j * tab.k_t * tab.A)
    d_eta = _combine(tab, xi, tau, tab.dA)
    conv = (lambda v: float(v)) if np.ndim(d_xi) == 0 else (lambda v: v)
    return ThetaPartials(conv(d_xi), conv(d_tau), conv(d_eta))


def half_loop_partials(eta: float, xi: float, tau: float, sigma, model: ModelSpec,
                       s_end: float = 0.0) -> tuple[float, float]:
    """Integrals over ``s in (-inf, s_end]`` of ``-d_phi`` and ``d_t`` of the loop part of H1.

    These are the first-order changes of the action and of ``H0 + eps*H1``
    (per unit ``eps``) accumulated since the orbit left the saddle.
    """
    tab = mode_table(model.perturbation, eta, sigma, -QUAD_T, s_end)
    dI = _combine(tab, xi, tau, -1j * tab.k_phi * tab.A)
    dH = _combine(tab, xi, tau, 1j * tab.k_t * tab.A)
    return float(dI), float(dH)


@dataclass(frozen=True)
class SplittingPotentialGrid:
    eta: float
    sigma: SeparatrixBranch
    xi: np.ndarray
    tau: np.ndarray
    values: np.ndarray  # shape (n_xi, n_tau)
    error: float


def melnikov_grid(eta: float, sigma, model: ModelSpec, nxi: int = 16, ntau: int = 16,
                  tau_range: tuple[float, float] = (-math.pi, math.pi)) -> SplittingPotentialGrid:
    """Tabulate the potential on a closed ``[0, 2pi] x tau_range`` grid."""
    xi = np.linspace(0.0, 2 * math.pi, nxi)
    tau = np.linspace(*tau_range, ntau)
    tab = mode_table(model.perturbation, eta, sigma)
    X, T = np.meshgrid(xi, tau, indexing="ij")
    vals = _combine(tab, X, T, tab.A)
    return SplittingPotentialGrid(float(eta), SeparatrixBranch.parse(sigma), xi, tau, vals, tab.err)


# ---------------------------------------------------------------- interpolated partials

INTERP_STEP = 1.0 / 512


def _hermite(eta: float, pert: TrigPerturbation, sigma: int, step: float):
    """Cubic Hermite interpolant of the mode amplitudes and its ``eta``-derivative.

    Nodes sit on the lattice ``step * Z`` so the cache is shared across calls;
    the interpolant is C^1 and its derivative is used for ``d_eta`` so the
    triple of partials stays the gradient of one function.
    """
    j = math.floor(eta / step)
    e0, e1 = j * step, (j + 1) * step
    t0 = mode_table(pert, e0, sigma)
    t1 = mode_table(pert, e1, sigma)
    u = (eta - e0) / step
    h00 = 2 * u ** 3 - 3 * u ** 2 + 1
    h10 = u ** 3 - 2 * u ** 2 + u
    h01 = -2 * u ** 3 + 3 * u ** 2
    h11 = u ** 3 - u ** 2
    A = h00 * t0.A + h10 * step * t0.dA + h01 * t1.A + h11 * step * t1.dA
    d00 = (6 * u ** 2 - 6 * u) / step
    d10 = 3 * u ** 2 - 4 * u + 1
    d01 = -d00
    d11 = 3 * u ** 2 - 2 * u
    dA = d00 * t0.A + d10 * t0.dA + d01 * t1.A + d11 * t1.dA
    return ModeTable(t0.k_phi, t0.k_t, A, dA, t0.err + t1.err)


def theta_partials_interp(eta: float, xi, tau, sigma, model: ModelSpec,
                          step: float = INTERP_STEP) -> ThetaPartials:
    """``theta_partials`` from a lattice of exact tables (interpolation error ~1e-12)."""
    tab = _hermite(float(eta), model.perturbation, int(SeparatrixBranch.parse(sigma)), step)
    d_xi = _combine(tab, xi, tau, 1j * tab.k_phi * tab.A)
    d_tau = _combine(tab, xi, tau, -1j * tab.k_t * tab.A)
    d_eta = _combine(tab, xi, tau, tab.dA)
    conv = (lambda v: float(v)) if np.ndim(d_xi) == 0 else (lambda v: v)
    return ThetaPartials(conv(d_xi), conv(d_tau), conv(d_eta))
