"""Separatrix maps: the first-order reference map, the non-resonant map and the resonant map.

All maps are written for the Arnold family, where ``lambda = 1``, ``mu = 0``
and ``kappa`` is constant. Angles and time are 2*pi-periodic; the integer
``bar_t`` counts the unit time steps spent near the saddle and the returned
``tau`` is reduced into ``(-pi, pi]`` by a whole number of time periods.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .errors import (NoAdmissibleTime, NonConvergence, OutOfNeighborhood, WindowViolation,
                     WrongZone, ZeroK0)
from .geometry import SeparatrixBranch, kappa
from .hamiltonian import ModelSpec, energy_E, wrap_angle
from .melnikov import (ResonanceVector, ZoneLabel, boldface_H1_frozen, boldface_H1_partials,
                       classify_zone, theta_partials_interp)

WINDOW_C = 0.5
WINDOW_A = 0.5
DAMPING = 0.5
MAX_ITERS = 100
SOLVER_TOL = 1e-12
NEIGHBORHOOD = 0.5


@dataclass(frozen=True)
class SepMapState:
    eta: float
    xi: float
    h: float
    tau: float
    sigma: SeparatrixBranch

    def __post_init__(self):
        object.__setattr__(self, "sigma", SeparatrixBranch.parse(self.sigma))

    def as_tuple(self) -> tuple:
        return (self.eta, self.xi, self.h, self.tau, int(self.sigma))

    @classmethod
    def parse(cls, text: str) -> "SepMapState":
        parts = [s.strip() for s in text.split(",")]
        if len(parts) != 5:
            raise ValueError("state must be 'eta,xi,h,tau,sigma'")
        return cls(*map(float, parts[:4]), SeparatrixBranch.parse(parts[4]))


@dataclass(frozen=True)
class MapDiagnostics:
    w_value: float
    zone: ZoneLabel
    bar_t: int
    fixed_point_iters: int
    residual: float
    regime: str = ""


def _kappa(sigma) -> float:
    # kappa is independent of the action for the Arnold family
    return kappa(0.0, sigma)


def reduce_tau(x: float) -> float:
    return math.pi - ((math.pi - x) % (2 * math.pi))


@contextmanager
def window_constants(c: float = WINDOW_C, a: float = WINDOW_A):
    """Temporarily change the default window constants ``c`` and ``a``."""
    global WINDOW_C, WINDOW_A
    if not (0 < c < 1 and a > 0):
        raise ValueError("need 0 < c < 1 and a > 0")
    old = WINDOW_C, WINDOW_A
    WINDOW_C, WINDOW_A = c, a
    try:
        yield
    finally:
        WINDOW_C, WINDOW_A = old


def w_window(model: ModelSpec, c: float | None = None, a: float | None = None) -> tuple[float, float]:
    c = WINDOW_C if c is None else c
    a = WINDOW_A if a is None else a
    eps = model.epsilon
    return eps ** (1 + a) / c, c * eps


def in_window(w: float, model: ModelSpec, c: float | None = None, a: float | None = None) -> bool:
    lo, hi = w_window(model, c, a)
    return lo < abs(w) < hi


def w_nonres(eta_star: float, h_star: float, bound: float = NEIGHBORHOOD) -> float:
    """Energy above the separatrix level, with ``g`` truncated to the identity."""
    w = h_star - float(energy_E(eta_star))
    if abs(w) >= bound:
        raise OutOfNeighborhood(f"|h - E(eta)| = {abs(w):.3g} exceeds {bound}")
    return w


def w0_res(eta_star: float, h_star: float, xi_star: float, model: ModelSpec,
           bound: float = NEIGHBORHOOD) -> float:
    w = w_nonres(eta_star, h_star, bound)
    if model.epsilon == 0:
        return w
    return w - model.epsilon * float(boldface_H1_frozen(eta_star, xi_star, model))


def select_bar_t(state: SepMapState | None, w: float, model: ModelSpec | None = None,
                 c: float | None = None, a: float | None = None, lam: float = 1.0) -> int:
    """Integer ``bar_t`` nearest ``-log|w|/lam`` with ``c < |w| e^{lam bar_t} < 1/c``.

    Ties go to the even integer. With a model the ``eps`` window on ``|w|``
    is checked first.
    """
    if model is not None and not in_window(w, model, c, a):
        lo, hi = w_window(model, c, a)
        raise WindowViolation(f"|w| = {abs(w):.3g} outside ({lo:.3g}, {hi:.3g})")
    if w == 0:
        raise NoAdmissibleTime("w = 0")
    c = WINDOW_C if c is None else c
    lo, hi = min(c, 1 / c), max(c, 1 / c)
    x = -math.log(abs(w)) / lam
    base = int(np.rint(x))
    for n in sorted({base, base - 1, base + 1}, key=lambda m: (abs(m - x), m % 2)):
        if lo < abs(w) * math.exp(lam * n) < hi:
            return n
    raise NoAdmissibleTime(f"no integer time for |w| = {abs(w):.3g} and c = {c}")


# ---------------------------------------------------------------- fixed point

def _solve(F, x0: np.ndarray, damping: float = DAMPING, tol: float = SOLVER_TOL,
           max_iters: int = MAX_ITERS) -> tuple[np.ndarray, int, float]:
    x = np.array(x0, dtype=float)
    for it in range(1, max_iters + 1):
        fx = F(x)
        res = float(np.max(np.abs(fx - x)))
        if res < tol:
            return fx, it, res
        x = x + damping * (fx - x)
    raise NonConvergence(f"fixed point residual {res:.3g} after {max_iters} iterations")


class Kicks(NamedTuple):
    eta_star: float
    h_star: float
    d_eta: float
    iters: int
    residual: float


def kicks_nonresonant(state: SepMapState, model: ModelSpec) -> Kicks:
    """Solve the action and energy lines ``x* = x - eps d Theta(eta*, xi, tau)`` only."""
    eps = model.epsilon
    s = state

    def F(x):
        p = theta_partials_interp(x[0], s.xi, s.tau, s.sigma, model)
        return np.array([s.eta - eps * p.d_xi, s.h - eps * p.d_tau])

    if eps == 0:
        return Kicks(s.eta, s.h, 0.0, 0, 0.0)
    x, it, res = _solve(F, np.array([s.eta, s.h]))
    d_eta = theta_partials_interp(x[0], s.xi, s.tau, s.sigma, model).d_eta
    return Kicks(float(x[0]), float(x[1]), float(d_eta), it, res)


def _finish(state, model, eta_s, h_s, xi_s, tau_raw, w, iters, res, zone, regime, check):
    sigma_s = SeparatrixBranch(int(state.sigma) * (1 if w > 0 else -1))
    bar_t = select_bar_t(state, w, model if check else None)
    new = SepMapState(float(eta_s), float(wrap_angle(xi_s)), float(h_s), reduce_tau(tau_raw), sigma_s)
    return new, MapDiagnostics(float(w), zone, bar_t, iters, res, regime)


def map_nonresonant(state: SepMapState, model: ModelSpec, check_zone: bool = True,
                    check_window: bool = True) -> tuple[SepMapState, MapDiagnostics]:
    """Non-resonant separatrix map.

    ``eta*, h*`` receive the kicks ``-eps d_xi Theta, -eps d_tau Theta`` at
    ``(eta*, xi, tau)``; then ``xi* = xi - eta* log|kappa w| + eps d_eta Theta``
    and ``tau* = tau + log|kappa w|`` with ``w = h* - eta*^2/2``. The map is
    generated by ``eta* xi + h* tau + eps Theta + w log|kappa w| - w`` and is
    therefore exactly symplectic.
    """
    zone = classify_zone(state.eta, model)
    if check_zone and zone.resonant:
        raise WrongZone(f"eta = {state.eta} lies in the resonant zone {zone}")
    k = kicks_nonresonant(state, model)
    w = w_nonres(k.eta_star, k.h_star)
    if w == 0:
        raise WindowViolation("w = 0")
    L = math.log(abs(_kappa(state.sigma) * w))
    xi_s = state.xi - k.eta_star * L + model.epsilon * k.d_eta
    tau_raw = state.tau + L
    return _finish(state, model, k.eta_star, k.h_star, xi_s, tau_raw, w, k.iters, k.residual,
                   zone, "nonres", check_window)


def map_treschev(state: SepMapState, model: ModelSpec, check_window: bool = True
                 ) -> tuple[SepMapState, MapDiagnostics]:
    """First-order reference map with the averaged saddle term inside ``w0``.

    ``w0 = h* - E(eta*) - eps Hbar1(eta*, xi + eta* tau)``; every line carries the
    matching ``d w0 log|kappa w0|`` term.
    """
    eps = model.epsilon
    s = state
    kap = _kappa(s.sigma)
    zone = classify_zone(s.eta, model)

    def parts(es, hs):
        ph = s.xi + es * s.tau
        if eps:
            dI, dphi, _ = boldface_H1_partials(es, ph, 0.0, model)
            hb = float(boldface_H1_frozen(es, ph, model))
        else:
            dI = dphi = hb = 0.0
        w0 = hs - es * es / 2 - eps * hb
        if w0 == 0:
            raise WindowViolation("w0 = 0")
        L = math.log(abs(kap * w0))
        dw = {"xi": -eps * dphi, "tau": -eps * es * dphi, "eta": -es - eps * (dI + s.tau * dphi)}
        return w0, L, dw

    def F(x):
        es, hs = x
        _, L, dw = parts(es, hs)
        p = theta_partials_interp(es, s.xi, s.tau, s.sigma, model) if eps else None
        ke = eps * p.d_xi if eps else 0.0
        kh = eps * p.d_tau if eps else 0.0
        return np.array([s.eta - ke - dw["xi"] * L, s.h - kh - dw["tau"] * L])

    x, it, res = _solve(F, np.array([s.eta, s.h]))
    es, hs = float(x[0]), float(x[1])
    w0, L, dw = parts(es, hs)
    d_eta = theta_partials_interp(es, s.xi, s.tau, s.sigma, model).d_eta if eps else 0.0
    xi_s = s.xi + eps * d_eta + dw["eta"] * L
    tau_raw = s.tau + L
    return _finish(s, model, es, hs, xi_s, tau_raw, w0, it, res, zone, "treschev", check_window)


# ---------------------------------------------------------------- resonant map

def slow_fast(point, k: ResonanceVector):
    """``(I, phi, A, t) -> (I/k0, k0 phi + k1 t, A - (k1/k0) I, t)``."""
    I, phi, A, t = point
    k0, k1 = k.k_phi, k.k_t
    if k0 == 0:
        raise ZeroK0("slow-fast variables need k0 != 0")
    return (I / k0, k0 * phi + k1 * t, A - (k1 / k0) * I, t)


def slow_fast_inverse(point, k: ResonanceVector):
    J, theta, D, t = point
    k0, k1 = k.k_phi, k.k_t
    if k0 == 0:
        raise ZeroK0("slow-fast variables need k0 != 0")
    return (k0 * J, (theta - k1 * t) / k0, D + k1 * J, t)


def slow_fast_matrix(k: ResonanceVector) -> np.ndarray:
    k0, k1 = k.k_phi, k.k_t
    if k0 == 0:
        raise ZeroK0("slow-fast variables need k0 != 0")
    return np.array([[1 / k0, 0, 0, 0],
                     [0, k0, 0, k1],
                     [-k1 / k0, 0, 1, 0],
                     [0, 0, 0, 1]], dtype=float)


def B_eta(state: SepMapState, w0: float, model: ModelSpec, small: float = 1e-6) -> float:
    """Action drift accumulated by the averaged flow during the saddle passage.

    ``(Hbar1(eta, xi) - Hbar1(eta, xi - eta L)) / eta`` with ``L = log|kappa w0|``;
    for ``|eta| < small`` the Taylor series in ``eta`` is used.
    """
    eta, xi = state.eta, state.xi
    L = math.log(abs(_kappa(state.sigma) * w0))
    if abs(eta) >= small:
        return float(boldface_H1_frozen(eta, xi, model) - boldface_H1_frozen(eta, xi - eta * L, model)) / eta
    _, d1, _ = boldface_H1_partials(eta, xi, 0.0, model)
    h = 1e-4
    d2 = (boldface_H1_partials(eta, xi + h, 0.0, model)[1] - boldface_H1_partials(eta, xi - h, 0.0, model)[1]) / (2 * h)
    return float(L * d1 - eta * L * L * d2 / 2)


def B_h(state: SepMapState, model: ModelSpec, mu: float = 0.0) -> float:
    """``Hbar1(eta, xi + eta tau + mu) - Hbar1(eta, xi + eta tau)``; zero when ``mu = 0``."""
    if mu == 0:
        return 0.0
    ph = state.xi + state.eta * state.tau
    return float(boldface_H1_frozen(state.eta, ph + mu, model) - boldface_H1_frozen(state.eta, ph, model))


def B_angles(state: SepMapState, w0: float, bar_t: int, model: ModelSpec, C: float = 1.0
             ) -> tuple[float, float]:
    """Size envelope ``C (1 + |tau| + |log|w0|| + bar_t)`` for the unmodelled angle drifts."""
    env = C * (1 + abs(state.tau) + abs(math.log(abs(w0))) + bar_t)
    return env, env


def map_resonant(state: SepMapState, model: ModelSpec, check_zone: bool = True,
                 check_window: bool = True) -> tuple[SepMapState, MapDiagnostics]:
    """Resonant separatrix map.

    With ``L = log|kappa w0|``: ``eta* = eta - eps d_xi Theta + eps B_eta``,
    ``h* = h - eps d_tau Theta``, ``xi* = xi - eta* L``, ``tau* = tau + L``,
    where ``w0 = h* - E(eta*) - eps Hbar1(eta*, xi*)``. The scalar ``w0`` is
    found by damped fixed-point iteration with a secant fallback.
    """
    eps = model.epsilon
    s = state
    zone = classify_zone(s.eta, model)
    if check_zone and not zone.resonant:
        raise WrongZone(f"eta = {s.eta} is not in a resonant zone")
    kap = _kappa(s.sigma)
    if eps:
        p = theta_partials_interp(s.eta, s.xi, s.tau, s.sigma, model)
        ke, kh = eps * p.d_xi, eps * p.d_tau
    else:
        ke = kh = 0.0
    h_s = s.h - kh

    def lines(w0):
        L = math.log(abs(kap * w0))
        es = s.eta - ke + (eps * B_eta(s, w0, model) if eps else 0.0)
        return es, s.xi - es * L, L

    def G(w0):
        es, xs, _ = lines(w0)
        return w0_res(es, h_s, xs, model) - w0

    w0 = w0_res(s.eta, s.h, s.xi, model)
    if w0 == 0:
        raise WindowViolation("w0 = 0")
    iters, res = 0, math.inf
    try:
        wa, iters, res = _solve(lambda x: np.array([G(x[0]) + x[0]]), np.array([w0]))
        w0 = float(wa[0])
    except (NonConvergence, ValueError):
        w0, iters, res = _secant(G, w0)
    es, xs, L = lines(w0)
    return _finish(s, model, es, h_s, xs, s.tau + L, w0, iters, res, zone, "res", check_window)


def _secant(G, x0: float, tol: float = SOLVER_TOL, max_iters: int = MAX_ITERS):
    x1 = x0 * (1 + 1e-3)
    g0, g1 = G(x0), G(x1)
    for it in range(1, max_iters + 1):
        if g1 == g0:
            break
        x2 = x1 - g1 * (x1 - x0) / (g1 - g0)
        if x2 == 0 or np.sign(x2) != np.sign(x1):
            x2 = x1 / 2
        x0, g0, x1 = x1, g1, x2
        g1 = G(x1)
        if abs(g1) < tol:
            return x1, MAX_ITERS + it, abs(g1)
    raise NonConvergence(f"w0 solve failed, residual {abs(g1):.3g}")


# ---------------------------------------------------------------- orbits

CAPTURED = "Captured"
COMPLETED = "Completed"


@dataclass
class Orbit:
    records: list  # (SepMapState, MapDiagnostics | None)
    reason: str

    @property
    def states(self) -> list[SepMapState]:
        return [r[0] for r in self.records]

    def __len__(self) -> int:
        return len(self.records)


def step(state: SepMapState, model: ModelSpec, policy: str = "auto", check_window: bool = True):
    """One map application; ``policy`` is ``auto``, ``nonres``, ``res`` or ``treschev``."""
    if policy == "nonres":
        return map_nonresonant(state, model, check_zone=False, check_window=check_window)
    if policy == "res":
        return map_resonant(state, model, check_zone=False, check_window=check_window)
    if policy == "treschev":
        return map_treschev(state, model, check_window=check_window)
    if policy != "auto":
        raise ValueError(f"unknown policy {policy!r}")
    if classify_zone(state.eta, model).resonant:
        return map_resonant(state, model, check_window=check_window)
    return map_nonresonant(state, model, check_window=check_window)


def iterate(state: SepMapState, model: ModelSpec, n: int, policy: str = "auto") -> Orbit:
    """Apply the map ``n`` times; stop with ``Captured`` once the window condition fails."""
    records = [(state, None)]
    cur = state
    for _ in range(n):
        try:
            cur, diag = step(cur, model, policy)
        except (WindowViolation, NoAdmissibleTime, OutOfNeighborhood):
            return Orbit(records, CAPTURED)
        records.append((cur, diag))
    return Orbit(records, COMPLETED)


def jacobian(fmap, state: SepMapState, step_sizes=None) -> np.ndarray:
    """Five-point finite-difference Jacobian of ``fmap`` in ``(eta, xi, h, tau)``.

    Output angles are unwrapped against the base image so the 2*pi reductions
    do not leak into the differences.
    """
    x0 = np.array(state.as_tuple()[:4], dtype=float)
    base = np.array(fmap(state)[0].as_tuple()[:4])
    if step_sizes is None:
        step_sizes = np.full(4, 1e-6)
    J = np.empty((4, 4))

    def img(x):
        y = np.array(fmap(replace(state, eta=x[0], xi=x[1], h=x[2], tau=x[3]))[0].as_tuple()[:4])
        for i in (1, 3):
            y[i] = base[i] + math.remainder(y[i] - base[i], 2 * math.pi)
        return y

    for j in range(4):
        e = np.zeros(4)
        e[j] = step_sizes[j]
        J[:, j] = (-img(x0 + 2 * e) + 8 * img(x0 + e) - 8 * img(x0 - e) + img(x0 - 2 * e)) / (12 * step_sizes[j])
    return J
