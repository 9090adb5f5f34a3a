"""Direct integration of the full flow, return maps and the averaged inner flow.

The integrator is an embedded Dormand-Prince 8(5,3) scheme run on a batch of
independent orbits, each with its own step size. Only the Butcher tableau is
borrowed from scipy; stepping, step control and event location live here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.integrate._ivp import dop853_coefficients as _dop

from .errors import NotDefined, OutOfCollar, StepFailure
from .geometry import SeparatrixBranch, separatrix_time
from .hamiltonian import (ModelSpec, PhasePoint, eval_H0, eval_H1, pendulum_energy,
                          vector_field_array, wrap_angle)
from .melnikov import (ResonanceVector, boldface_modes, d_phi, d_t, eval_fourier,
                       half_loop_partials, vartheta_modes)
from .sepmap import SepMapState

_NS = _dop.N_STAGES
_A = _dop.A[:_NS, :_NS]
_B = _dop.B
_C = _dop.C[:_NS]
_E3 = _dop.E3
_E5 = _dop.E5
SAFETY, MIN_FACTOR, MAX_FACTOR = 0.9, 0.2, 10.0
COLLAR = 0.5


def _rk_step(fun, y, h):
    """One DOP853 step for a batch ``y`` of shape (B, n) with step sizes ``h`` (B,)."""
    K = np.empty((_NS + 1,) + y.shape)
    K[0] = fun(y)
    hh = h[:, None]
    for s in range(1, _NS):
        dy = np.tensordot(_A[s, :s], K[:s], axes=(0, 0))
        K[s] = fun(y + hh * dy)
    y_new = y + hh * np.tensordot(_B, K[:_NS], axes=(0, 0))
    K[_NS] = fun(y_new)
    return y_new, K


def _error_norm(K, h, y, y_new, rtol, atol):
    scale = atol + np.maximum(np.abs(y), np.abs(y_new)) * rtol
    err5 = np.tensordot(_E5, K, axes=(0, 0)) / scale
    err3 = np.tensordot(_E3, K, axes=(0, 0)) / scale
    e5 = np.sum(err5 ** 2, axis=-1)
    e3 = np.sum(err3 ** 2, axis=-1)
    denom = e5 + 0.01 * e3
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.abs(h) * e5 / np.sqrt(denom * y.shape[-1])
    return np.where(denom > 0, out, 0.0)


def _field(model: ModelSpec):
    pert, eps = model.perturbation, model.epsilon
    return lambda y: vector_field_array(pert, eps, y)


def _check_tol(tol: float) -> None:
    if not (1e-13 <= tol <= 1e-6):
        raise ValueError("tol must lie in [1e-13, 1e-6]")


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (n, 5) columns I, phi, p, q, t
    accepted: int = 0
    rejected: int = 0
    energy_drift: float = 0.0

    @property
    def samples(self) -> list[PhasePoint]:
        return [PhasePoint.from_array(s) for s in self.states]

    @property
    def end(self) -> PhasePoint:
        return PhasePoint.from_array(self.states[-1])


def integrate_batch(model: ModelSpec, y0: np.ndarray, t_span: float, tol: float = 1e-12,
                    record: bool = False, h0: float | None = None):
    """Advance each row of ``y0`` by exactly ``t_span`` time units."""
    _check_tol(tol)
    fun = _field(model)
    y = np.array(y0, dtype=float, ndmin=2)
    n = y.shape[0]
    t_rel = np.zeros(n)
    h = np.full(n, h0 if h0 else min(0.1, tol ** 0.125))
    active = np.ones(n, bool)
    hist = [y.copy()] if record else None
    acc = rej = 0
    while active.any():
        idx = np.flatnonzero(active)
        hs = np.minimum(h[idx], t_span - t_rel[idx])
        y_new, K = _rk_step(fun, y[idx], hs)
        err = _error_norm(K, hs, y[idx], y_new, tol, tol)
        ok = err < 1.0
        with np.errstate(divide="ignore"):
            fac = np.where(err == 0, MAX_FACTOR, SAFETY * err ** (-1 / 8))
        fac = np.where(ok, np.minimum(MAX_FACTOR, fac), np.maximum(MIN_FACTOR, fac))
        good = idx[ok]
        y[good] = y_new[ok]
        t_rel[good] += hs[ok]
        h[idx] = hs * fac
        acc += int(ok.sum())
        rej += int((~ok).sum())
        if np.any(h[idx] < 1e-12 * max(1.0, t_span)):
            raise StepFailure("step size underflow")
        done = t_rel >= t_span * (1 - 1e-15)
        active &= ~done
        if record:
            hist.append(y.copy())
    return y, (np.array(hist) if record else None), acc, rej


def integrate_fixed(model: ModelSpec, start: PhasePoint, t_end: float, n_steps: int) -> PhasePoint:
    """Fixed-step DOP853 (for order checks)."""
    fun = _field(model)
    y = start.as_array()[None, :]
    h = np.array([(t_end - start.t) / n_steps])
    for _ in range(n_steps):
        y, _ = _rk_step(fun, y, h)
    return PhasePoint.from_array(y[0])


def integrate(model: ModelSpec, start: PhasePoint, t_end: float, tol: float = 1e-12) -> Trajectory:
    span = t_end - start.t
    if span < 0:
        raise ValueError("t_end precedes the start time")
    y0 = start.as_array()[None, :]
    if span == 0:
        return Trajectory(np.array([start.t]), y0.copy())
    _, hist, acc, rej = integrate_batch(model, y0, span, tol, record=True)
    states = hist[:, 0, :]
    keep = np.concatenate([[True], np.diff(states[:, 4]) > 0])
    states = states[keep]
    drift = 0.0
    if model.epsilon == 0:
        e = pendulum_energy(states[:, 2], states[:, 3])
        drift = float(np.max(np.abs(e - e[0])))
    return Trajectory(states[:, 4].copy(), states, acc, rej, drift)


def time_one_map(model: ModelSpec, point: PhasePoint, tol: float = 1e-12) -> PhasePoint:
    y, *_ = integrate_batch(model, point.as_array()[None, :], 1.0, tol)
    return PhasePoint.from_array(y[0])


# ---------------------------------------------------------------- return map

@dataclass(frozen=True)
class SectionEvent:
    point: PhasePoint
    crossing_kind: str
    section_id: SeparatrixBranch
    time: float
    convention: str = "continuous-section"


class ReturnResult(NamedTuple):
    event: SectionEvent
    extracted: SepMapState
    transit_steps: int


def section_point(eta: float, xi: float, tau: float, w: float, sigma) -> PhasePoint:
    """Point on the section ``q = pi`` with pendulum energy ``w`` and loop phases ``(xi, tau)``."""
    s = int(SeparatrixBranch.parse(sigma))
    p = s * math.sqrt(2.0 * (w + 2.0))
    return PhasePoint(eta, wrap_angle(xi), p, math.pi, -tau)


def on_section(point: PhasePoint, tol: float = 1e-9) -> bool:
    return abs(math.remainder(point.q - math.pi, 2 * math.pi)) <= tol


def _locate(fun, y, h, target):
    """Newton on the step length so that ``q`` hits ``target`` within one step."""
    q0 = y[:, 3]
    dq = fun(y)[:, 3]
    hs = np.clip((target - q0) / dq, 0.0, h)
    for _ in range(30):
        y1, K = _rk_step(fun, y, hs)
        r = y1[:, 3] - target
        if np.all(np.abs(r) < 1e-14):
            break
        hs = np.clip(hs - r / K[_NS][:, 3], 0.0, h)
    y1, _ = _rk_step(fun, y, hs)
    y1[:, 3] = target  # snap onto the section; residual is below 1e-14
    return y1


def return_batch(model: ModelSpec, starts: np.ndarray, tol: float = 1e-12,
                 t_max: float | None = None):
    """First returns to ``q = pi (mod 2pi)`` for a batch of section points.

    Returns ``(states, steps, defined)``; rows that do not return before
    ``t_max`` are flagged undefined.
    """
    _check_tol(tol)
    fun = _field(model)
    y = np.array(starts, dtype=float, ndmin=2)
    n = y.shape[0]
    eps = model.epsilon
    if t_max is None:
        t_max = 10.0 * math.log(1.0 / eps) if eps > 0 else 60.0
    q0 = y[:, 3].copy()
    t0 = y[:, 4].copy()
    h = np.full(n, min(0.1, tol ** 0.125))
    steps = np.zeros(n, dtype=np.int64)
    active = np.ones(n, bool)
    defined = np.ones(n, bool)
    while active.any():
        idx = np.flatnonzero(active)
        hs = h[idx]
        y_new, K = _rk_step(fun, y[idx], hs)
        err = _error_norm(K, hs, y[idx], y_new, tol, tol)
        ok = err < 1.0
        with np.errstate(divide="ignore"):
            fac = np.where(err == 0, MAX_FACTOR, SAFETY * err ** (-1 / 8))
        fac = np.where(ok, np.minimum(MAX_FACTOR, fac), np.maximum(MIN_FACTOR, fac))
        h[idx] = hs * fac
        if np.any(h[idx] < 1e-12):
            raise StepFailure("step size underflow")
        acc = idx[ok]
        if acc.size == 0:
            continue
        yo, yn = y[acc], y_new[ok]
        uo = (yo[:, 3] - q0[acc]) / (2 * math.pi)
        un = (yn[:, 3] - q0[acc]) / (2 * math.pi)
        # next multiple of 2*pi (relative to the start) in the direction of motion
        up = un > uo
        lvl = np.where(up, np.floor(uo) + 1, np.ceil(uo) - 1)
        hit = np.where(up, un >= lvl, un <= lvl)
        steps[acc] += 1
        y[acc] = yn
        if hit.any():
            rows = acc[hit]
            lvl = lvl[hit]
            target = q0[rows] + 2 * math.pi * lvl
            y[rows] = _locate(fun, yo[hit], hs[ok][hit], target)
            active[rows] = False
        late = active & (y[:, 4] - t0 > t_max)
        defined[late] = False
        active &= ~late
    return y, steps, defined


def numeric_return_map(model: ModelSpec, start: PhasePoint, tol: float = 1e-12,
                       t_max: float | None = None) -> ReturnResult:
    if not on_section(start):
        raise ValueError("start must lie on the section q = pi (mod 2 pi)")
    if abs(pendulum_energy(start.p, start.q)) >= COLLAR:
        raise OutOfCollar("start lies outside the collar")
    y, steps, ok = return_batch(model, start.as_array()[None, :], tol, t_max)
    if not ok[0]:
        raise NotDefined("no return to a fundamental domain before t_max")
    pt = PhasePoint.from_array(y[0])
    ev = SectionEvent(pt, "enter", SeparatrixBranch.PLUS if pt.p > 0 else SeparatrixBranch.MINUS, pt.t)
    return ReturnResult(ev, extract_coords(model, ev), int(steps[0]))


def extract_coords(model: ModelSpec, event: SectionEvent | PhasePoint, first_order: bool = True,
                   collar: float = COLLAR) -> SepMapState:
    """Separatrix-map coordinates of a point near the separatrix.

    ``s`` is the separatrix time read off ``q``; then ``xi = phi - eta*s`` and
    ``tau = s - t`` (mod 2pi, in (-pi, pi]). With ``first_order`` the action
    and energy are shifted by the changes accumulated along the current loop
    since it left the saddle, plus the inner averaging corrections.
    """
    pt = event.point if isinstance(event, SectionEvent) else event
    hp = pendulum_energy(pt.p, pt.q)
    if abs(hp) >= collar:
        raise OutOfCollar(f"pendulum energy {hp:.3g} outside collar {collar}")
    sigma = SeparatrixBranch.PLUS if pt.p > 0 else SeparatrixBranch.MINUS
    ql = float(np.mod(pt.q, 2 * math.pi))
    s0 = float(separatrix_time(min(max(ql, 1e-300), 2 * math.pi - 1e-15), sigma))
    eps = model.epsilon
    eta, h = pt.I, eval_H0(pt)
    tau = math.remainder(s0 - pt.t, 2 * math.pi)
    xi = pt.phi - eta * s0
    if first_order and eps > 0:
        dI, dH = half_loop_partials(pt.I, xi, tau, sigma, model, s_end=s0)
        vt = vartheta_modes(pt.I, model)
        eta = pt.I - eps * dI - eps * eval_fourier(d_phi(vt), pt.phi, pt.t)
        h = h + eps * eval_H1(model, pt) - eps * dH + eps * eval_fourier(d_t(vt), pt.phi, pt.t)
        xi = pt.phi - eta * s0
    return SepMapState(float(eta), float(wrap_angle(xi)), float(h), float(tau), sigma)


def extract_batch(model: ModelSpec, states: np.ndarray, first_order: bool = True) -> list[SepMapState]:
    return [extract_coords(model, PhasePoint.from_array(s), first_order) for s in states]


# ---------------------------------------------------------------- averaged inner flow

def resonant_table(model: ModelSpec, k: ResonanceVector, J: float,
                   derivative: bool = False) -> dict[int, complex]:
    """Fourier coefficients in the slow angle of ``Hbar1`` in slow-fast variables."""
    k0, k1 = k.k_phi, k.k_t
    I = k0 * J
    out: dict[int, complex] = {}
    for (a, b), z in boldface_modes(model.perturbation, I, model.beta, derivative).items():
        if k0 and a % k0 == 0 and b == (a // k0) * k1:
            out[a // k0] = z * k0 if derivative else z
    return out


def _slow_freq(J: float, k: ResonanceVector) -> tuple[float, float]:
    # E~(J) = (k0 J)^2/2 + k1 J, so nu~ = k0^2 J + k1 and nu~' = k0^2
    return k.k_phi ** 2 * J + k.k_t, float(k.k_phi ** 2)


def _phi1(z):
    """``(e^{iz} - 1)/(iz)`` with the removable singularity filled in."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-3
    zs = np.where(small, 1.0, z)
    big = (np.exp(1j * zs) - 1) / (1j * zs)
    iz = 1j * z
    ser = 1 + iz / 2 + iz ** 2 / 6 + iz ** 3 / 24 + iz ** 4 / 120
    return np.where(small, ser, big)


def _phi2(z):
    """``(phi1(z) - 1)/(iz)``."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-2
    zs = np.where(small, 1.0, z)
    big = (_phi1(zs) - 1) / (1j * zs)
    iz = 1j * z
    ser = 0.5 + iz / 6 + iz ** 2 / 24 + iz ** 3 / 120 + iz ** 4 / 720 + iz ** 5 / 5040
    return np.where(small, ser, big)


def G1(J: float, theta, bar_t: float, model: ModelSpec, k: ResonanceVector):
    nu, _ = _slow_freq(J, k)
    tab = resonant_table(model, k, J)
    out = 0j
    for j, c in tab.items():
        if j == 0:
            continue
        # (e^{i j nu t} - 1)/nu = i j t phi1(j nu t)
        out = out - c * np.exp(1j * j * np.asarray(theta)) * 1j * j * bar_t * _phi1(j * nu * bar_t)
    return np.real(out)


def F1(J: float, theta, bar_t: float, model: ModelSpec, k: ResonanceVector):
    nu, dnu = _slow_freq(J, k)
    tab = resonant_table(model, k, J)
    k0 = k.k_phi
    dtab = resonant_table(model, k, J, derivative=True)
    out = 0j
    for j, c in tab.items():
        dc = dtab.get(j, 0j)
        e = np.exp(1j * j * np.asarray(theta))
        if j == 0:
            out = out + dc * bar_t
            continue
        z = j * nu * bar_t
        # nu'/nu * (t - (e^{i z} - 1)/(i j nu)) = -nu' * i j t^2 phi2(z)
        out = out + dnu * c * e * (-1j * j * bar_t ** 2 * _phi2(z))
        out = out + dc * e * bar_t * _phi1(z)
    return np.real(out)


def averaged_inner_flow(J0: float, theta0: float, bar_t: float, rho: float, model: ModelSpec,
                        k: ResonanceVector) -> tuple[float, float]:
    """First-order prediction ``(theta, J)`` after time ``bar_t`` of the resonant inner flow.

    ``rho`` enters through ``g(J, rho) = lam * rho``; for the Arnold family
    ``d_J g = 0`` so it drops out of the phase advance.
    """
    eps = model.epsilon
    nu, _ = _slow_freq(J0, k)
    theta = theta0 + nu * bar_t + eps * float(F1(J0, theta0, bar_t, model, k))
    J = J0 + eps * float(G1(J0, theta0, bar_t, model, k))
    return theta, J


def truncated_resonant_rhs(model: ModelSpec, k: ResonanceVector):
    """Right-hand side of ``theta' = nu~(J) + eps d_J Hbar1``, ``J' = -eps d_theta Hbar1``."""
    eps = model.epsilon

    def rhs(y):
        out = np.empty_like(y)
        for i in range(y.shape[0]):
            J, th = float(y[i, 0]), float(y[i, 1])
            tab = resonant_table(model, k, J)
            dtab = resonant_table(model, k, J, derivative=True)
            e = {j: np.exp(1j * j * th) for j in tab}
            out[i, 0] = -eps * sum(1j * j * c * e[j] for j, c in tab.items()).real
            out[i, 1] = _slow_freq(J, k)[0] + eps * sum(dtab.get(j, 0) * e[j] for j in tab).real
        return out
    return rhs


def integrate_truncated_resonant(J0, theta0, bar_t: float, model: ModelSpec,
                                 k: ResonanceVector, n_steps: int = 200):
    """Reference solution of the truncated resonant system by fixed-step DOP853.

    Scalars give a ``(theta, J)`` pair; arrays of initial data are integrated as
    one batch and give arrays.
    """
    rhs = truncated_resonant_rhs(model, k)
    J0a, th0a = np.broadcast_arrays(np.asarray(J0, float), np.asarray(theta0, float))
    y = np.stack([J0a.ravel(), th0a.ravel()], axis=1)
    h = np.full(y.shape[0], bar_t / n_steps)
    for _ in range(n_steps):
        y, _ = _rk_step(rhs, y, h)
    if J0a.ndim == 0:
        return float(y[0, 1]), float(y[0, 0])
    return y[:, 1].reshape(J0a.shape), y[:, 0].reshape(J0a.shape)
