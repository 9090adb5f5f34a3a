"""Pendulum separatrices and the gluing constants mu, kappa, chi."""

from __future__ import annotations

import math
from enum import IntEnum

import numpy as np

from .errors import NonConvergent
from .hamiltonian import PhasePoint, frequency_nu, saddle_linearization, wrap_angle
from .quadrature import gk_integrate

TAIL_T = 30.0


class SeparatrixBranch(IntEnum):
    MINUS = -1
    PLUS = 1

    @classmethod
    def parse(cls, s) -> "SeparatrixBranch":
        if isinstance(s, SeparatrixBranch):
            return s
        if s in ("+", "plus", 1, "1", "+1"):
            return cls.PLUS
        if s in ("-", "minus", -1, "-1"):
            return cls.MINUS
        raise ValueError(f"not a branch: {s!r}")

    def __str__(self) -> str:
        return "+" if self > 0 else "-"


def pendulum_separatrix(sigma, tau):
    """``p = 2 sigma / cosh(tau)``, ``q = 4 arctan(exp(sigma tau))``."""
    s = int(SeparatrixBranch.parse(sigma)) if not isinstance(sigma, np.ndarray) else sigma
    tau = np.asarray(tau, dtype=float)
    x = s * tau
    # arctan(e^x) = pi/2 - arctan(e^-x) keeps full precision on both sides
    q = np.where(x <= 0, 4 * np.arctan(np.exp(np.minimum(x, 0.0))),
                 2 * math.pi - 4 * np.arctan(np.exp(-np.maximum(x, 0.0))))
    p = 2 * s / np.cosh(np.clip(tau, -700, 700))
    if tau.ndim == 0:
        return float(p), float(q)
    return p, q


def separatrix_rel(sigma, tau):
    """Separatrix point with ``q`` measured from the saddle lift it is closest to."""
    s = int(SeparatrixBranch.parse(sigma))
    tau = np.asarray(tau, dtype=float)
    x = s * tau
    q_rel = np.where(x <= 0, 4 * np.arctan(np.exp(np.minimum(x, 0.0))),
                     -4 * np.arctan(np.exp(-np.maximum(x, 0.0))))
    p = 2 * s / np.cosh(np.clip(tau, -700, 700))
    return p, q_rel


def separatrix_time(q, sigma):
    """Inverse of the ``q`` parametrization for ``q`` in the open lift ``(0, 2*pi)``."""
    s = int(SeparatrixBranch.parse(sigma))
    return s * np.log(np.tan(np.asarray(q) / 4))


def separatrix_trig(sigma, tau):
    """``(p, cos q, sin q)`` on the separatrix without forming ``q``.

    ``cos q = 1 - 2 sech^2 tau`` and ``sin q = -2 sigma tanh(tau) sech(tau)`` hold
    exactly for the parametrization above and stay accurate in the tails.
    """
    s = int(SeparatrixBranch.parse(sigma))
    tau = np.asarray(tau, dtype=float)
    sech = 1.0 / np.cosh(np.clip(tau, -700, 700))
    return 2 * s * sech, 1 - 2 * sech * sech, -2 * s * np.tanh(tau) * sech


def gamma_full(I: float, xi: float, tau: float, sigma) -> PhasePoint:
    p, q = pendulum_separatrix(sigma, tau)
    return PhasePoint(I, wrap_angle(xi + I * tau), p, q, 0.0)


def _dI_H0(I, p, q):
    # H0 is uncoupled, so the I-derivative ignores the pendulum variables
    return I + 0.0 * p + 0.0 * q


def _mu_integrand(I: float, sigma):
    def f(t):
        p, q = pendulum_separatrix(sigma, t)
        return -frequency_nu(I) + _dI_H0(I, p, q)
    return f


def mu(I: float, sigma, T: float = TAIL_T) -> float:
    val, _ = gk_integrate(_mu_integrand(I, sigma), -T, T, abstol=1e-13)
    return float(val)


def chi(I: float, sigma, tau: float, T: float = TAIL_T) -> float:
    """Running integral of the mu integrand from ``-T`` to ``tau``."""
    if tau <= -T:
        return 0.0
    val, _ = gk_integrate(_mu_integrand(I, sigma), -T, tau, abstol=1e-13)
    return float(val)


def kappa_at(I: float, sigma, T: float, a_plus=None, a_minus=None) -> float:
    sd = saddle_linearization(I)
    ap = sd.a_plus if a_plus is None else np.asarray(a_plus)
    am = sd.a_minus if a_minus is None else np.asarray(a_minus)
    p_in, q_in = separatrix_rel(sigma, -T)
    p_out, q_out = separatrix_rel(sigma, T)
    # (p, q) ordering matches the action of Lambda
    val = (ap @ np.array([p_in, q_in])) * (am @ np.array([p_out, q_out])) * math.exp(2 * sd.lam * T)
    return 1.0 / abs(float(val))


def kappa(I: float, sigma, T: float = TAIL_T) -> float:
    k1 = kappa_at(I, sigma, T)
    k2 = kappa_at(I, sigma, T + 5.0)
    if abs(1 / k1 - 1 / k2) > 1e-6 * abs(1 / k1):
        raise NonConvergent("kappa limit has not stabilized")
    return k1
