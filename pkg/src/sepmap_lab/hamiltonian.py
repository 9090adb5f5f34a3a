"""Generalized Arnold model: energies, vector field, frequency and saddle data.

The unperturbed Hamiltonian is the uncoupled rotor plus pendulum

    H0 = I**2/2 + p**2/2 + cos(q) - 1

and the perturbation ``H1`` is a real trigonometric polynomial in ``(q, phi, t)``
whose Fourier coefficients are polynomials in ``(I, p, cos q, sin q)``.
All angles are 2*pi periodic.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import ModelError, NonRealValue, SaddleError

TWO_PI = 2.0 * math.pi

# Exponents (a, b, c, d) of I**a * p**b * cos(q)**c * sin(q)**d.
Exponents = tuple[int, int, int, int]
Monomial = tuple[Exponents, complex]


def wrap_angle(x):
    """Reduce an angle to [0, 2*pi). Idempotent."""
    y = np.mod(x, TWO_PI)
    # np.mod returns exactly 2*pi for tiny negative inputs
    y = np.where(y >= TWO_PI, 0.0, y)
    return float(y) if y.ndim == 0 else y


@dataclass(frozen=True)
class Term:
    """One Fourier mode ``coeff(I, p, cos q, sin q) * exp(i(k_q q + k_phi phi + k_t t))``."""

    k_q: int
    k_phi: int
    k_t: int
    coeff: tuple[Monomial, ...]

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.k_q, self.k_phi, self.k_t)

    def conjugate(self) -> "Term":
        return Term(-self.k_q, -self.k_phi, -self.k_t,
                    tuple((e, complex(c).conjugate()) for e, c in self.coeff))

    def coeff_dict(self) -> dict[Exponents, complex]:
        out: dict[Exponents, complex] = {}
        for e, c in self.coeff:
            out[e] = out.get(e, 0j) + complex(c)
        return out


def _close(a: dict, b: dict, tol: float = 1e-14) -> bool:
    keys = set(a) | set(b)
    return all(abs(a.get(k, 0j) - b.get(k, 0j)) <= tol * (1 + abs(a.get(k, 0j))) for k in keys)


@dataclass(frozen=True)
class TrigPerturbation:
    """Finite Fourier table for ``H1``.

    Terms sharing a wave vector are merged when the table is compiled; the
    stored tuple keeps the order it was given in so that serialization is
    stable.
    """

    terms: tuple[Term, ...]
    degree: int = 0

    def __post_init__(self):
        terms = tuple(self.terms)
        object.__setattr__(self, "terms", terms)
        n_needed = max([max(abs(t.k_phi), abs(t.k_t)) for t in terms], default=0)
        degree = self.degree or max(n_needed, 1)
        if degree < 1:
            raise ModelError("degree must be a positive integer")
        if n_needed > degree:
            raise ModelError(f"term order {n_needed} exceeds declared degree {degree}")
        object.__setattr__(self, "degree", int(degree))
        merged = self.merged()
        for key, cd in merged.items():
            conj_key = (-key[0], -key[1], -key[2])
            other = merged.get(conj_key, {})
            want = {e: c.conjugate() for e, c in cd.items()}
            if not _close(other, want):
                raise ModelError(f"missing or mismatched conjugate partner for mode {key}")

    def merged(self) -> dict[tuple[int, int, int], dict[Exponents, complex]]:
        out: dict[tuple[int, int, int], dict[Exponents, complex]] = {}
        for t in self.terms:
            slot = out.setdefault(t.key, {})
            for e, c in t.coeff:
                slot[e] = slot.get(e, 0j) + complex(c)
        return out

    @property
    def rows(self) -> "_Rows":
        cached = self.__dict__.get("_rows")
        if cached is None:
            cached = _compile_rows(self)
            object.__setattr__(self, "_rows", cached)
        return cached

    def is_pendulum_free(self) -> bool:
        """True if no term depends on ``(p, q)``."""
        return all(t.k_q == 0 and all(e[1] == 0 and e[2] == 0 and e[3] == 0 for e, _ in t.coeff)
                   for t in self.terms)


class _Rows(NamedTuple):
    kq: np.ndarray
    kphi: np.ndarray
    kt: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    coef: np.ndarray


def _compile_rows(pert: TrigPerturbation) -> _Rows:
    cols: list[list] = [[] for _ in range(8)]
    for key, cd in sorted(pert.merged().items()):
        for e, c in sorted(cd.items()):
            if c == 0:
                continue
            for lst, v in zip(cols, (*key, *e, c)):
                lst.append(v)
    ints = [np.asarray(x, dtype=np.int64) for x in cols[:7]]
    return _Rows(*ints, np.asarray(cols[7], dtype=np.complex128))


def real_mode(k_q: int, k_phi: int, k_t: int, amplitude: float | Sequence[Monomial] = 1.0,
              kind: str = "cos") -> list[Term]:
    """Terms for ``amplitude * cos(k.x)`` (or ``sin``) as a conjugate pair.

    ``amplitude`` may be a number or a monomial list for a polynomial prefactor.
    """
    if isinstance(amplitude, (int, float)):
        mono: list[Monomial] = [((0, 0, 0, 0), complex(amplitude))]
    else:
        mono = [(tuple(e), complex(c)) for e, c in amplitude]
    if kind == "cos":
        scale = 0.5
    elif kind == "sin":
        scale = -0.5j
    else:
        raise ValueError(kind)
    if (k_q, k_phi, k_t) == (0, 0, 0):
        if kind == "sin":
            return []
        return [Term(0, 0, 0, tuple((e, c) for e, c in mono))]
    plus = Term(k_q, k_phi, k_t, tuple((e, scale * c) for e, c in mono))
    return [plus, plus.conjugate()]


@dataclass(frozen=True)
class PhasePoint:
    I: float
    phi: float
    p: float
    q: float
    t: float = 0.0

    def wrapped(self) -> "PhasePoint":
        return PhasePoint(self.I, wrap_angle(self.phi), self.p, wrap_angle(self.q), self.t)

    def as_array(self) -> np.ndarray:
        return np.array([self.I, self.phi, self.p, self.q, self.t], dtype=float)

    @classmethod
    def from_array(cls, x) -> "PhasePoint":
        return cls(*(float(v) for v in x[:5]))


@dataclass(frozen=True)
class ModelSpec:
    perturbation: TrigPerturbation
    epsilon: float
    action_window: tuple[float, float] = (-2.0, 2.0)
    beta: float = 0.25
    epsilon_max: float = 0.05
    validate_zones: bool = field(default=True, compare=False)

    def __post_init__(self):
        lo, hi = (float(x) for x in self.action_window)
        object.__setattr__(self, "action_window", (lo, hi))
        if not lo < hi:
            raise ModelError("action window needs I_- < I_+")
        if not (0.0 <= self.epsilon < self.epsilon_max):
            raise ModelError(f"epsilon must lie in [0, {self.epsilon_max})")
        if not self.beta > 0:
            raise ModelError("beta must be positive")
        if self.validate_zones:
            from .melnikov import validate_zones
            validate_zones(self)

    def with_epsilon(self, eps: float) -> "ModelSpec":
        return ModelSpec(self.perturbation, eps, self.action_window, self.beta,
                         self.epsilon_max, self.validate_zones)

    def digest(self) -> str:
        return hashlib.sha256(serialize_model(self).encode()).hexdigest()


# ---------------------------------------------------------------- evaluation

def eval_H0(point: PhasePoint) -> float:
    return point.I ** 2 / 2 + point.p ** 2 / 2 + math.cos(point.q) - 1.0


def pendulum_energy(p, q):
    return p * p / 2 + np.cos(q) - 1.0


def energy_E(I):
    """``E(I) = H0(I, 0, 0)``."""
    return I * I / 2


def frequency_nu(I):
    return I


def _pow(x, n):
    return x[..., None] ** n


def evaluate_terms(rows: _Rows, I, phi, p, q, t, which: str = "value"):
    """Complex sum of the term table, or one of its partial derivatives.

    ``which`` is one of ``value, I, p, q, phi, t``. Inputs broadcast together.
    """
    I, phi, p, q, t = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (I, phi, p, q, t)))
    if rows.coef.size == 0:
        return np.zeros(I.shape, dtype=complex)
    cq, sq = np.cos(q), np.sin(q)
    phase = np.exp(1j * (q[..., None] * rows.kq + phi[..., None] * rows.kphi + t[..., None] * rows.kt))
    fI = _pow(I, rows.a)
    fp = _pow(p, rows.b)
    fc = _pow(cq, rows.c)
    fs = _pow(sq, rows.d)
    if which == "value":
        val = fI * fp * fc * fs
    elif which == "I":
        val = rows.a * _pow(I, np.maximum(rows.a - 1, 0)) * fp * fc * fs
    elif which == "p":
        val = fI * rows.b * _pow(p, np.maximum(rows.b - 1, 0)) * fc * fs
    elif which == "q":
        dc = -rows.c * _pow(cq, np.maximum(rows.c - 1, 0)) * fs * sq[..., None]
        ds = rows.d * _pow(sq, np.maximum(rows.d - 1, 0)) * fc * cq[..., None]
        val = fI * fp * (dc + ds + 1j * rows.kq * fc * fs)
    elif which == "phi":
        val = 1j * rows.kphi * fI * fp * fc * fs
    elif which == "t":
        val = 1j * rows.kt * fI * fp * fc * fs
    else:
        raise ValueError(which)
    return np.sum(rows.coef * val * phase, axis=-1)


def _real(z, tol: float = 1e-12):
    z = np.asarray(z)
    bad = np.abs(z.imag) > tol * np.maximum(1.0, np.abs(z.real))
    if np.any(bad):
        raise NonRealValue("perturbation evaluated to a non-real value; conjugate pairs broken")
    return z.real


def eval_H1(model: ModelSpec, point: PhasePoint) -> float:
    z = evaluate_terms(model.perturbation.rows, point.I, point.phi, point.p, point.q, point.t)
    return float(_real(z))


def H1_partials(pert: TrigPerturbation, I, phi, p, q, t) -> dict[str, np.ndarray]:
    rows = pert.rows
    return {w: _real(evaluate_terms(rows, I, phi, p, q, t, w)) for w in ("I", "phi", "p", "q", "t")}


def vector_field(model: ModelSpec, point: PhasePoint) -> tuple[float, float, float, float]:
    """Canonical equations ``(dI, dphi, dp, dq)`` of ``H0 + eps*H1``."""
    eps = model.epsilon
    I, phi, p, q, t = point.I, point.phi, point.p, point.q, point.t
    if eps == 0.0:
        return (0.0, I, math.sin(q), p)
    d = H1_partials(model.perturbation, I, phi, p, q, t)
    return (float(-eps * d["phi"]), float(I + eps * d["I"]),
            float(math.sin(q) - eps * d["q"]), float(p + eps * d["p"]))


def vector_field_array(pert: TrigPerturbation, eps: float, y: np.ndarray) -> np.ndarray:
    """Vectorized field for states ``y[..., (I, phi, p, q, t)]``; the last slot has rate 1."""
    I, phi, p, q, t = (y[..., i] for i in range(5))
    out = np.empty_like(y)
    out[..., 4] = 1.0
    if eps == 0.0 or pert.rows.coef.size == 0:
        out[..., 0] = 0.0
        out[..., 1] = I
        out[..., 2] = np.sin(q)
        out[..., 3] = p
        return out
    rows = pert.rows
    out[..., 0] = -eps * evaluate_terms(rows, I, phi, p, q, t, "phi").real
    out[..., 1] = I + eps * evaluate_terms(rows, I, phi, p, q, t, "I").real
    out[..., 2] = np.sin(q) - eps * evaluate_terms(rows, I, phi, p, q, t, "q").real
    out[..., 3] = p + eps * evaluate_terms(rows, I, phi, p, q, t, "p").real
    return out


class SaddleData(NamedTuple):
    Lambda: np.ndarray
    lam: float
    a_plus: np.ndarray
    a_minus: np.ndarray


def saddle_linearization(I: float = 0.0) -> SaddleData:
    """Linearization of the pendulum part at ``(p, q) = (0, 0)``.

    ``Lambda = [[-H_pq, -H_qq], [H_pp, H_pq]]``; ``a_plus``/``a_minus`` are left
    eigenvectors for ``+lam``/``-lam`` such that the matrix with them as columns
    has unit determinant and ``|a_plus| = |a_minus|``.
    """
    # second derivatives of H0 in (p, q) at the saddle; independent of I here
    H_pp, H_pq, H_qq = 1.0, 0.0, -math.cos(0.0)
    L = np.array([[-H_pq, -H_qq], [H_pp, H_pq]]) + 0.0  # no negative zeros
    vals, vecs = np.linalg.eig(L.T)
    if np.any(np.abs(vals.imag) > 0) or not (vals.real.min() < 0 < vals.real.max()):
        raise SaddleError("saddle eigenvalues are not real with opposite signs")
    order = np.argsort(-vals.real)
    lam = float(vals.real[order[0]])
    a_p = vecs[:, order[0]].real
    a_m = vecs[:, order[1]].real
    a_p = a_p / np.linalg.norm(a_p)
    a_m = a_m / np.linalg.norm(a_m)
    det = a_p[0] * a_m[1] - a_p[1] * a_m[0]
    if det < 0:
        a_m = -a_m
        det = -det
    s = 1.0 / math.sqrt(det)
    return SaddleData(L, lam, a_p * s, a_m * s)


# ---------------------------------------------------------------- model files

MODEL_HEADER = "# sepmap-lab model v1"


def serialize_model(model: ModelSpec) -> str:
    """Key-value text form. Floats use ``repr`` so parsing is bit exact."""
    lines = [MODEL_HEADER,
             f"epsilon = {model.epsilon!r}",
             f"beta = {model.beta!r}",
             f"epsilon_max = {model.epsilon_max!r}",
             f"action_window = {model.action_window[0]!r} {model.action_window[1]!r}",
             f"degree = {model.perturbation.degree}"]
    for term in model.perturbation.terms:
        for (a, b, c, d), z in term.coeff:
            z = complex(z)
            lines.append(f"term = {term.k_q} {term.k_phi} {term.k_t} : {a} {b} {c} {d} : "
                         f"{z.real!r} {z.imag!r}")
    return "\n".join(lines) + "\n"


def parse_model(text: str, validate_zones: bool = True) -> ModelSpec:
    values: dict[str, str] = {}
    rows: list[tuple[tuple[int, int, int], Exponents, complex]] = []
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ModelError(f"line {n}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key == "term":
            try:
                ks, es, cs = (part.split() for part in val.split(":"))
                k = tuple(int(x) for x in ks)
                e = tuple(int(x) for x in es)
                re_, im_ = (float(x) for x in cs)
            except ValueError as exc:
                raise ModelError(f"line {n}: bad term row {val!r}") from exc
            if len(k) != 3 or len(e) != 4 or min(e) < 0:
                raise ModelError(f"line {n}: bad term row {val!r}")
            rows.append((k, e, complex(re_, im_)))  # type: ignore[arg-type]
        elif key in values:
            raise ModelError(f"line {n}: duplicate key {key}")
        else:
            values[key] = val
    try:
        eps = float(values["epsilon"])
        lo, hi = (float(x) for x in values.get("action_window", "-2.0 2.0").split())
        beta = float(values.get("beta", "0.25"))
        eps_max = float(values.get("epsilon_max", "0.05"))
        degree = int(values.get("degree", "0"))
    except (KeyError, ValueError) as exc:
        raise ModelError(f"bad or missing model key: {exc}") from exc
    # consecutive rows with the same wave vector form one term
    terms: list[Term] = []
    for k, e, z in rows:
        if terms and terms[-1].key == k:
            last = terms[-1]
            terms[-1] = Term(*k, last.coeff + ((e, z),))
        else:
            terms.append(Term(*k, ((e, z),)))
    pert = TrigPerturbation(tuple(terms), degree)
    return ModelSpec(pert, eps, (lo, hi), beta, eps_max, validate_zones)


# ---------------------------------------------------------------- catalog

def _one_minus_cos_q(scale: float = 1.0) -> list[Monomial]:
    return [((0, 0, 0, 0), scale), ((0, 0, 1, 0), -scale)]


def arnold_perturbation(phi_weight: float = 1.0, t_weight: float = 1.0,
                        extra: Iterable[Term] = ()) -> TrigPerturbation:
    """``(1 - cos q)(a cos phi + b cos t)`` plus optional extra terms."""
    terms: list[Term] = []
    if phi_weight:
        terms += real_mode(0, 1, 0, _one_minus_cos_q(phi_weight))
    if t_weight:
        terms += real_mode(0, 0, 1, _one_minus_cos_q(t_weight))
    terms += list(extra)
    return TrigPerturbation(tuple(terms))


def classical_arnold(eps: float = 1e-3, **kw) -> ModelSpec:
    return ModelSpec(arnold_perturbation(), eps, **kw)


def resonant_arnold(eps: float = 1e-3, saddle_amplitude: float = 1.0, **kw) -> ModelSpec:
    """Classical Arnold plus a pendulum-free ``A cos phi`` term (resonance at I = 0)."""
    extra = real_mode(0, 1, 0, saddle_amplitude)
    return ModelSpec(arnold_perturbation(extra=extra), eps, **kw)


def pendulum_free(eps: float = 1e-3, **kw) -> ModelSpec:
    """``I cos t + cos 2t``: no pendulum dependence and no rotor angle, so ``I`` is conserved."""
    terms = real_mode(0, 0, 1, [((1, 0, 0, 0), 1.0)]) + real_mode(0, 0, 2, 1.0)
    return ModelSpec(TrigPerturbation(tuple(terms)), eps, **kw)


CATALOG = {
    "classical-arnold": classical_arnold,
    "resonant-arnold": resonant_arnold,
    "pendulum-free": pendulum_free,
}
