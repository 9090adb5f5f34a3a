"""Scaling ladders comparing the separatrix maps with the direct flow."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SepmapError
from .flow import (ResonanceVector, averaged_inner_flow, extract_coords, integrate_truncated_resonant,
                   resonant_table, return_batch, section_point)
from .hamiltonian import ModelSpec, PhasePoint, classical_arnold, resonant_arnold
from .diffusion import drift_variance_from_increments, melnikov_variance
from .errors import NoAdmissibleTime, OutOfNeighborhood, WindowViolation
from .sepmap import SepMapState, in_window, map_nonresonant, map_resonant, step, w_window

EPS_LADDER = (1e-4, 3e-4, 1e-3, 3e-3, 1e-2)


def fit_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    lx = lx - lx.mean()
    return float(np.sum(lx * (ly - ly.mean())) / np.sum(lx * lx))


@dataclass
class LadderRow:
    eps: float
    n: int
    eta_err: float
    h_err: float
    xi_err: float
    tau_err: float
    eta_raw: float


@dataclass
class LadderResult:
    rows: list[LadderRow]
    slope_eta: float
    slope_h: float
    slope_xi: float
    slope_tau: float
    meta: dict = field(default_factory=dict)


def _starts(model: ModelSpec, mapper, eta0: float, n: int, rng, tol: float):
    """Section points whose map image has ``w`` inside the admissible window.

    The physical energy is corrected a few times so that the map's ``w`` (or
    ``w0``) lands on a target drawn log-uniformly across the window.
    """
    lo, hi = w_window(model)
    out, states = [], []
    tries = 0
    while len(out) < n and tries < 20 * n:
        tries += 1
        xi = rng.uniform(0, 2 * math.pi)
        tau = rng.uniform(-math.pi, math.pi)
        sigma = int(rng.choice([-1, 1]))
        target = math.exp(rng.uniform(math.log(lo * 1.5), math.log(hi / 1.5))) * rng.choice([-1.0, 1.0])
        w_phys = target
        ok = False
        for _ in range(6):
            pt = section_point(eta0, xi, tau, w_phys, sigma)
            try:
                s0 = extract_coords(model, pt)
                st, d = mapper(s0, model, check_window=False)
            except SepmapError:
                break
            if in_window(d.w_value, model) and abs(d.w_value - target) < 0.2 * abs(target):
                ok = True
                break
            w_phys += target - d.w_value
        if ok:
            out.append(pt.as_array())
            states.append((s0, st))
    return np.array(out), states


REGIMES = {
    "nonres": (lambda eps, amp: classical_arnold(eps), map_nonresonant, 0.8),
    "res": (lambda eps, amp: resonant_arnold(eps, amp), map_resonant, 0.1),
}


def ladder_rung(regime: str, eps: float, rung: int, n: int = 64, seed: int = 0,
                eta0: float | None = None, tol: float = 1e-12, amplitude: float = 0.25) -> LadderRow:
    """One rung of the flow-versus-map comparison; the stream is keyed on ``(seed, rung)``."""
    factory, mapper, default_eta = REGIMES[regime]
    eta0 = default_eta if eta0 is None else eta0
    rng = np.random.default_rng([seed, rung])
    model = factory(eps, amplitude)
    starts, states = _starts(model, mapper, eta0, n, rng, tol)
    e = {k: [] for k in ("eta", "h", "xi", "tau", "raw")}
    if len(starts):
        y, _, ok = return_batch(model, starts, tol=tol)
        for i in np.flatnonzero(ok):
            s0, st = states[i]
            s1 = extract_coords(model, PhasePoint.from_array(y[i]))
            e["eta"].append(abs(st.eta - s1.eta))
            e["h"].append(abs(st.h - s1.h))
            e["xi"].append(abs(math.remainder(st.xi - s1.xi, 2 * math.pi)))
            e["tau"].append(abs(math.remainder(st.tau - s1.tau, 2 * math.pi)))
            e["raw"].append(abs(s1.eta - s0.eta))
    mean = (lambda v: float(np.mean(v)) if v else math.nan)
    return LadderRow(eps, len(e["eta"]), *(mean(e[k]) for k in ("eta", "h", "xi", "tau", "raw")))


def _rung_star(args):
    return ladder_rung(*args)


def ladder(regime: str, eps_list=EPS_LADDER, n: int = 64, seed: int = 0, eta0: float | None = None,
           tol: float = 1e-12, amplitude: float = 0.25, pool_map=map) -> LadderResult:
    jobs = [(regime, eps, i, n, seed, eta0, tol, amplitude) for i, eps in enumerate(eps_list)]
    rows = list(pool_map(_rung_star, jobs))
    ep = [r.eps for r in rows]
    slopes = [fit_slope(ep, [getattr(r, f) for r in rows]) if all(getattr(r, f) > 0 for r in rows)
              else math.nan for f in ("eta_err", "h_err", "xi_err", "tau_err")]
    meta = {"regime": regime, "eta0": REGIMES[regime][2] if eta0 is None else eta0, "n": n,
            "seed": seed, "tol": tol}
    if regime == "res":
        meta["amplitude"] = amplitude
    return LadderResult(rows, *slopes, meta)


def nonresonant_ladder(eps_list=EPS_LADDER, n: int = 64, seed: int = 0, eta0: float = 0.8,
                       tol: float = 1e-12, pool_map=map) -> LadderResult:
    return ladder("nonres", eps_list, n, seed, eta0, tol, pool_map=pool_map)


def resonant_ladder(eps_list=EPS_LADDER, n: int = 64, seed: int = 0, eta0: float = 0.1,
                    amplitude: float = 0.25, tol: float = 1e-12, pool_map=map) -> LadderResult:
    return ladder("res", eps_list, n, seed, eta0, tol, amplitude, pool_map)


@dataclass
class InnerFlowResult:
    eps: list[float]
    errors: list[float]
    slope: float


def inner_flow_ladder(eps_list=EPS_LADDER, n: int = 16, seed: int = 0, J0: float = 0.1,
                      amplitude: float = 0.25, horizon: float | None = None,
                      n_times: int = 4) -> InnerFlowResult:
    """First-order averaged inner flow against the truncated resonant system.

    The error is the sup over ``bar_t`` in an even grid on ``(0, horizon]`` of
    the larger of the ``theta`` and ``J`` discrepancies, averaged over random
    initial phases. The default horizon ``2 log(1/max eps)`` is admissible for
    every rung, so the fit sees the power of ``eps`` rather than the growth of
    the time window.
    """
    rng = np.random.default_rng(seed)
    k = ResonanceVector(1, 0)
    T = horizon if horizon is not None else 2 * math.log(1 / max(eps_list))
    times = T * np.arange(1, n_times + 1) / n_times
    errs = []
    for eps in eps_list:
        model = resonant_arnold(eps, amplitude)
        th0 = rng.uniform(0, 2 * math.pi, n)
        J, th = np.full(n, J0), th0.copy()
        worst = np.zeros(n)
        prev = 0.0
        for bt in times:
            th, J = integrate_truncated_resonant(J, th, bt - prev, model, k, n_steps=32)
            prev = bt
            for i in range(n):
                th_p, J_p = averaged_inner_flow(J0, th0[i], bt, 0.0, model, k)
                worst[i] = max(worst[i], abs(math.remainder(th_p - th[i], 2 * math.pi)), abs(J_p - J[i]))
        errs.append(float(np.mean(worst)))
    return InnerFlowResult(list(eps_list), errs, fit_slope(eps_list, errs))


# ---------------------------------------------------------------- orbit statistics

@dataclass
class EndToEndResult:
    bins: list
    theory: list[float]
    z: list[float]
    n_increments: int
    n_restarts: int


def collect_increments(model: ModelSpec, n: int, seed: int = 0, eta0: float = 0.8,
                       policy: str = "auto") -> tuple[np.ndarray, np.ndarray, int]:
    """Run ``n`` map evaluations, restarting captured orbits at their current action.

    Every evaluation contributes its increment, whether or not the image is
    still inside the window; conditioning on the image would bias the spread.
    A restart keeps ``eta`` and draws fresh ``(xi, tau, sigma)`` and a
    log-uniform ``w`` inside the window.
    """
    rng = np.random.default_rng([seed, 7])
    lo, hi = w_window(model)

    def fresh(eta):
        w = math.exp(rng.uniform(math.log(lo), math.log(hi))) * rng.choice([-1.0, 1.0])
        return SepMapState(eta, rng.uniform(0, 2 * math.pi), eta * eta / 2 + w,
                           rng.uniform(-math.pi, math.pi), int(rng.choice([-1, 1])))

    state = fresh(eta0)
    starts, incs = [], []
    restarts = 0
    for _ in range(n):
        try:
            new, diag = step(state, model, policy, check_window=False)
        except (WindowViolation, NoAdmissibleTime, OutOfNeighborhood):
            restarts += 1
            state = fresh(state.eta)
            continue
        starts.append(state.eta)
        incs.append(new.eta - state.eta)
        if in_window(diag.w_value, model):
            state = new
        else:
            restarts += 1
            state = fresh(new.eta)
    return np.array(starts), np.array(incs), restarts


def end_to_end(model: ModelSpec, n: int = 10_000, seed: int = 0, eta0: float = 0.8, bins=8
               ) -> EndToEndResult:
    """Binned spread of orbit increments against the Melnikov variance."""
    eta, d, restarts = collect_increments(model, n, seed, eta0)
    est = drift_variance_from_increments(eta, d, model.epsilon, bins)
    edges = _edges_of(est)
    grid = np.linspace(edges[0], edges[-1], 33)
    var_grid = np.array([melnikov_variance(float(g), model) for g in grid])
    theory, z = [], []
    for b in est:
        sel = eta[(eta >= b.lo) & (eta < b.hi)]
        if b.flagged or sel.size == 0:
            theory.append(math.nan)
            z.append(math.nan)
            continue
        th = math.sqrt(float(np.mean(np.interp(sel, grid, var_grid))))
        theory.append(th)
        z.append((b.sigma_hat - th) / b.sigma_se if b.sigma_se > 0 else (0.0 if b.sigma_hat == th else math.inf))
    return EndToEndResult(est, theory, z, int(eta.size), restarts)


def _edges_of(est) -> list[float]:
    return [est[0].lo] + [b.hi for b in est]
