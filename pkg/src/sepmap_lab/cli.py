"""Command-line entry point.

Every command writes a JSON record (sorted keys, ``repr`` floats) and, where
tabular, a CSV file into ``--out``. Each record embeds the full run
configuration, its sha256, the model sha256, the seed and the tool version, so
reruns with the same configuration reproduce the bytes.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import click
import numpy as np

from . import __version__
from . import golden as golden_mod
from .diffusion import (WalkSpec, drift_variance_from_increments, simulate_ensemble)
from .errors import SepmapError
from .experiments import EPS_LADDER, end_to_end, inner_flow_ladder, ladder
from .flow import numeric_return_map
from .geometry import SeparatrixBranch, chi, kappa, mu, pendulum_separatrix
from .hamiltonian import (CATALOG, ModelSpec, PhasePoint, parse_model, saddle_linearization,
                          serialize_model)
from .melnikov import melnikov_grid
from .sepmap import SepMapState, iterate, step, window_constants

THREADS_ENV = "SEPMAP_THREADS"
THRESHOLDS = {"nonres": 1.6, "res": 1.5, "inner": 1.7}


@dataclass
class RunConfig:
    model_ref: str
    out: Path
    seed: int
    threads: int
    tol: float
    window_c: float = 0.5
    window_a: float = 0.5
    params: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"model": self.model_ref, "seed": self.seed, "threads": self.threads,
                "tol": self.tol, "window_c": self.window_c, "window_a": self.window_a,
                "params": self.params}

    def digest(self) -> str:
        return hashlib.sha256(_dumps(self.as_dict()).encode()).hexdigest()


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (SeparatrixBranch,)):
        return str(obj)
    return obj


def _dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=1) + "\n"


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def load_model(ref: str, eps: float | None = None) -> ModelSpec:
    if ref in CATALOG:
        model = CATALOG[ref](eps if eps is not None else 1e-3)
    else:
        model = parse_model(Path(ref).read_text())
    if eps is not None and eps != model.epsilon:
        model = model.with_epsilon(eps)
    return model


def _emit(cfg: RunConfig, name: str, payload: dict, model: ModelSpec | None = None,
          csv: tuple[list[str], list[list]] | None = None) -> dict:
    cfg.out.mkdir(parents=True, exist_ok=True)
    record = {"tool": "sepmap-lab", "version": __version__, "command": name,
              "config": cfg.as_dict(), "config_sha256": cfg.digest(), "seed": cfg.seed,
              "model_sha256": model.digest() if model is not None else None,
              "result": payload}
    files = {"json": str(cfg.out / f"{name}.json")}
    if csv is not None:
        header, rows = csv
        lines = [f"# config_sha256={cfg.digest()}",
                 f"# model_sha256={model.digest() if model is not None else 'none'}",
                 f"# seed={cfg.seed} version={__version__}",
                 ",".join(header)]
        lines += [",".join(_cell(v) for v in row) for row in rows]
        (cfg.out / f"{name}.csv").write_text("\n".join(lines) + "\n")
        files["csv"] = str(cfg.out / f"{name}.csv")
    (cfg.out / f"{name}.json").write_text(_dumps(record))
    click.echo(_dumps({"command": name, "files": files}), nl=False)
    return record


def _pool_map(threads: int):
    if threads <= 1:
        return map, None
    ex = ProcessPoolExecutor(max_workers=threads)
    return ex.map, ex


def _parse_floats(text: str, n: int | None = None) -> list[float]:
    vals = [float(x) for x in text.split(",") if x.strip()]
    if n is not None and len(vals) != n:
        raise click.BadParameter(f"expected {n} comma-separated numbers")
    return vals


# ---------------------------------------------------------------- group

@click.group()
@click.option("--model", "model_ref", default="classical-arnold", show_default=True,
              help="Catalog name or path to a model file.")
@click.option("--out", default="out", show_default=True, type=click.Path(file_okay=False))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--threads", default=None, type=int, help=f"Worker processes (else ${THREADS_ENV}, else 1).")
@click.option("--tol", default=1e-12, show_default=True, type=float, help="Integrator tolerance.")
@click.option("--window-c", default=0.5, show_default=True, type=float,
              help="Collar constant c of the window c^-1 eps^(1+a) < |w| < c eps.")
@click.option("--window-a", default=0.5, show_default=True, type=float, help="Window exponent a.")
@click.version_option(__version__)
@click.pass_context
def main(ctx, model_ref, out, seed, threads, tol, window_c, window_a):
    """Separatrix-map laboratory."""
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV, "1"))
    ctx.obj = RunConfig(model_ref, Path(out), seed, max(1, threads), tol, window_c, window_a)
    ctx.with_resource(window_constants(window_c, window_a))


def _cfg(ctx, **params) -> RunConfig:
    cfg: RunConfig = ctx.obj
    cfg.params = {"command": ctx.command_path, **params}
    return cfg


# ---------------------------------------------------------------- geometry

@main.group()
def geometry():
    """Separatrix parametrization and gluing constants."""


@geometry.command("tabulate")
@click.option("--branch", default="+", type=click.Choice(["+", "-"]))
@click.option("--tau-grid", default="-5:5:11", show_default=True, help="a:b:n")
@click.option("--eta", default=0.0, type=float)
@click.pass_context
def geometry_tabulate(ctx, branch, tau_grid, eta):
    a, b, n = tau_grid.split(":")
    taus = np.linspace(float(a), float(b), int(n))
    cfg = _cfg(ctx, branch=branch, tau_grid=tau_grid, eta=eta)
    rows = []
    for t in taus:
        p, q = pendulum_separatrix(branch, float(t))
        rows.append([float(t), p, q, chi(eta, branch, float(t))])
    _emit(cfg, "geometry_tabulate", {"n": len(rows)}, None, (["tau", "p", "q", "chi"], rows))


@geometry.command("constants")
@click.option("--eta", default=0.0, type=float)
@click.pass_context
def geometry_constants(ctx, eta):
    cfg = _cfg(ctx, eta=eta)
    sd = saddle_linearization(eta)
    res = {"lambda": sd.lam, "a_plus": sd.a_plus, "a_minus": sd.a_minus}
    for s in ("+", "-"):
        res[f"kappa{s}"] = kappa(eta, s)
        res[f"mu{s}"] = mu(eta, s)
    _emit(cfg, "geometry_constants", res)


# ---------------------------------------------------------------- melnikov

@main.group()
def melnikov():
    """Splitting potential."""


@melnikov.command("grid")
@click.option("--eta", required=True, type=float)
@click.option("--sigma", default="+", type=click.Choice(["+", "-"]))
@click.option("--nxi", default=16, type=int)
@click.option("--ntau", default=16, type=int)
@click.option("--eps", default=None, type=float)
@click.pass_context
def melnikov_grid_cmd(ctx, eta, sigma, nxi, ntau, eps):
    cfg = _cfg(ctx, eta=eta, sigma=sigma, nxi=nxi, ntau=ntau, eps=eps)
    model = load_model(cfg.model_ref, eps)
    g = melnikov_grid(eta, sigma, model, nxi, ntau)
    rows = [[float(x), float(t), float(g.values[i, j]), g.error]
            for i, x in enumerate(g.xi) for j, t in enumerate(g.tau)]
    _emit(cfg, "melnikov_grid", {"eta": eta, "sigma": sigma, "nxi": nxi, "ntau": ntau,
                                 "quad_error": g.error}, model,
          (["xi", "tau", "theta", "err_est"], rows))


# ---------------------------------------------------------------- map

@main.group("map")
def map_group():
    """Separatrix-map evaluation."""


def _map_row(n, s: SepMapState, d):
    return [n, s.eta, s.xi, s.h, s.tau, str(s.sigma),
            d.w_value if d else "", d.bar_t if d else "", d.residual if d else ""]


def _diag(d):
    if d is None:
        return None
    return {"w": d.w_value, "zone": str(d.zone), "bar_t": d.bar_t, "iters": d.fixed_point_iters,
            "residual": d.residual, "regime": d.regime}


MAP_COLS = ["n", "eta", "xi", "h", "tau", "sigma", "w", "bar_t", "residual"]


@map_group.command("step")
@click.option("--regime", default="auto", type=click.Choice(["auto", "nonres", "res", "treschev"]))
@click.option("--state", "state_text", required=True, help="eta,xi,h,tau,sigma")
@click.option("--eps", default=None, type=float)
@click.pass_context
def map_step(ctx, regime, state_text, eps):
    cfg = _cfg(ctx, regime=regime, state=state_text, eps=eps)
    model = load_model(cfg.model_ref, eps)
    s0 = SepMapState.parse(state_text)
    try:
        s1, d = step(s0, model, regime)
    except SepmapError as exc:
        _emit(cfg, "map_step", {"error": type(exc).__name__, "message": str(exc)}, model)
        sys.exit(2)
    _emit(cfg, "map_step", {"state": s0.as_tuple(), "image": s1.as_tuple(), "diagnostics": _diag(d)},
          model, (MAP_COLS, [_map_row(0, s0, None), _map_row(1, s1, d)]))


@map_group.command("orbit")
@click.option("--regime", default="auto", type=click.Choice(["auto", "nonres", "res", "treschev"]))
@click.option("--state", "state_text", required=True, help="eta,xi,h,tau,sigma")
@click.option("--eps", default=None, type=float)
@click.option("--n", "n_steps", default=10, type=int)
@click.pass_context
def map_orbit(ctx, regime, state_text, eps, n_steps):
    cfg = _cfg(ctx, regime=regime, state=state_text, eps=eps, n=n_steps)
    model = load_model(cfg.model_ref, eps)
    orbit = iterate(SepMapState.parse(state_text), model, n_steps, regime)
    rows = [_map_row(i, s, d) for i, (s, d) in enumerate(orbit.records)]
    _emit(cfg, "map_orbit", {"reason": orbit.reason, "length": len(orbit),
                             "records": [{"state": s.as_tuple(), "diagnostics": _diag(d)}
                                         for s, d in orbit.records]},
          model, (MAP_COLS, rows))


# ---------------------------------------------------------------- flow

@main.group()
def flow():
    """Direct integration of the full flow."""


@flow.command("return")
@click.option("--state", "state_text", required=True, help="I,phi,p,q,t")
@click.option("--eps", default=None, type=float)
@click.option("--tol", default=None, type=float, help="Overrides the global tolerance.")
@click.pass_context
def flow_return(ctx, state_text, eps, tol):
    if tol is not None:
        ctx.obj.tol = tol
    cfg = _cfg(ctx, state=state_text, eps=eps)
    model = load_model(cfg.model_ref, eps)
    pt = PhasePoint(*_parse_floats(state_text, 5))
    try:
        res = numeric_return_map(model, pt, tol=cfg.tol)
    except SepmapError as exc:
        _emit(cfg, "flow_return", {"error": type(exc).__name__, "message": str(exc)}, model)
        sys.exit(2)
    ev = res.event
    _emit(cfg, "flow_return", {"point": ev.point.as_array(), "time": ev.time, "branch": str(ev.section_id),
                               "extracted": res.extracted.as_tuple(), "steps": res.transit_steps}, model)


def _scaling(ctx, regime, eps_list, samples, name, with_regime=True, n_inner=16):
    cfg = _cfg(ctx, regime=regime, eps_list=eps_list, samples=samples)
    eps = _parse_floats(eps_list)
    out, status = {}, True
    regimes = ["nonres", "res", "inner"] if regime == "all" else [regime]
    rows = []
    pmap, ex = _pool_map(cfg.threads)
    try:
        for r in regimes:
            if r == "inner":
                res = inner_flow_ladder(eps, n=n_inner, seed=cfg.seed)
                ok = res.slope >= THRESHOLDS[r]
                out[r] = {"slope": res.slope, "errors": res.errors, "threshold": THRESHOLDS[r], "pass": ok}
                rows += [[r, e, err, "", res.slope] for e, err in zip(res.eps, res.errors)]
            else:
                res = ladder(r, eps, samples, cfg.seed, tol=cfg.tol, pool_map=pmap)
                ok = res.slope_eta >= THRESHOLDS[r] and (r != "nonres" or res.slope_h >= THRESHOLDS[r])
                out[r] = {"slope_eta": res.slope_eta, "slope_h": res.slope_h, "slope_xi": res.slope_xi,
                          "slope_tau": res.slope_tau, "threshold": THRESHOLDS[r], "pass": ok,
                          "rows": [vars(x) for x in res.rows], "meta": res.meta}
                rows += [[r, x.eps, x.eta_err, x.h_err, res.slope_eta] for x in res.rows]
            status &= ok
    finally:
        if ex is not None:
            ex.shutdown()
    header = ["regime", "eps", "mean_abs_err_eta", "mean_abs_err_h", "fitted_slope"]
    if not with_regime:
        header, rows = header[1:], [r[1:] for r in rows]
    _emit(cfg, name, {"regimes": out, "pass": status}, None, (header, rows))
    if not status:
        sys.exit(1)


EPS_DEFAULT = ",".join(repr(e) for e in EPS_LADDER)


@flow.command("verify-scaling")
@click.option("--regime", default="nonres", type=click.Choice(["nonres", "res"]))
@click.option("--eps-list", default=EPS_DEFAULT, show_default=True)
@click.option("--samples", default=64, type=int)
@click.pass_context
def flow_verify_scaling(ctx, regime, eps_list, samples):
    _scaling(ctx, regime, eps_list, samples, "flow_verify_scaling", with_regime=False)


@main.command("verify-scaling")
@click.option("--regime", default="all", type=click.Choice(["nonres", "res", "inner", "all"]))
@click.option("--eps-list", default=EPS_DEFAULT, show_default=True)
@click.option("--samples", default=64, type=int)
@click.pass_context
def verify_scaling(ctx, regime, eps_list, samples):
    """Flow-versus-map remainder exponents; exit 1 if any threshold fails."""
    _scaling(ctx, regime, eps_list, samples, "verify_scaling")


# ---------------------------------------------------------------- diffusion

@main.group()
def diffuse():
    """Random-walk model and estimators."""


@diffuse.command("walk")
@click.option("--spec", "spec_path", default=None, type=click.Path(dir_okay=False),
              help="JSON with sigma, b, delta, eta0, s (constants).")
@click.option("--samples", default=10_000, type=int)
@click.option("--bins", default=64, type=int)
@click.pass_context
def diffuse_walk(ctx, spec_path, samples, bins):
    raw = {"sigma": 1.0, "b": 0.0, "delta": 0.01, "eta0": 0.0, "s": 1.0}
    if spec_path:
        raw.update(json.loads(Path(spec_path).read_text()))
    cfg = _cfg(ctx, spec=raw, samples=samples, bins=bins)
    spec = WalkSpec.constant(raw["sigma"], raw["b"], raw["delta"], raw["eta0"], raw["s"])
    s = simulate_ensemble(spec, samples, cfg.seed, bins)
    rows = [[s.bin_edges[i], s.bin_edges[i + 1], int(c)] for i, c in enumerate(s.counts)]
    _emit(cfg, "diffuse_walk", {"n_samples": s.n_samples, "n_steps": spec.n_steps, "mean": s.mean,
                                "variance": s.variance, "ks_distance": s.ks_distance,
                                "target": list(s.target)}, None, (["lo", "hi", "count"], rows))


def _read_orbit_csv(path: Path) -> np.ndarray:
    lines = [l for l in Path(path).read_text().splitlines() if l and not l.startswith("#")]
    header = lines[0].split(",")
    col = header.index("eta")
    return np.array([float(l.split(",")[col]) for l in lines[1:]])


def _bin_rows(est):
    return [[b.lo, b.hi, b.count, b.b_hat, b.sigma_hat, b.b_se, b.sigma_se, int(b.flagged)] for b in est]


BIN_COLS = ["lo", "hi", "count", "b_hat", "sigma_hat", "b_se", "sigma_se", "flagged"]


@diffuse.command("estimate")
@click.option("--orbit", "orbit_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--bins", default=10, type=int)
@click.option("--eps", required=True, type=float)
@click.pass_context
def diffuse_estimate(ctx, orbit_path, bins, eps):
    cfg = _cfg(ctx, orbit=str(orbit_path), bins=bins, eps=eps)
    eta = _read_orbit_csv(Path(orbit_path))
    if eta.size < 1000:
        _emit(cfg, "diffuse_estimate", {"error": "InsufficientData", "n": int(eta.size)})
        sys.exit(2)
    est = drift_variance_from_increments(eta[:-1], np.diff(eta), eps, bins)
    _emit(cfg, "diffuse_estimate", {"n": int(eta.size), "bins": bins}, None, (BIN_COLS, _bin_rows(est)))


# ---------------------------------------------------------------- golden and end-to-end

@main.command()
@click.option("--dir", "directory", default=None, type=click.Path(file_okay=False),
              help="Golden directory (default: packaged tables).")
@click.option("--regenerate", is_flag=True, help="Write fresh oracle tables into --out/goldens.")
@click.option("--tol-scale", default=1.0, type=float)
@click.pass_context
def golden(ctx, directory, regenerate, tol_scale):
    """Diff oracles and implementation against the golden tables."""
    cfg = _cfg(ctx, dir=directory, regenerate=regenerate, tol_scale=tol_scale)
    if regenerate:
        paths = golden_mod.regenerate(cfg.out / "goldens")
        _emit(cfg, "golden", {"regenerated": [p.name for p in paths]})
        return
    report = golden_mod.check(Path(directory) if directory else None, tol_scale)
    ok = all(r["ok"] for r in report)
    _emit(cfg, "golden", {"tables": report, "pass": ok})
    if not ok:
        sys.exit(1)


@main.command("end-to-end")
@click.option("--eps", default=1e-3, type=float)
@click.option("--n", "n_steps", default=10_000, type=int)
@click.option("--eta0", default=0.8, type=float)
@click.option("--bins", default=8, type=int)
@click.pass_context
def end_to_end_cmd(ctx, eps, n_steps, eta0, bins):
    """Iterate the map, estimate the spread per bin and compare with the Melnikov variance."""
    cfg = _cfg(ctx, eps=eps, n=n_steps, eta0=eta0, bins=bins)
    model = load_model(cfg.model_ref, eps)
    res = end_to_end(model, n_steps, cfg.seed, eta0, bins)
    rows = [r + [th, z] for r, th, z in zip(_bin_rows(res.bins), res.theory, res.z)]
    populated = [z for b, z in zip(res.bins, res.z) if not b.flagged and math.isfinite(z)]
    frac = sum(abs(z) < 3 for z in populated) / len(populated) if populated else math.nan
    _emit(cfg, "end_to_end", {"n_increments": res.n_increments, "restarts": res.n_restarts,
                              "fraction_within_3se": frac, "pass": bool(frac >= 0.8)},
          model, (BIN_COLS + ["sigma_theory", "z"], rows))


if __name__ == "__main__":
    main()
