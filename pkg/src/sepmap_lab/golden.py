"""Golden tables: closed-form and enumeration oracles frozen as package data."""

from __future__ import annotations

import json
import math
from importlib import resources
from pathlib import Path

import numpy as np

from .geometry import kappa
from .hamiltonian import ModelSpec, arnold_perturbation
from .melnikov import melnikov_grid
from .sepmap import select_bar_t

GOLDEN_FILES = ("melnikov_arnold.json", "kappa.json", "bar_t.json")


def residue_theta(eta, xi):
    """``2 pi eta cos(xi) / sinh(pi eta / 2)`` with the ``eta -> 0`` limit ``4 cos(xi)``."""
    eta = np.asarray(eta, dtype=float)
    x = np.pi * eta / 2
    safe = np.where(x == 0, 1.0, x)
    ratio = np.where(x == 0, 1.0, safe / np.sinh(safe))
    return 4.0 * ratio * np.cos(xi)


def _melnikov_oracle() -> dict:
    eta = np.linspace(0.3, 2.0, 16)
    xi = np.linspace(0.0, 2 * math.pi, 16)
    E, X = np.meshgrid(eta, xi, indexing="ij")
    return {"eta": eta.tolist(), "xi": xi.tolist(), "theta": residue_theta(E, X).tolist(), "tol": 1e-8}


def _kappa_oracle() -> dict:
    # p ~ 4 e^{-|t|} and |q - saddle| ~ 4 e^{-|t|} on both tails; each eigen-projection
    # is 8 e^{-T}/sqrt(2), so the product is 32 e^{-2T} on either loop
    return {"+": 1 / 32, "-": 1 / 32, "tol": 1e-6}


def _bar_t_oracle() -> dict:
    rows = []
    for logw in np.linspace(-14.0, -3.0, 23):
        for c in (0.5, math.exp(-1.0)):
            w = math.exp(float(logw))
            ok = [n for n in range(0, 40) if c <= abs(w) * math.exp(n) <= 1 / c]
            x = -math.log(w)
            best = min(ok, key=lambda n: (abs(n - x), n % 2))
            rows.append({"w": w, "c": c, "admissible": ok, "bar_t": best})
    return {"rows": rows}


ORACLES = {"melnikov_arnold.json": _melnikov_oracle, "kappa.json": _kappa_oracle,
           "bar_t.json": _bar_t_oracle}


def _implementation(name: str, golden: dict):
    if name == "melnikov_arnold.json":
        model = ModelSpec(arnold_perturbation(1.0, 0.0), 0.0)
        vals = []
        for e in golden["eta"]:
            g = melnikov_grid(e, "+", model, nxi=len(golden["xi"]), ntau=1, tau_range=(0.0, 0.0))
            vals.append(g.values[:, 0].tolist())
        return {**golden, "theta": vals}
    if name == "kappa.json":
        return {**golden, "+": kappa(0.0, "+", 20.0), "-": kappa(0.0, "-", 20.0)}
    if name == "bar_t.json":
        rows = [{**r, "bar_t": select_bar_t(None, r["w"], c=r["c"])} for r in golden["rows"]]
        return {"rows": rows}
    raise KeyError(name)


def _max_diff(a: dict, b: dict, name: str) -> float:
    if name == "melnikov_arnold.json":
        return float(np.max(np.abs(np.array(a["theta"]) - np.array(b["theta"]))))
    if name == "kappa.json":
        return max(abs(a[s] - b[s]) / abs(b[s]) for s in "+-")
    return float(sum(ra["bar_t"] != rb["bar_t"] for ra, rb in zip(a["rows"], b["rows"])))


def _tol(name: str, golden: dict, scale: float) -> float:
    return 0.0 if name == "bar_t.json" else golden["tol"] * scale


def load_golden(name: str, directory: Path | None = None) -> dict:
    if directory is not None:
        return json.loads((Path(directory) / name).read_text())
    return json.loads(resources.files("sepmap_lab.goldens").joinpath(name).read_text())


def dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def regenerate(directory: Path) -> list[Path]:
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for name, fn in ORACLES.items():
        p = directory / name
        p.write_text(dump_json(fn()))
        out.append(p)
    return out


def check(directory: Path | None = None, tol_scale: float = 1.0) -> list[dict]:
    """Diff oracles and the implementation against the stored tables.

    A missing or unreadable table is reported as corrupted.
    """
    report = []
    for name, fn in ORACLES.items():
        try:
            golden = load_golden(name, directory)
            oracle = fn()
            d_oracle = _max_diff(oracle, golden, name)
            d_impl = _max_diff(_implementation(name, golden), golden, name)
        except (OSError, ValueError, KeyError, TypeError, IndexError) as exc:
            report.append({"table": name, "ok": False, "error": f"corrupted: {type(exc).__name__}: {exc}"})
            continue
        tol = _tol(name, golden, tol_scale)
        report.append({"table": name, "oracle_diff": d_oracle, "impl_diff": d_impl, "tol": tol,
                       "ok": bool(d_oracle <= tol and d_impl <= tol)})
    return report
