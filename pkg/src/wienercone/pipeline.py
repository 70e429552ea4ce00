"""Batch orchestration: each subcommand computes a JSON-ready payload plus CSV tables."""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .capacity import AtomicMeasure, Superfunction
from .config import RunConfig
from .criteria import (
    BlockRow,
    asymptotic_profile,
    exceptional_set,
    profile_decreasing,
    theorem8_crosscheck,
    thinness_at_boundary_point,
    wiener_report,
)
from .errors import WienerConeError
from .kernels import ORACLE, ConeContext, KernelModel, build_context, fit_envelope, order_agreement
from .radial import eval_basis, wronskian_residual
from .sets import discretize

__all__ = [
    "RunArtifacts",
    "make_context",
    "make_model",
    "run_pipeline",
    "run_radial",
    "run_eigen",
    "run_profile",
    "run_boundary",
    "run_oracle_compare",
    "emit_report",
    "to_jsonable",
]


@dataclass
class RunArtifacts:
    """Everything a subcommand produced.  ``failed`` marks numerical failures (exit status 3)."""

    command: str
    payload: dict
    tables: dict[str, tuple[list[str], list[list]]] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    failed: bool = False


def to_jsonable(obj):
    """Plain JSON types; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def make_context(cfg: RunConfig) -> ConeContext:
    return build_context(cfg.domain, cfg.potential, float(cfg.raw["kernel"]["kappa_martin"]))


def make_model(cfg: RunConfig, context: ConeContext) -> KernelModel:
    k = cfg.raw["kernel"]
    return KernelModel(context, c_mid=float(k["c_mid"]), h_reg=float(k["h_reg"]), mode=k["mode"])


def _header(cfg: RunConfig, command: str) -> dict:
    return {"tool": "wienercone", "version": __version__, "command": command, "config": cfg.raw}


def _oracle_section(context: ConeContext, cfg: RunConfig, seed: int) -> dict:
    n_pairs = int(cfg.raw["oracle"]["n_pairs"])
    env = fit_envelope(KernelModel(context, mode=ORACLE), n_pairs, seed)
    agree = order_agreement(context, n_pairs, seed, float(cfg.raw["kernel"]["c_mid"]))
    return {"envelope": env.as_dict(), "order_agreement_max_abs_log": agree, "order_agreement_ok": agree <= math.log(8.0)}


def run_pipeline(cfg: RunConfig, threads: int = 1, oracle: bool = False, seed: Optional[int] = None) -> RunArtifacts:
    """Discretize every set, solve per block, build both Wiener reports and the consistency check."""
    seed = int(cfg.raw["seed"] if seed is None else seed)
    timings = {}
    t0 = time.perf_counter()
    context = make_context(cfg)
    model = make_model(cfg, context)
    timings["setup"] = time.perf_counter() - t0
    disc = cfg.raw["discretization"]
    reports, checks, rows = [], [], []
    failed = False
    for spec in cfg.sets:
        t1 = time.perf_counter()
        decomp = discretize(spec, float(disc["resolution"]), cfg.k_range, context.domain, context.eigen, int(disc["point_cap"]))
        rep = wiener_report(decomp, model, cfg.thresholds, threads=threads)
        chk = theorem8_crosscheck(decomp, model, cfg.thresholds, float(cfg.raw["subcone_margin"]), report=rep)
        timings[f"set:{spec.name}"] = time.perf_counter() - t1
        failed |= bool(rep.errors)
        d = rep.as_dict()
        d["coarsened_blocks"] = sorted(k for k, v in decomp.coarsened.items() if v)
        d["skipped_primitives"] = list(decomp.skipped)
        reports.append(d)
        checks.append(chk)
        rows.extend([spec.name, *r.csv_row()] for r in rep.rows)
    payload = _header(cfg, "classify")
    payload.update({"seed": seed, "sets": reports, "theorem8": checks})
    if oracle or cfg.raw["oracle"]["enabled"]:
        t1 = time.perf_counter()
        payload["oracle_comparison"] = _oracle_section(context, cfg, seed)
        timings["oracle"] = time.perf_counter() - t1
    tables = {"wiener": (["set", *BlockRow.CSV_FIELDS], rows)}
    return RunArtifacts("classify", payload, tables, timings, failed)


def run_radial(cfg: RunConfig, samples: int = 65) -> RunArtifacts:
    t0 = time.perf_counter()
    context = make_context(cfg)
    b = context.basis
    k0, k1 = cfg.k_range
    r = np.geomspace(2.0**k0, 2.0 ** (k1 + 1), samples)
    V, W, dV, dW = eval_basis(b, r)
    payload = _header(cfg, "radial")
    payload["radial"] = {
        "n": b.n,
        "lambda": b.lam,
        "kappa": b.kappa,
        "iota_plus": b.iota_plus,
        "iota_minus": b.iota_minus,
        "chi": b.chi,
        "chi_prime": b.chi_prime,
        "tail_mode": b.tail_mode,
        "wronskian_residual": wronskian_residual(b),
        "potential": cfg.potential.label,
    }
    rows = [[*map(float, row)] for row in zip(r, V, W, dV, dW)]
    return RunArtifacts("radial", payload, {"radial": (["r", "V", "W", "dV", "dW"], rows)}, {"total": time.perf_counter() - t0})


def run_eigen(cfg: RunConfig, samples: int = 33) -> RunArtifacts:
    t0 = time.perf_counter()
    context = make_context(cfg)
    e = context.eigen
    payload = _header(cfg, "eigen")
    payload["eigen"] = {
        "domain": cfg.domain.describe(),
        "lambda": e.lam,
        "nu": e.nu,
        "amplitude": e.amplitude,
        "J_Omega": e.J_Omega,
        "normal_derivative": e.normal_derivative,
        "normalization_residual": e.normalization_residual,
    }
    psi = np.linspace(0.0, cfg.domain.half_aperture, samples)
    rows = [[float(a), float(b)] for a, b in zip(psi, e.profile(psi))]
    return RunArtifacts("eigen", payload, {"eigen": (["psi", "phi"], rows)}, {"total": time.perf_counter() - t0})


def _measure(items: list, n: int, where: str) -> Optional[AtomicMeasure]:
    if not items:
        return None
    try:
        X = np.array([it["point"] for it in items], dtype=float).reshape(-1, n)
        w = np.array([it["weight"] for it in items], dtype=float)
    except (KeyError, TypeError, ValueError):
        from .errors import ConfigError

        raise ConfigError(f"profile.{where} entries need 'point' ({n} coordinates) and 'weight'") from None
    return AtomicMeasure(X, w)


def superfunction_from_config(cfg: RunConfig) -> Superfunction:
    sec = cfg.raw["profile"]
    n = cfg.domain.n
    return Superfunction(
        float(sec.get("c_inf", 0.0)),
        float(sec.get("c_origin", 0.0)),
        _measure(sec.get("mu", []), n, "mu"),
        _measure(sec.get("nu", []), n, "nu"),
    )


def run_profile(cfg: RunConfig) -> RunArtifacts:
    t0 = time.perf_counter()
    context = make_context(cfg)
    model = make_model(cfg, context)
    v = superfunction_from_config(cfg)
    res = float(cfg.raw["discretization"]["resolution"])
    H = exceptional_set(v, context, model, cfg.k_range, res)
    rows = asymptotic_profile(v, context, model, cfg.k_range, H, res)
    payload = _header(cfg, "profile")
    payload["profile"] = {
        "c_inf": v.c_inf,
        "exceptional_points": {str(b.k): b.size for b in H},
        "rows": rows,
        "decreasing": profile_decreasing(rows),
    }
    table = (["k", "n_points", "deviation", "exceptional_points"], [[r["k"], r["n_points"], r["deviation"], H.blocks[r["k"]].size] for r in rows])
    return RunArtifacts("profile", payload, {"profile": table}, {"total": time.perf_counter() - t0})


def run_boundary(cfg: RunConfig) -> RunArtifacts:
    t0 = time.perf_counter()
    context = make_context(cfg)
    model = make_model(cfg, context)
    sec = cfg.raw["boundary"]
    q = context.domain.boundary_point(float(sec["t"]))
    out, rows = [], []
    for spec in cfg.sets:
        rep = thinness_at_boundary_point(spec, q, model, int(sec["depth"]), float(sec["spacing"]), thresholds=cfg.thresholds)
        d = rep.as_dict()
        d["name"] = spec.name
        out.append(d)
        rows.extend([spec.name, r["m"], r["radius"], r["r_m"], r["n_points"]] for r in d["rows"])
    payload = _header(cfg, "boundary")
    payload["boundary"] = out
    table = (["set", "m", "radius", "r_m", "n_points"], rows)
    return RunArtifacts("boundary", payload, {"boundary": table}, {"total": time.perf_counter() - t0})


def run_oracle_compare(cfg: RunConfig, seed: Optional[int] = None) -> RunArtifacts:
    t0 = time.perf_counter()
    seed = int(cfg.raw["seed"] if seed is None else seed)
    context = make_context(cfg)
    payload = _header(cfg, "oracle-compare")
    payload["seed"] = seed
    payload["oracle_comparison"] = _oracle_section(context, cfg, seed)
    return RunArtifacts("oracle-compare", payload, {}, {"total": time.perf_counter() - t0})


def emit_report(art: RunArtifacts, out_dir: str | Path, formats=("json", "csv")) -> list[Path]:
    """Write ``<command>.json`` and one CSV per table; timings go to a separate file.

    The report files are byte-stable for identical inputs and tool version.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise WienerConeError(f"output directory {out} is not writable: {exc.strerror}") from None
    stem = art.command.replace("-", "_")
    written = []
    if "json" in formats:
        p = out / f"{stem}.json"
        p.write_text(json.dumps(to_jsonable(art.payload), indent=2, sort_keys=True, allow_nan=False) + "\n")
        written.append(p)
    if "csv" in formats:
        for name, (header, rows) in sorted(art.tables.items()):
            p = out / f"{name}.csv"
            with open(p, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(header)
                w.writerows(to_jsonable(rows))
            written.append(p)
    t = out / f"{stem}.timings.json"
    t.write_text(json.dumps({k: round(v, 6) for k, v in sorted(art.timings.items())}, indent=2) + "\n")
    written.append(t)
    return written
