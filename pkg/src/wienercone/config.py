"""Run configuration: a single JSON file, validated and echoed with defaults filled in."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .criteria import Thresholds
from .errors import ConfigError, DomainError, UnsupportedConfigurationError
from .kernels import ORACLE, SURROGATE
from .radial import DEFAULT_R_MAX, DEFAULT_R_MIN, PotentialSpec, load_perturbation_csv
from .sets import AxisBeads, Ball, BoundaryRegion, ExplicitPoints, SetSpec, ShellSector
from .spherical import DomainSpec

__all__ = ["RunConfig", "parse_config", "config_from_dict", "DEFAULTS", "build_potential", "build_set"]

OUT_ENV = "WIENERCONE_OUT"

DEFAULTS: dict[str, Any] = {
    "cone": {"n": 3, "shape": "half_sphere", "alpha": None},
    "potential": {"kappa": 0.0, "perturbation": None, "r_min": DEFAULT_R_MIN, "r_max": DEFAULT_R_MAX},
    "kernel": {"mode": SURROGATE, "c_mid": 1.0, "h_reg": 1e-3, "kappa_martin": 1.0},
    "sets": [],
    "discretization": {"resolution": 0.25, "k_range": [0, 12], "point_cap": 4096},
    "thresholds": {"rho_thin": 0.9, "eps_tail": 1e-3, "delta_floor": 0.1},
    "output": {"directory": None, "formats": ["json", "csv"]},
    "seed": 0,
    "boundary": {"t": 1.0, "depth": 8, "spacing": 0.25},
    "profile": {"c_inf": 0.0, "c_origin": 0.0, "mu": [], "nu": []},
    "oracle": {"enabled": False, "n_pairs": 500},
    "subcone_margin": 0.5,
}

SHAPE_KEYS = {
    "ball": {"type", "center", "radius"},
    "shell_sector": {"type", "k_lo", "k_hi", "alpha_sub"},
    "axis_beads": {"type", "radius", "k_lo", "k_hi"},
    "explicit_points": {"type", "points", "h"},
    "boundary_region": {"type", "q", "power", "coeff", "extent"},
}
PERTURBATION_FORMS = {"samples", "csv", "rational"}


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration; ``raw`` is the full echo with defaults filled in."""

    raw: dict
    domain: DomainSpec
    potential: PotentialSpec
    sets: tuple[SetSpec, ...]
    thresholds: Thresholds
    source: Optional[str] = None

    def section(self, name: str) -> dict:
        return self.raw[name]

    @property
    def k_range(self) -> tuple[int, int]:
        k = self.raw["discretization"]["k_range"]
        return int(k[0]), int(k[1])

    @property
    def formats(self) -> tuple[str, ...]:
        return tuple(self.raw["output"]["formats"])

    def output_dir(self, override: Optional[str] = None) -> Path:
        import os

        d = override or self.raw["output"]["directory"] or os.environ.get(OUT_ENV) or "wienercone_out"
        return Path(d)


def _merge(user: dict, defaults: dict, path: str) -> dict:
    unknown = sorted(set(user) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown keys in {path or 'config'}: {', '.join(unknown)}")
    out = copy.deepcopy(defaults)
    for key, val in user.items():
        if isinstance(defaults[key], dict) and key not in ("profile",):
            if not isinstance(val, dict):
                raise ConfigError(f"{path + '.' if path else ''}{key} must be an object")
            out[key] = _merge(val, defaults[key], f"{path + '.' if path else ''}{key}")
        else:
            out[key] = val
    return out


def _rational(c: float, s: float):
    def p(r):
        r = np.asarray(r, dtype=float)
        return c / (1.0 + r**s)

    return p


def build_potential(sec: dict, base: Optional[Path] = None) -> PotentialSpec:
    """Potential from its config section.

    ``perturbation`` is null, ``{"samples": {"r": [...], "p": [...]}}``,
    ``{"csv": path}`` (two columns r, p) or ``{"rational": {"c": c, "s": s}}``
    meaning p(r) = c / (1 + r^s).
    """
    kappa, r_min, r_max = float(sec["kappa"]), float(sec["r_min"]), float(sec["r_max"])
    pert = sec["perturbation"]
    if pert is None:
        return PotentialSpec(kappa, None, r_min, r_max)
    if not isinstance(pert, dict) or len(pert) != 1 or next(iter(pert)) not in PERTURBATION_FORMS:
        raise ConfigError(f"potential.perturbation must be one of {sorted(PERTURBATION_FORMS)} or null")
    (form, val), = pert.items()
    if form == "samples":
        return PotentialSpec.from_samples(kappa, val["r"], val["p"], r_min, r_max, label="samples")
    if form == "csv":
        path = Path(val)
        if base is not None and not path.is_absolute():
            path = base / path
        r, p = load_perturbation_csv(path)
        return PotentialSpec.from_samples(kappa, r, p, r_min, r_max, label=f"csv:{Path(val).name}")
    c, s = float(val["c"]), float(val["s"])
    if not s > 0:
        raise ConfigError("potential.perturbation.rational.s must be positive")
    return PotentialSpec(kappa, _rational(c, s), r_min, r_max, label=f"rational(c={c:g}, s={s:g})")


def _shape(d: dict, n: int, where: str):
    kind = d.get("type")
    if kind not in SHAPE_KEYS:
        raise ConfigError(f"{where}: unsupported shape type {kind!r}; expected one of {sorted(SHAPE_KEYS)}")
    unknown = sorted(set(d) - SHAPE_KEYS[kind])
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {', '.join(unknown)}")

    def vec(key):
        v = tuple(float(x) for x in d[key])
        if len(v) != n:
            raise ConfigError(f"{where}.{key} must have {n} coordinates (cone.n = {n})")
        return v

    try:
        if kind == "ball":
            return Ball(vec("center"), float(d["radius"]))
        if kind == "shell_sector":
            a = d.get("alpha_sub")
            return ShellSector(int(d["k_lo"]), int(d["k_hi"]), None if a is None else float(a))
        if kind == "axis_beads":
            return AxisBeads(float(d["radius"]), int(d["k_lo"]), int(d["k_hi"]))
        if kind == "explicit_points":
            pts = np.asarray(d["points"], dtype=float).reshape(-1, n)
            return ExplicitPoints.from_arrays(pts, d["h"])
        return BoundaryRegion(vec("q"), float(d.get("power", 1.0)), float(d.get("coeff", 0.5)), float(d.get("extent", 1.0)))
    except KeyError as exc:
        raise ConfigError(f"{where}: missing field {exc.args[0]!r}") from None


def build_set(d: dict, n: int, index: int) -> SetSpec:
    where = f"sets[{index}]"
    unknown = sorted(set(d) - {"name", "shapes"})
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {', '.join(unknown)}")
    shapes = d.get("shapes", [])
    return SetSpec(tuple(_shape(s, n, f"{where}.shapes[{j}]") for j, s in enumerate(shapes)), str(d.get("name", f"set{index}")))


def config_from_dict(user: dict, source: Optional[str] = None, base: Optional[Path] = None) -> RunConfig:
    if not isinstance(user, dict):
        raise ConfigError("config root must be an object")
    raw = _merge(user, DEFAULTS, "")
    cone = raw["cone"]
    domain = DomainSpec(int(cone["n"]), str(cone["shape"]), None if cone["alpha"] is None else float(cone["alpha"]))
    potential = build_potential(raw["potential"], base)
    kern = raw["kernel"]
    if kern["mode"] not in (SURROGATE, ORACLE):
        raise ConfigError(f"kernel.mode must be {SURROGATE!r} or {ORACLE!r}")
    if kern["mode"] == ORACLE:
        bad = []
        if domain.n != 3:
            bad.append(f"cone.n={domain.n}")
        if domain.shape != "half_sphere":
            bad.append(f"cone.shape={domain.shape}")
        if not (potential.is_euler and potential.kappa == 0):
            bad.append("potential (a must be 0)")
        if bad:
            raise UnsupportedConfigurationError(
                f"kernel.mode={ORACLE} is inconsistent with {', '.join(bad)}; it needs n=3, half_sphere, a=0"
            )
    for key in ("c_mid", "h_reg", "kappa_martin"):
        if not float(kern[key]) > 0:
            raise ConfigError(f"kernel.{key} must be positive")
    disc = raw["discretization"]
    k = disc["k_range"]
    if not (isinstance(k, list) and len(k) == 2 and all(isinstance(x, int) for x in k) and k[0] <= k[1]):
        raise ConfigError("discretization.k_range must be [k_min, k_max] integers with k_min <= k_max")
    if 2.0 ** k[0] < potential.r_min or 2.0 ** (k[1] + 1) > potential.r_max:
        raise ConfigError(
            f"discretization.k_range {k} leaves the radial grid [potential.r_min={potential.r_min:g}, "
            f"potential.r_max={potential.r_max:g}]"
        )
    if not 0 < float(disc["resolution"]) < 1:
        raise ConfigError("discretization.resolution must lie in (0, 1)")
    if not int(disc["point_cap"]) > 0:
        raise ConfigError("discretization.point_cap must be positive")
    thresholds = Thresholds(**{key: float(v) for key, v in raw["thresholds"].items()})
    fmts = raw["output"]["formats"]
    if isinstance(fmts, str):
        fmts = ["json", "csv"] if fmts == "both" else [fmts]
    if not fmts or any(f not in ("json", "csv") for f in fmts):
        raise ConfigError("output.formats must be a subset of ['json', 'csv']")
    raw["output"]["formats"] = sorted(set(fmts))
    if not isinstance(raw["sets"], list):
        raise ConfigError("sets must be a list")
    sets = tuple(build_set(d, domain.n, i) for i, d in enumerate(raw["sets"]))
    names = [s.name for s in sets]
    if len(set(names)) != len(names):
        raise ConfigError("set names must be unique")
    return RunConfig(raw, domain, potential, sets, thresholds, source)


def parse_config(path: str | Path) -> RunConfig:
    """Read and validate a JSON run configuration."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        user = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    return config_from_dict(user, str(path), path.parent)
