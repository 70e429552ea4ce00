"""Wiener-type series at infinity, the boundary-point test and the profile of superfunctions.

Every verdict is three-valued.  A truncated series cannot prove
convergence, so the decision rules look at the shape of the computed
terms and answer ``inconclusive`` when the shape is ambiguous.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .capacity import (
    EquilibriumResult,
    Superfunction,
    equilibrium_measure,
    green_potential,
    superfunction_eval,
)
from .errors import ConditioningError, DomainError
from .kernels import (
    ConeContext,
    KernelModel,
    green_matrix,
    martin_infinity_many,
    patch_self_interaction,
    poisson_matrix,
)
from .sets import (
    BlockDecomposition,
    BoundaryRegion,
    ExplicitPoints,
    SetSpec,
    ShellSector,
    boundary_distance,
    contains,
    decomposition_from_points,
    discretize,
    in_subcone,
)

logger = logging.getLogger(__name__)

__all__ = [
    "THIN",
    "RAREFIED",
    "NOT",
    "INCONCLUSIVE",
    "Thresholds",
    "BlockRow",
    "WienerReport",
    "BoundaryReport",
    "decide",
    "wiener_report",
    "classify_minimally_thin_infinity",
    "classify_rarefied_infinity",
    "thinness_at_boundary_point",
    "lattice_scan",
    "exceptional_set",
    "level_set",
    "asymptotic_profile",
    "profile_decreasing",
    "theorem8_crosscheck",
]

THIN = "thin"
RAREFIED = "rarefied"
NOT = "not"
INCONCLUSIVE = "inconclusive"

MODEL_NOTES = (
    "lambda_k is read as the total mass of the equilibrium measure of E_k",
    "on a finite cloud the reduced function and its regularization coincide",
    "the whole discretized support stands in for the fine-topology base B_E",
)


@dataclass(frozen=True)
class Thresholds:
    rho_thin: float = 0.9
    eps_tail: float = 1e-3
    delta_floor: float = 0.1

    def __post_init__(self):
        if not (0 < self.rho_thin < 1 and 0 < self.eps_tail < 1 and 0 < self.delta_floor < 1):
            raise DomainError("thresholds must lie in (0, 1)")


def _tail_window(idx: np.ndarray) -> np.ndarray:
    """Upper half of the given row indices, at least two rows."""
    take = max(2, math.ceil(idx.size / 2))
    return idx[-take:]


def _fit_ratio(ks: np.ndarray, vals: np.ndarray) -> float:
    slope = np.polyfit(ks.astype(float), np.log(vals), 1)[0]
    return float(math.exp(slope))


def decide(terms: Sequence[float], thresholds: Thresholds = Thresholds()) -> tuple[str, float]:
    """Verdict for a truncated series of nonnegative terms; returns ``(verdict, tail_ratio)``.

    NaN terms (failed blocks) are ignored.  A table is a finite sum when
    it has fewer than two nonzero rows, when its upper half is identically
    zero, or when the run of zero rows after the last nonzero one is longer
    than every gap between nonzero rows (the set ends inside the window).
    """
    t = np.asarray(terms, dtype=float)
    ok = np.isfinite(t)
    if not np.any(ok):
        return INCONCLUSIVE, float("nan")
    rows = np.flatnonzero(ok)
    nz = rows[t[rows] > 0]
    upper = rows[rows >= rows[0] + rows.size // 2]
    if nz.size < 2 or not np.any(t[upper] > 0):
        return THIN, 0.0
    pos = np.searchsorted(rows, nz)
    trailing = rows.size - 1 - pos[-1]
    if trailing > 0 and trailing > np.max(np.diff(pos) - 1):
        return THIN, 0.0
    win = _tail_window(nz)
    ratio = _fit_ratio(win, t[win])
    total = float(t[ok].sum())
    last = float(t[rows[-1]])
    if ratio <= thresholds.rho_thin and last < thresholds.eps_tail * total:
        return THIN, ratio
    head = float(np.median(t[nz[:3]]))
    if np.all(t[win] >= thresholds.delta_floor * head):
        return NOT, ratio
    return INCONCLUSIVE, ratio


@dataclass(frozen=True)
class BlockRow:
    k: int
    r_lo: float
    r_hi: float
    n_points: int
    gamma_k: float
    lambda_k: float
    term_minthin: float
    term_rarefied: float
    partial_minthin: float
    partial_rarefied: float
    residual: float = 0.0
    active_fraction: float = 0.0
    error: Optional[str] = None

    CSV_FIELDS = (
        "k",
        "r_lo",
        "r_hi",
        "n_points",
        "gamma_k",
        "lambda_k",
        "term_minthin",
        "term_rarefied",
        "partial_minthin",
        "partial_rarefied",
    )

    def csv_row(self) -> list:
        return [getattr(self, f) for f in self.CSV_FIELDS]


@dataclass(frozen=True)
class WienerReport:
    """Per-block table with both series and both verdicts.

    ``criterion`` names the series the report was requested for and
    selects :attr:`verdict` and :attr:`tail_ratio`.
    """

    name: str
    rows: tuple[BlockRow, ...]
    verdict_minthin: str
    verdict_rarefied: str
    tail_ratio_minthin: float
    tail_ratio_rarefied: float
    thresholds: Thresholds
    criterion: str = "minthin"
    mode: str = ""
    errors: tuple[str, ...] = ()
    notes: tuple[str, ...] = MODEL_NOTES

    @property
    def verdict(self) -> str:
        return self.verdict_minthin if self.criterion == "minthin" else self.verdict_rarefied

    @property
    def tail_ratio(self) -> float:
        return self.tail_ratio_minthin if self.criterion == "minthin" else self.tail_ratio_rarefied

    @property
    def truncation(self) -> int:
        return self.rows[-1].k if self.rows else 0

    def terms(self, which: str = "minthin") -> np.ndarray:
        key = "term_minthin" if which == "minthin" else "term_rarefied"
        return np.array([getattr(r, key) for r in self.rows])

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "mode": self.mode,
            "verdict_minthin": self.verdict_minthin,
            "verdict_rarefied": self.verdict_rarefied,
            "tail_ratio_minthin": _finite(self.tail_ratio_minthin),
            "tail_ratio_rarefied": _finite(self.tail_ratio_rarefied),
            "diagnostics": {"thresholds": asdict(self.thresholds), "truncation_k": self.truncation},
            "errors": list(self.errors),
            "notes": list(self.notes),
            "rows": [{k: _finite(v) for k, v in asdict(r).items()} for r in self.rows],
        }


def _finite(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def _solve_block(model: KernelModel, block, tol: float) -> EquilibriumResult:
    try:
        return equilibrium_measure(block.points, block.h, model, tol=tol, block=block.k)
    except ConditioningError as exc:
        msg = exc.args[0] if exc.block is None else str(exc).removeprefix(f"block {exc.block}: ")
        logger.warning("block %d: %s", block.k, msg)
        return EquilibriumResult(None, math.nan, math.nan, math.nan, 0.0, block.size, block=block.k, error=msg)


def wiener_report(
    decomp: BlockDecomposition,
    model: KernelModel,
    thresholds: Thresholds = Thresholds(),
    tol: float = 1e-8,
    threads: int = 1,
    criterion: str = "minthin",
) -> WienerReport:
    """Per-block equilibrium solves and both Wiener-type series."""
    if decomp.k_max - decomp.k_min + 1 < 8:
        raise DomainError("k_range must cover at least 8 blocks")
    blocks = list(decomp)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda b: _solve_block(model, b, tol), blocks))
    else:
        results = [_solve_block(model, b, tol) for b in blocks]
    ks = np.array([b.k for b in blocks])
    V, W, _, _ = model.context.radial(2.0 ** ks.astype(float))
    rows, errors = [], []
    pm = pr = 0.0
    for b, res, v, w in zip(blocks, results, V, W):
        tm = res.energy * w / v
        tr = w * res.mass
        if res.error is None:
            pm += tm
            pr += tr
        else:
            errors.append(f"block {b.k}: {res.error}")
        rows.append(
            BlockRow(
                k=b.k,
                r_lo=2.0**b.k,
                r_hi=2.0 ** (b.k + 1),
                n_points=b.size,
                gamma_k=res.energy,
                lambda_k=res.mass,
                term_minthin=tm,
                term_rarefied=tr,
                partial_minthin=pm,
                partial_rarefied=pr,
                residual=res.residual,
                active_fraction=res.active_fraction,
                error=res.error,
            )
        )
    vm, qm = decide([r.term_minthin for r in rows], thresholds)
    vr, qr = decide([r.term_rarefied for r in rows], thresholds)
    vr = RAREFIED if vr == THIN else vr
    return WienerReport(decomp.name, tuple(rows), vm, vr, qm, qr, thresholds, criterion, model.mode, tuple(errors))


def classify_minimally_thin_infinity(
    decomp: BlockDecomposition, model: KernelModel, thresholds: Thresholds = Thresholds(), **kw
) -> WienerReport:
    """Series of gamma_k W(2^k) / V(2^k)."""
    return wiener_report(decomp, model, thresholds, criterion="minthin", **kw)


def classify_rarefied_infinity(
    decomp: BlockDecomposition, model: KernelModel, thresholds: Thresholds = Thresholds(), **kw
) -> WienerReport:
    """Series of W(2^k) lambda_k."""
    return wiener_report(decomp, model, thresholds, criterion="rarefied", **kw)


# ---------------------------------------------------------------- boundary points


@dataclass(frozen=True)
class BoundaryReport:
    q: tuple[float, ...]
    r: tuple[float, ...]
    n_points: tuple[int, ...]
    verdict: str
    ratio: float
    thresholds: Thresholds

    def as_dict(self) -> dict:
        return {
            "q": list(self.q),
            "verdict": self.verdict,
            "ratio": _finite(self.ratio),
            "rows": [{"m": m, "radius": 2.0**-m, "r_m": v, "n_points": c} for m, (v, c) in enumerate(zip(self.r, self.n_points))],
        }


def decide_decay(values: Sequence[float], thresholds: Thresholds = Thresholds()) -> tuple[str, float]:
    """Verdict for a sequence that should tend to 0 (thin) or stay above a floor (not)."""
    v = np.asarray(values, dtype=float)
    nz = np.flatnonzero(v > 0)
    if nz.size == 0 or v[-1] == 0:
        return THIN, 0.0
    head = float(np.median(v[nz[:3]]))
    win = _tail_window(np.arange(v.size))
    ratio = _fit_ratio(win, np.maximum(v[win], 1e-300))
    if ratio <= thresholds.rho_thin and v[-1] < thresholds.delta_floor * head:
        return THIN, ratio
    if np.all(v[win] >= thresholds.delta_floor * head):
        return NOT, ratio
    return INCONCLUSIVE, ratio


def _tangent_frame(normal: np.ndarray) -> np.ndarray:
    """Orthonormal basis (rows) of the hyperplane orthogonal to ``normal``."""
    _, _, vt = np.linalg.svd(normal[None, :])
    return vt[1:]


def _annulus_lattice(dim: int, rho: float, s: float) -> np.ndarray:
    """Lattice of spacing s*rho in the dim-dimensional annulus rho/2 <= |x| < rho."""
    h = s * rho
    m = math.floor(rho / h)
    ax = h * np.arange(-m, m + 1)
    G = np.stack([g.ravel() for g in np.meshgrid(*([ax] * dim), indexing="ij")], axis=1)
    d = np.linalg.norm(G, axis=1)
    return G[(d >= rho / 2) & (d < rho)]


def _region_surface(reg: BoundaryRegion, ctx: ConeContext, q, normal, frame, rho: float, s: float):
    """Points of the outer surface {dist = coeff |P-Q|^power} of a boundary region over one annulus.

    Points below that surface never carry capacity seen from outside the
    region, so the surface is all that must be sampled.  Each point is
    found by bisection along the normal above a tangential offset.
    """
    dom = ctx.domain
    L = _annulus_lattice(dom.n - 1, rho, s)
    if L.shape[0] == 0:
        return np.zeros((0, dom.n))
    base = q + L @ frame
    lo = np.zeros(L.shape[0])
    hi = np.full(L.shape[0], rho)

    def gap(d):
        P = base + d[:, None] * normal
        return boundary_distance(dom, P) - reg.coeff * np.linalg.norm(P - q, axis=1) ** reg.power

    ok = gap(hi) > 0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        below = gap(mid) <= 0
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    P = base[ok] + lo[ok, None] * normal
    d = np.linalg.norm(P - q, axis=1)
    keep = (d >= rho / 2) & (d < min(rho, reg.extent)) & (boundary_distance(dom, P) > 0)
    return P[keep]


def _sample_near(spec: SetSpec, ctx: ConeContext, q: np.ndarray, rho: float, s: float):
    """Points of E in the annulus rho/2 <= |P - Q| < rho with spacing ~ s*rho."""
    dom = ctx.domain
    normal = dom.inward_normal(q)[0]
    frame = _tangent_frame(normal)
    parts = []
    solid = SetSpec(tuple(p for p in spec.shapes if not isinstance(p, (BoundaryRegion, ExplicitPoints))))
    if solid.shapes:
        G = q + _annulus_lattice(dom.n, rho, s)
        parts.append(G[contains(solid, dom, G) & (ctx.phi(G) > 0)])
    for prim in spec.shapes:
        if isinstance(prim, BoundaryRegion):
            parts.append(_region_surface(prim, ctx, np.asarray(prim.q, dtype=float), normal, frame, rho, s))
        elif isinstance(prim, ExplicitPoints) and prim.points:
            X = np.asarray(prim.points, dtype=float)
            d = np.linalg.norm(X - q, axis=1)
            parts.append(X[(d >= rho / 2) & (d < rho) & (ctx.phi(X) > 0)])
    X = np.vstack(parts) if parts else np.zeros((0, dom.n))
    return X, np.full(X.shape[0], s * rho)


def thinness_at_boundary_point(
    spec: SetSpec,
    q,
    model: KernelModel,
    depth: int = 8,
    spacing: float = 0.25,
    inner_levels: int = 4,
    thresholds: Thresholds = Thresholds(),
    tol: float = 1e-8,
) -> BoundaryReport:
    """Shrinking-neighbourhood test of minimal thinness at a lateral boundary point Q.

    For m = 0..depth, ``r_m`` is the reduced function at the reference point
    of the boundary Martin kernel M(., Q) on E within B(Q, 2^-m).  The set
    is cut below radius 2^-(depth + inner_levels) and sampled annulus by
    annulus with spacing ``spacing`` times the annulus radius.  Samples
    stand for patches parallel to the boundary at Q, which fixes their
    self-interaction.
    """
    ctx = model.context
    # the distance floor must sit below the finest sample spacing
    model = replace(model, h_reg=min(model.h_reg, 0.01 * spacing * 2.0 ** -(depth + inner_levels)))
    q = np.asarray(ctx.cart(q), dtype=float)
    if not (np.linalg.norm(q) > 0 and boundary_distance(ctx.domain, q)[0] < 1e-9 * max(1.0, np.linalg.norm(q))):
        raise DomainError("Q must lie on the lateral boundary S_n(Omega)")
    if depth < 1:
        raise DomainError("depth must be at least 1")
    p0 = ctx.reference_point
    norm0 = float(poisson_matrix(model, p0[None, :], q[None, :])[0, 0])

    def target(X):
        return poisson_matrix(model, X, q[None, :])[:, 0] / norm0

    normal = ctx.domain.inward_normal(q)[0]
    shells = []
    for j in range(depth + inner_levels):
        X, h = _sample_near(spec, ctx, q, 2.0**-j, spacing)
        shells.append((X, h, patch_self_interaction(model, X, h, normal)))
    values, counts = [], []
    for m in range(depth + 1):
        X = np.vstack([S[0] for S in shells[m:]])
        h = np.concatenate([S[1] for S in shells[m:]])
        diag = np.concatenate([S[2] for S in shells[m:]])
        counts.append(int(X.shape[0]))
        if X.shape[0] == 0:
            values.append(0.0)
            continue
        res = equilibrium_measure(X, h, model, target=target(X), tol=tol, block=m, diag=diag)
        values.append(float(green_potential(res.measure, model, p0)))
    verdict, ratio = decide_decay(values, thresholds)
    return BoundaryReport(tuple(q.tolist()), tuple(values), tuple(counts), verdict, ratio, thresholds)


# ---------------------------------------------------------------- superfunction profile


def lattice_scan(
    context: ConeContext,
    k_range: tuple[int, int],
    resolution: float,
    keep: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    name: str = "scan",
) -> BlockDecomposition:
    """Cone lattice of spacing resolution * 2^k on each block, optionally filtered by ``keep``."""
    full = discretize(
        SetSpec((ShellSector(k_range[0], k_range[1]),), name),
        resolution,
        k_range,
        context.domain,
        context.eigen,
    )
    if keep is None:
        return full
    X, h = full.all_points(), np.concatenate([b.h for b in full]) if full.total_points else np.zeros(0)
    mask = keep(X) if X.shape[0] else np.zeros(0, dtype=bool)
    return decomposition_from_points(X[mask], h[mask], k_range, context.n, name, resolution)


def exceptional_set(
    v: Superfunction, context: ConeContext, model: KernelModel, k_range: tuple[int, int], resolution: float = 0.25
) -> BlockDecomposition:
    """Lattice points where v(P) >= V(r)."""

    def keep(X):
        return superfunction_eval(v, context, model, X) >= context.radial(np.linalg.norm(X, axis=1))[0]

    return lattice_scan(context, k_range, resolution, keep, "exceptional")


def level_set(
    mu, A: float, context: ConeContext, model: KernelModel, k_range: tuple[int, int], resolution: float = 0.25
) -> BlockDecomposition:
    """Lattice points where the Green potential of ``mu`` is at least A V(r) phi."""
    if not A > 0:
        raise DomainError("level A must be positive")

    def keep(X):
        G = green_matrix(model, X, mu.support) @ mu.weights
        return G >= A * martin_infinity_many(context, X)

    return lattice_scan(context, k_range, resolution, keep, f"level_{A:g}")


def asymptotic_profile(
    v: Superfunction,
    context: ConeContext,
    model: KernelModel,
    k_range: tuple[int, int],
    exceptional: Optional[BlockDecomposition] = None,
    resolution: float = 0.25,
) -> list[dict]:
    """Per block, sup over lattice points outside the exceptional set of |v/V - c_inf phi|."""
    scan = lattice_scan(context, k_range, resolution)
    excl = exceptional.all_points() if exceptional is not None else np.zeros((0, context.n))
    tree = cKDTree(excl) if excl.shape[0] else None
    rows = []
    for b in scan:
        X = b.points
        if tree is not None and X.shape[0]:
            d, _ = tree.query(X)
            X = X[d > 1e-9 * 2.0**b.k]
        if X.shape[0] == 0:
            rows.append({"k": b.k, "n_points": 0, "deviation": 0.0})
            continue
        V = context.radial(np.linalg.norm(X, axis=1))[0]
        dev = np.abs(superfunction_eval(v, context, model, X) / V - v.c_inf * context.phi(X))
        rows.append({"k": b.k, "n_points": int(X.shape[0]), "deviation": float(dev.max())})
    return rows


def profile_decreasing(rows: list[dict], factor: float = 0.1) -> bool:
    """Rows decrease from the first nonzero one and the last is at most ``factor`` times it."""
    vals = np.array([r["deviation"] for r in rows])
    nz = np.flatnonzero(vals > 0)
    if nz.size == 0:
        return True
    tail = vals[nz[0]:]
    return bool(np.all(np.diff(tail) <= 0) and tail[-1] <= factor * tail[0])


# ---------------------------------------------------------------- consistency


def theorem8_crosscheck(
    decomp: BlockDecomposition,
    model: KernelModel,
    thresholds: Thresholds = Thresholds(),
    margin: float = 0.5,
    report: Optional[WienerReport] = None,
    **kw,
) -> dict:
    """Rarefied must imply minimally thin; inside a subcone definite verdicts must agree."""
    rep = report if report is not None else wiener_report(decomp, model, thresholds, **kw)
    sub = in_subcone(decomp, model.context.eigen, margin)
    vm, vr = rep.verdict_minthin, rep.verdict_rarefied
    flags = []
    if vr == RAREFIED and vm == NOT:
        flags.append("rarefied but not minimally thin")
    if sub and INCONCLUSIVE not in (vm, vr) and (vm == THIN) != (vr == RAREFIED):
        flags.append("definite verdicts disagree inside a subcone")
    return {
        "name": decomp.name,
        "verdict_minthin": vm,
        "verdict_rarefied": vr,
        "in_subcone": sub,
        "margin": margin,
        "consistent": not flags,
        "flags": flags,
    }
