"""Subsets of the cone and their dyadic point-cloud discretization."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import DomainError
from .spherical import DomainSpec, SphericalEigen

logger = logging.getLogger(__name__)

__all__ = [
    "Ball",
    "ShellSector",
    "AxisBeads",
    "ExplicitPoints",
    "BoundaryRegion",
    "SetSpec",
    "Block",
    "BlockDecomposition",
    "discretize",
    "block_index",
    "in_subcone",
    "boundary_distance",
    "contains",
    "decomposition_from_points",
]

DEFAULT_POINT_CAP = 4096


@dataclass(frozen=True)
class Ball:
    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainError(f"ball radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class ShellSector:
    """Union of dyadic shells I_k for k_lo <= k <= k_hi within angle ``alpha_sub`` of the axis.

    ``alpha_sub=None`` means the whole base domain.
    """

    k_lo: int
    k_hi: int
    alpha_sub: Optional[float] = None

    def __post_init__(self):
        if self.k_lo > self.k_hi:
            raise DomainError("shell_sector needs k_lo <= k_hi")
        if self.alpha_sub is not None and not self.alpha_sub > 0:
            raise DomainError("shell_sector angle must be positive")


@dataclass(frozen=True)
class AxisBeads:
    """Balls of fixed radius centred on the axis at r = 2^k, k_lo <= k <= k_hi."""

    radius: float
    k_lo: int
    k_hi: int

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainError("bead radius must be positive")
        if self.k_lo > self.k_hi:
            raise DomainError("axis_beads needs k_lo <= k_hi")

    def balls(self, n: int) -> list[Ball]:
        out = []
        for k in range(self.k_lo, self.k_hi + 1):
            c = [0.0] * n
            c[-1] = 2.0**k
            out.append(Ball(tuple(c), self.radius))
        return out


@dataclass(frozen=True)
class ExplicitPoints:
    points: tuple[tuple[float, ...], ...]
    h: tuple[float, ...]

    def __post_init__(self):
        if len(self.points) != len(self.h):
            raise DomainError("explicit_points needs one spacing per point")
        if any(not v > 0 for v in self.h):
            raise DomainError("explicit_points spacings must be positive")

    @classmethod
    def from_arrays(cls, X, h) -> "ExplicitPoints":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        h = np.broadcast_to(np.asarray(h, dtype=float), (X.shape[0],))
        return cls(tuple(map(tuple, X.tolist())), tuple(h.tolist()))


@dataclass(frozen=True)
class BoundaryRegion:
    """{P : dist(P, boundary) <= coeff |P - Q|^power} inside B(Q, extent), Q on the lateral boundary.

    power = 1 is a non-tangential wedge at Q, power = 2 a tangential cusp.
    """

    q: tuple[float, ...]
    power: float = 1.0
    coeff: float = 0.5
    extent: float = 1.0

    def __post_init__(self):
        if not (self.power > 0 and self.coeff > 0 and self.extent > 0):
            raise DomainError("boundary_region parameters must be positive")


Primitive = Union[Ball, ShellSector, AxisBeads, ExplicitPoints, BoundaryRegion]


@dataclass(frozen=True)
class SetSpec:
    shapes: tuple[Primitive, ...] = ()
    name: str = "set"

    def __post_init__(self):
        object.__setattr__(self, "shapes", tuple(self.shapes))


@dataclass(frozen=True)
class Block:
    """Point cloud of one dyadic block with per-point spacings h."""

    k: int
    points: np.ndarray
    h: np.ndarray

    @property
    def size(self) -> int:
        return int(self.points.shape[0])

    @property
    def r(self) -> np.ndarray:
        return np.linalg.norm(self.points, axis=1)


@dataclass(frozen=True)
class BlockDecomposition:
    blocks: dict[int, Block]
    k_min: int
    k_max: int
    resolution: float
    n: int
    name: str = "set"
    coarsened: dict[int, bool] = field(default_factory=dict)
    skipped: tuple[str, ...] = ()

    def __iter__(self):
        for k in range(self.k_min, self.k_max + 1):
            yield self.blocks[k]

    @property
    def total_points(self) -> int:
        return sum(b.size for b in self.blocks.values())

    def is_empty(self) -> bool:
        return self.total_points == 0

    def all_points(self) -> np.ndarray:
        pts = [b.points for b in self if b.size]
        return np.vstack(pts) if pts else np.zeros((0, self.n))

    def restrict(self, keep, name: str | None = None) -> "BlockDecomposition":
        """Sub-decomposition of the points where ``keep(points)`` is true, spacings unchanged.

        Restricting one discretization to a subset gives clouds nested point
        for point and weight for weight, which discretizing the subset on its
        own does not guarantee where primitives of different spacing overlap.
        """
        blocks = {}
        for k, b in self.blocks.items():
            mask = np.asarray(keep(b.points), dtype=bool) if b.size else np.zeros(0, dtype=bool)
            blocks[k] = Block(k, b.points[mask], b.h[mask])
        return replace(self, blocks=blocks, name=name or self.name)

    def csv_rows(self, domain: DomainSpec) -> list[list]:
        rows = []
        for b in self:
            for x, h in zip(b.points, b.h):
                p = domain.from_cartesian(x)
                rows.append([b.k, repr(float(p.r)), *[repr(float(a)) for a in p.theta], repr(float(h))])
        return rows

    def to_csv(self, path: str | Path, domain: DomainSpec) -> None:
        header = ["k", "r"] + [f"theta{i + 1}" for i in range(self.n - 1)] + ["h"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(self.csv_rows(domain))


def block_index(P) -> int:
    """floor(log2 r) computed exactly from the binary exponent."""
    r = P.r if hasattr(P, "r") else float(np.linalg.norm(np.asarray(P, dtype=float)))
    if not r > 0:
        raise DomainError("block_index needs r > 0")
    _, e = math.frexp(r)
    return e - 1


def block_indices(X: np.ndarray) -> np.ndarray:
    r = np.linalg.norm(X, axis=1)
    _, e = np.frexp(r)
    return e.astype(int) - 1


def boundary_distance(domain: DomainSpec, X) -> np.ndarray:
    """Euclidean distance from points of the cone to its lateral boundary."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    r = np.linalg.norm(X, axis=1)
    gap = domain.half_aperture - domain.psi_of(X)
    return np.where(gap >= math.pi / 2, r, r * np.sin(np.clip(gap, 0.0, None)))


def contains(spec: SetSpec, domain: DomainSpec, X) -> np.ndarray:
    """Membership mask of points in the solid primitives of ``spec`` (explicit points never match)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    hit = np.zeros(X.shape[0], dtype=bool)
    if X.shape[0] == 0:
        return hit
    r = np.linalg.norm(X, axis=1)
    for prim in spec.shapes:
        balls = [prim] if isinstance(prim, Ball) else prim.balls(domain.n) if isinstance(prim, AxisBeads) else []
        for b in balls:
            hit |= np.linalg.norm(X - np.asarray(b.center, dtype=float), axis=1) < b.radius
        if isinstance(prim, ShellSector):
            m = (r >= 2.0**prim.k_lo) & (r < 2.0 ** (prim.k_hi + 1))
            if prim.alpha_sub is not None:
                m &= domain.psi_of(X) < prim.alpha_sub
            hit |= m
        elif isinstance(prim, BoundaryRegion):
            d = np.linalg.norm(X - np.asarray(prim.q, dtype=float), axis=1)
            hit |= (d < prim.extent) & (boundary_distance(domain, X) <= prim.coeff * d**prim.power)
    return hit & (r > 0) & (domain.psi_of(X) < domain.half_aperture)


def _lattice_box(lo: np.ndarray, hi: np.ndarray, h: float) -> np.ndarray:
    axes = [h * np.arange(math.ceil(a / h), math.floor(b / h) + 1) for a, b in zip(lo, hi)]
    if any(ax.size == 0 for ax in axes):
        return np.zeros((0, len(lo)))
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def _dyadic_scale(size: float, k: int) -> float:
    """min(2^k, largest power of two not exceeding the primitive size).

    Power-of-two spacings on a common origin nest, so overlapping primitives
    and neighbouring blocks share lattice points exactly instead of nearly.
    """
    return min(2.0**k, 2.0 ** math.floor(math.log2(size)))


def _shell_filter(X: np.ndarray, k: int) -> np.ndarray:
    return block_indices(X) == k if X.shape[0] else np.zeros(0, dtype=bool)


class _Sampler:
    def __init__(self, domain: DomainSpec, eigen: Optional[SphericalEigen]):
        self.domain = domain
        self.eigen = eigen

    def in_cone(self, X: np.ndarray) -> np.ndarray:
        if X.shape[0] == 0:
            return np.zeros(0, dtype=bool)
        r = np.linalg.norm(X, axis=1)
        psi = self.domain.psi_of(X)
        ok = (r > 0) & (psi < self.domain.half_aperture)
        if self.eigen is not None:
            ok &= self.eigen.phi_cart(X) > 0
        return ok

    def ball(self, ball: Ball, k: int, res: float):
        c = np.asarray(ball.center, dtype=float)
        rad = ball.radius
        rc = float(np.linalg.norm(c))
        if rc + rad < 2.0**k or rc - rad >= 2.0 ** (k + 1):
            return None
        h = res * _dyadic_scale(2.0 * rad, k)
        X = _lattice_box(c - rad, c + rad, h)
        if X.shape[0]:
            X = X[np.linalg.norm(X - c, axis=1) < rad]
        return X, h

    def shell(self, sec: ShellSector, k: int, res: float):
        if not sec.k_lo <= k <= sec.k_hi:
            return None
        h = res * 2.0**k
        R = 2.0 ** (k + 1)
        lo = np.full(self.domain.n, -R)
        if self.domain.half_aperture <= math.pi / 2:
            lo[-1] = 0.0
        X = _lattice_box(lo, np.full(self.domain.n, R), h)
        if X.shape[0] and sec.alpha_sub is not None:
            X = X[self.domain.psi_of(X) < sec.alpha_sub]
        return X, h

    def boundary_region(self, reg: BoundaryRegion, k: int, res: float):
        q = np.asarray(reg.q, dtype=float)
        tq = float(np.linalg.norm(q))
        if tq + reg.extent < 2.0**k or tq - reg.extent >= 2.0 ** (k + 1):
            return None
        h = res * _dyadic_scale(reg.extent, k)
        X = _lattice_box(q - reg.extent, q + reg.extent, h)
        if X.shape[0]:
            d = np.linalg.norm(X - q, axis=1)
            X = X[(d < reg.extent) & (boundary_distance(self.domain, X) <= reg.coeff * d**reg.power)]
        return X, h


def _sample_block(spec: SetSpec, sampler: _Sampler, k: int, res: float, n: int):
    pts, hs = [], []
    for prim in spec.shapes:
        items = []
        if isinstance(prim, Ball):
            items.append(sampler.ball(prim, k, res))
        elif isinstance(prim, AxisBeads):
            items.extend(sampler.ball(b, k, res) for b in prim.balls(n))
        elif isinstance(prim, ShellSector):
            items.append(sampler.shell(prim, k, res))
        elif isinstance(prim, BoundaryRegion):
            items.append(sampler.boundary_region(prim, k, res))
        elif isinstance(prim, ExplicitPoints):
            if prim.points:
                X = np.asarray(prim.points, dtype=float)
                items.append((X, np.asarray(prim.h, dtype=float)))
        for item in items:
            if item is None:
                continue
            X, h = item
            if X.shape[0] == 0:
                continue
            keep = _shell_filter(X, k) & sampler.in_cone(X)
            h_arr = np.broadcast_to(np.asarray(h, dtype=float), (X.shape[0],))
            pts.append(X[keep])
            hs.append(h_arr[keep])
    if not pts:
        return np.zeros((0, n)), np.zeros(0)
    X = np.vstack(pts)
    h = np.concatenate(hs)
    return _dedupe(X, h)


def _dedupe(X: np.ndarray, h: np.ndarray):
    """Merge coincident points, keeping the finest spacing; output order is lexicographic."""
    if X.shape[0] < 2:
        return X, h
    order = np.lexsort((h, *(X[:, i] for i in reversed(range(X.shape[1])))))
    X, h = X[order], h[order]
    first = np.ones(X.shape[0], dtype=bool)
    first[1:] = np.any(X[1:] != X[:-1], axis=1)
    return X[first], h[first]


def _primitive_hits_cone(prim: Primitive, domain: DomainSpec) -> bool:
    beta = domain.half_aperture
    if isinstance(prim, Ball):
        c = np.asarray(prim.center, dtype=float)
        rc = float(np.linalg.norm(c))
        if rc == 0:
            return True
        gap = float(domain.psi_of(c[None, :])[0]) - beta
        return gap < 0 or rc * math.sin(min(gap, math.pi / 2)) < prim.radius
    if isinstance(prim, ExplicitPoints):
        if not prim.points:
            return False
        X = np.asarray(prim.points, dtype=float)
        return bool(np.any(domain.psi_of(X) < beta))
    return True


def discretize(
    spec: SetSpec,
    resolution: float,
    k_range: tuple[int, int],
    domain: DomainSpec,
    eigen: Optional[SphericalEigen] = None,
    point_cap: int = DEFAULT_POINT_CAP,
) -> BlockDecomposition:
    """Sample ``spec`` on per-block lattices of spacing ~ resolution * 2^k.

    Solid primitives smaller than the block use ``resolution`` times the
    largest power of two below their diameter instead.  Blocks over
    ``point_cap`` are re-sampled coarser and flagged in ``coarsened``.
    """
    if not 0 < resolution < 1:
        raise DomainError(f"resolution must lie in (0, 1), got {resolution}")
    k_min, k_max = k_range
    if k_min > k_max:
        raise DomainError("k_range must satisfy k_min <= k_max")
    kept, skipped = [], []
    for prim in spec.shapes:
        if _primitive_hits_cone(prim, domain):
            kept.append(prim)
        else:
            logger.warning("set %s: primitive %r lies outside the cone; skipped", spec.name, prim)
            skipped.append(type(prim).__name__)
    eff = SetSpec(tuple(kept), spec.name)
    sampler = _Sampler(domain, eigen)
    blocks, coarse = {}, {}
    for k in range(k_min, k_max + 1):
        res = resolution
        X, h = _sample_block(eff, sampler, k, res, domain.n)
        coarse[k] = False
        while X.shape[0] > point_cap:
            res *= 2.0 ** (1.0 / domain.n)
            X, h = _sample_block(eff, sampler, k, res, domain.n)
            coarse[k] = True
        if coarse[k]:
            logger.info("set %s block %d coarsened to resolution %.4g (%d points)", spec.name, k, res, X.shape[0])
        X.setflags(write=False)
        h.setflags(write=False)
        blocks[k] = Block(k, X, h)
    return BlockDecomposition(blocks, k_min, k_max, resolution, domain.n, spec.name, coarse, tuple(skipped))


def decomposition_from_points(
    X, h, k_range: tuple[int, int], n: int, name: str = "points", resolution: float = 0.5
) -> BlockDecomposition:
    """Bucket an explicit weighted cloud into dyadic blocks."""
    X = np.atleast_2d(np.asarray(X, dtype=float)).reshape(-1, n)
    h = np.broadcast_to(np.asarray(h, dtype=float), (X.shape[0],))
    ks = block_indices(X) if X.shape[0] else np.zeros(0, dtype=int)
    blocks = {}
    for k in range(k_range[0], k_range[1] + 1):
        m = ks == k
        blocks[k] = Block(k, X[m].copy(), h[m].copy())
    return BlockDecomposition(blocks, k_range[0], k_range[1], resolution, n, name, {k: False for k in blocks})


def in_subcone(decomp: BlockDecomposition, eigen: SphericalEigen, margin: float) -> bool:
    """True iff every point has phi >= margin * J_Omega."""
    if not 0 < margin < 1:
        raise DomainError("margin must lie in (0, 1)")
    X = decomp.all_points()
    if X.shape[0] == 0:
        return True
    return bool(np.all(eigen.phi_cart(X) >= margin * eigen.J_Omega))
