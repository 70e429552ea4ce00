"""Equilibrium measures, Green energies, capacitary masses and superfunctions.

The equilibrium measure of a point cloud E for the target u = M(., infinity)
is a nonnegative weight vector w with K w = u on its support, where K is
the kernel matrix with a regularized diagonal.  It is found by an
active-set iteration: solve unconstrained, clamp negative weights to zero,
re-solve on the survivors, repeat to a fixpoint.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional

import numpy as np
from scipy import linalg

from .errors import ConditioningError, DomainError
from .kernels import (
    ConeContext,
    KernelModel,
    green_matrix,
    martin_infinity_many,
    martin_origin_many,
    poisson_matrix,
)

logger = logging.getLogger(__name__)

__all__ = [
    "AtomicMeasure",
    "EquilibriumResult",
    "Superfunction",
    "solve_gauss_problem",
    "equilibrium_measure",
    "green_energy",
    "capacity_mass",
    "green_potential",
    "reduced_function",
    "superfunction_eval",
    "lemma7_bound",
    "dyadic_tail_profile",
    "write_equilibrium_csv",
]

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 50
COND_LIMIT = 1e13


@dataclass(frozen=True)
class AtomicMeasure:
    """Weighted atoms; ``h`` holds the spacing used to regularize self-interaction."""

    support: np.ndarray
    weights: np.ndarray
    h: Optional[np.ndarray] = None

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.support, dtype=float))
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if X.shape[0] != w.shape[0] and not (w.size == 0 and X.size == 0):
            raise DomainError("support and weights differ in length")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise DomainError("measure weights must be finite and nonnegative")
        object.__setattr__(self, "support", X)
        object.__setattr__(self, "weights", w)

    @classmethod
    def empty(cls, n: int) -> "AtomicMeasure":
        return cls(np.zeros((0, n)), np.zeros(0), np.zeros(0))

    @classmethod
    def atom(cls, x, w: float = 1.0) -> "AtomicMeasure":
        return cls(np.asarray(x, dtype=float)[None, :], np.array([float(w)]))

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    @property
    def size(self) -> int:
        return int(self.weights.size)

    def __add__(self, other: "AtomicMeasure") -> "AtomicMeasure":
        h = None
        if self.h is not None and other.h is not None:
            h = np.concatenate([self.h, other.h])
        return AtomicMeasure(np.vstack([self.support, other.support]), np.concatenate([self.weights, other.weights]), h)


@dataclass(frozen=True)
class EquilibriumResult:
    measure: AtomicMeasure
    energy: float
    mass: float
    residual: float
    active_fraction: float
    n_points: int
    kkt_violation: float = 0.0
    iterations: int = 0
    converged: bool = True
    block: Optional[int] = None
    error: Optional[str] = None

    CSV_FIELDS = ("k", "gamma", "lambda_mass", "residual", "active_fraction", "n_points")

    def as_row(self) -> dict:
        return {
            "k": self.block,
            "gamma": self.energy,
            "lambda_mass": self.mass,
            "residual": self.residual,
            "active_fraction": self.active_fraction,
            "n_points": self.n_points,
        }


def write_equilibrium_csv(results: Iterable[EquilibriumResult], path: str | Path) -> None:
    """One row per block result, in the given order."""
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=EquilibriumResult.CSV_FIELDS, lineterminator="\n")
        w.writeheader()
        for res in results:
            w.writerow({key: repr(v) if isinstance(v, float) else v for key, v in res.as_row().items()})


def _solve_active(K: np.ndarray, m: np.ndarray) -> np.ndarray:
    try:
        c, low = linalg.cho_factor(K, check_finite=False)
        return linalg.cho_solve((c, low), m, check_finite=False)
    except linalg.LinAlgError:
        pass
    # indefinite or rank deficient: minimum-norm least squares
    return linalg.lstsq(K, m, cond=1.0 / COND_LIMIT, check_finite=False)[0]


def solve_gauss_problem(
    K: np.ndarray,
    m: np.ndarray,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    block: Optional[int] = None,
) -> tuple[np.ndarray, dict]:
    """Nonnegative solve of K w = m by clamping to a fixpoint.

    Start from the unconstrained solve, drop every point with a negative
    weight, re-solve on the survivors and repeat.  Returns the weights and
    a diagnostics dict: the largest |K w - m| / m on the support, the
    largest shortfall of K w below m off the support (relative to max m)
    and the iteration count.
    """
    N = m.size
    w = np.zeros(N)
    if N == 0:
        return w, {"residual": 0.0, "kkt": 0.0, "iterations": 0, "converged": True}
    scale = float(np.max(np.abs(m))) or 1.0
    active = m > 0
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        idx = np.flatnonzero(active)
        if idx.size == 0:
            converged = True
            break
        sol = _solve_active(K[np.ix_(idx, idx)], m[idx])
        neg = sol < 0
        if not np.any(neg):
            w[idx] = sol
            converged = True
            break
        active[idx[neg]] = False
    if not converged:
        idx = np.flatnonzero(active)
        w[idx] = np.clip(_solve_active(K[np.ix_(idx, idx)], m[idx]), 0.0, None)
    pos = w > 0
    slack = K @ w - m
    residual = float(np.max(np.abs(slack[pos]) / m[pos])) if np.any(pos) else 0.0
    kkt = float(max(0.0, -slack[~pos].min() / scale)) if np.any(~pos) else 0.0
    if residual > tol:
        raise ConditioningError(
            f"active-set residual {residual:.3e} after {it} iterations; kernel matrix numerically singular",
            block,
        )
    return w, {"residual": residual, "kkt": kkt, "iterations": it, "converged": converged}


def equilibrium_measure(
    points,
    h,
    model: KernelModel,
    target: Optional[np.ndarray] = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    block: Optional[int] = None,
    diag: Optional[np.ndarray] = None,
) -> EquilibriumResult:
    """Equilibrium (capacitary) measure of a point cloud.

    ``target`` defaults to the Martin kernel at infinity on the points;
    ``diag`` replaces the regularized self-interaction G_h on the diagonal.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float)).reshape(-1, model.n)
    h = np.broadcast_to(np.asarray(h, dtype=float), (X.shape[0],))
    if X.shape[0] == 0:
        return EquilibriumResult(AtomicMeasure.empty(model.n), 0.0, 0.0, 0.0, 0.0, 0, block=block)
    m = martin_infinity_many(model.context, X) if target is None else np.asarray(target, dtype=float)
    if np.any(m < 0):
        raise DomainError("equilibrium target must be nonnegative")
    K = green_matrix(model, X, h_self=h)
    if diag is not None:
        np.fill_diagonal(K, diag)
    w, info = solve_gauss_problem(K, m, tol, max_iter, block)
    pos = w > 0
    measure = AtomicMeasure(X[pos], w[pos], np.asarray(h)[pos])
    energy = float(w @ K @ w)
    return EquilibriumResult(
        measure=measure,
        energy=energy,
        mass=float(w.sum()),
        residual=info["residual"],
        active_fraction=float(pos.mean()),
        n_points=int(X.shape[0]),
        kkt_violation=info["kkt"],
        iterations=info["iterations"],
        converged=info["converged"],
        block=block,
    )


def green_energy(result: EquilibriumResult, model: KernelModel) -> float:
    """Double sum of w_i G(P_i, P_j) w_j with the regularized diagonal."""
    mu = result.measure
    if mu.size == 0:
        return 0.0
    K = green_matrix(model, mu.support, h_self=mu.h)
    return float(mu.weights @ K @ mu.weights)


def capacity_mass(result: EquilibriumResult) -> float:
    """Total mass of the equilibrium measure."""
    return result.measure.total_mass


def green_potential(mu: AtomicMeasure, model: KernelModel, P) -> np.ndarray | float:
    """Sum_i w_i G(P, Q_i) for one point (float) or many points (array).

    When the measure carries cell sizes, evaluation at an atom uses the
    same regularized self-interaction as the equilibrium solve.
    """
    X = np.asarray(P.cartesian() if hasattr(P, "cartesian") else model.context.cart(P), dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if mu.size == 0:
        out = np.zeros(X.shape[0])
    else:
        G = green_matrix(model, X, mu.support)
        if mu.h is not None:
            # at an atom itself use the cell self-interaction of the solve
            i, j = np.nonzero(np.all(X[:, None, :] == mu.support[None, :, :], axis=-1))
            for a, b in zip(i, j):
                G[a, b] = green_matrix(model, mu.support[b][None], h_self=mu.h[b : b + 1])[0, 0]
        out = G @ mu.weights
    return float(out[0]) if single else out


def reduced_function(
    points,
    h,
    u_target: Callable[[np.ndarray], np.ndarray],
    model: KernelModel,
    P_eval,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    block: Optional[int] = None,
) -> tuple[float, EquilibriumResult]:
    """Value at ``P_eval`` of the reduced function of ``u_target`` on a point cloud.

    Returns ``(value, equilibrium result)``; an empty cloud reduces to 0.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float)).reshape(-1, model.n)
    if X.shape[0] == 0:
        return 0.0, EquilibriumResult(AtomicMeasure.empty(model.n), 0.0, 0.0, 0.0, 0.0, 0, block=block)
    target = np.asarray(u_target(X), dtype=float)
    res = equilibrium_measure(X, h, model, target=target, tol=tol, max_iter=max_iter, block=block)
    value = green_potential(res.measure, model, np.asarray(model.context.cart(P_eval), dtype=float))
    return float(value), res


@dataclass(frozen=True)
class Superfunction:
    """c_inf M(., inf) + c_origin M(., O) + G mu + (Poisson integral of nu)."""

    c_inf: float = 0.0
    c_origin: float = 0.0
    mu: Optional[AtomicMeasure] = None
    nu: Optional[AtomicMeasure] = None

    def __post_init__(self):
        if self.c_inf < 0 or self.c_origin < 0:
            raise DomainError("superfunction coefficients must be nonnegative")


def superfunction_eval(v: Superfunction, context: ConeContext, model: KernelModel, P) -> np.ndarray | float:
    """Evaluate a superfunction at one point or at an array of points."""
    X = np.asarray(context.cart(P), dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    total = np.zeros(X.shape[0])
    if v.c_inf:
        total += v.c_inf * martin_infinity_many(context, X)
    if v.c_origin:
        total += v.c_origin * martin_origin_many(context, X)
    if v.mu is not None and v.mu.size:
        total += green_matrix(model, X, v.mu.support) @ v.mu.weights
    if v.nu is not None and v.nu.size:
        total += poisson_matrix(model, X, v.nu.support) @ v.nu.weights
    return float(total[0]) if single else total


def lemma7_bound(v: Superfunction, context: ConeContext) -> float:
    """Integral of V phi against mu plus V t^-1 dphi/dn against nu."""
    out = 0.0
    if v.mu is not None and v.mu.size:
        t = np.linalg.norm(v.mu.support, axis=1)
        out += float(np.sum(v.mu.weights * context.radial(t)[0] * context.phi(v.mu.support)))
    if v.nu is not None and v.nu.size:
        t = np.linalg.norm(v.nu.support, axis=1)
        out += float(np.sum(v.nu.weights * context.radial(t)[0] / t * context.eigen.normal_derivative))
    return out


def dyadic_tail_profile(mu: AtomicMeasure, context: ConeContext, k_range: tuple[int, int], boundary: bool = False):
    """Per-block integrals used by the integrability checks on a measure.

    Returns ``(k, tail_W, head_ratio)`` rows where ``tail_W`` integrates
    W(t) phi over t >= 2^k and ``head_ratio`` is W(2^k)/V(2^k) times the
    integral of V(t) phi over t < 2^k.  With ``boundary=True`` the angular
    weight is t^-1 dphi/dn instead of phi.
    """
    rows = []
    if mu.size == 0:
        return [(k, 0.0, 0.0) for k in range(k_range[0], k_range[1] + 1)]
    t = np.linalg.norm(mu.support, axis=1)
    V, W, _, _ = context.radial(t)
    ang = context.eigen.normal_derivative / t if boundary else context.phi(mu.support)
    for k in range(k_range[0], k_range[1] + 1):
        R = 2.0**k
        VR, WR, _, _ = context.radial(R)
        tail = float(np.sum((mu.weights * W * ang)[t >= R]))
        head = float(WR / VR * np.sum((mu.weights * V * ang)[t < R]))
        rows.append((k, tail, head))
    return rows
