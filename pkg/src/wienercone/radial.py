"""Radial fundamental pair (V, W) of the stationary Schroedinger operator.

The radial equation

    -Q'' - (n-1)/r Q' + (lam/r**2 + a(r)) Q = 0,   a(r) = (kappa + p(r)) / r**2

becomes, in s = log r and for the logarithmic derivative u = d log Q / ds,
the Riccati equation

    u' = -u**2 - (n-2) u + lam + kappa + p(e**s).

Its fixed points for p = 0 are the exponents iota_plus / iota_minus.  The
iota_plus branch attracts forward in s and the iota_minus branch attracts
backward, so V is integrated forward from r_min and W backward from r_max.
Working with (u, log Q) keeps the solve free of overflow over many decades.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from .errors import ConvergenceError, DomainError, RejectedPotentialError

__all__ = [
    "PotentialSpec",
    "RadialBasis",
    "exponents",
    "solve_radial",
    "eval_basis",
    "wronskian_residual",
    "load_perturbation_csv",
]

DEFAULT_R_MIN = 1e-3
DEFAULT_R_MAX = 1e4
DEFAULT_GRID = 2048
DEFAULT_TOL = 1e-8


def exponents(n: int, kappa: float, lam: float) -> tuple[float, float, float]:
    """Return ``(iota_plus, iota_minus, chi)`` for dimension ``n``.

    ``iota_pm = (2 - n +- chi) / 2`` with ``chi = sqrt((n-2)**2 + 4(kappa+lam))``.
    """
    if not all(math.isfinite(float(v)) for v in (n, kappa, lam)):
        raise DomainError("exponents: non-finite input")
    if n < 2:
        raise DomainError(f"exponents: dimension must be >= 2, got {n}")
    disc = (n - 2) ** 2 + 4.0 * (kappa + lam)
    if disc <= 0.0:
        raise DomainError(f"exponents: (n-2)^2 + 4(kappa+lam) = {disc} is not positive")
    chi = math.sqrt(disc)
    return (2 - n + chi) / 2.0, (2 - n - chi) / 2.0, chi


@dataclass(frozen=True)
class PotentialSpec:
    """Radial potential a(r) = (kappa + p(r)) / r**2.

    ``perturbation`` is a vectorized callable ``p(r)``; ``None`` means the
    pure Euler case p = 0.  Sampled perturbations go through
    :meth:`from_samples`.
    """

    kappa: float = 0.0
    perturbation: Optional[Callable[[np.ndarray], np.ndarray]] = None
    r_min: float = DEFAULT_R_MIN
    r_max: float = DEFAULT_R_MAX
    label: str = "euler"

    @classmethod
    def from_samples(
        cls,
        kappa: float,
        r: Sequence[float],
        p: Sequence[float],
        r_min: float = DEFAULT_R_MIN,
        r_max: float = DEFAULT_R_MAX,
        label: str = "samples",
    ) -> "PotentialSpec":
        """Linear interpolation in log r, extended by 0 outside the samples."""
        r_arr = np.asarray(r, dtype=float)
        p_arr = np.asarray(p, dtype=float)
        if r_arr.ndim != 1 or r_arr.shape != p_arr.shape or r_arr.size < 2:
            raise RejectedPotentialError("perturbation samples must be two equal-length 1-D columns")
        if np.any(r_arr <= 0) or not np.all(np.isfinite(r_arr)) or not np.all(np.isfinite(p_arr)):
            raise RejectedPotentialError("perturbation samples need finite values and r > 0")
        order = np.argsort(r_arr)
        log_r = np.log(r_arr[order])
        p_sorted = p_arr[order]

        def perturbation(rr: np.ndarray) -> np.ndarray:
            return np.interp(np.log(np.asarray(rr, dtype=float)), log_r, p_sorted, left=0.0, right=0.0)

        return cls(kappa=kappa, perturbation=perturbation, r_min=r_min, r_max=r_max, label=label)

    @property
    def is_euler(self) -> bool:
        return self.perturbation is None

    def p(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.perturbation is None:
            return np.zeros_like(r)
        return np.broadcast_to(np.asarray(self.perturbation(r), dtype=float), r.shape).copy()

    def a(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return (self.kappa + self.p(r)) / r**2

    def validate(self, grid: Optional[np.ndarray] = None) -> None:
        """Check kappa >= 0, a >= 0 on the grid, and the integrability class."""
        if not math.isfinite(self.kappa) or self.kappa < 0:
            raise RejectedPotentialError(f"kappa must be finite and >= 0, got {self.kappa}")
        if not (0 < self.r_min < 1 < self.r_max) or not math.isfinite(self.r_max):
            raise RejectedPotentialError(
                f"need 0 < r_min < 1 < r_max, got r_min={self.r_min}, r_max={self.r_max}"
            )
        if grid is None:
            grid = np.geomspace(self.r_min, self.r_max, DEFAULT_GRID)
        total = self.kappa + self.p(grid)
        if not np.all(np.isfinite(total)):
            raise RejectedPotentialError("potential is not finite on the grid")
        if np.min(total) < -1e-14:
            raise RejectedPotentialError(
                f"a(r) < 0 on the grid (min r^2 a(r) = {np.min(total):.3e})"
            )
        increments = self.tail_increments()
        if not np.all(np.isfinite(increments)):
            raise RejectedPotentialError("r^-1 |p(r)| is not integrable on [1, r_max]")
        peak = float(np.max(increments)) if increments.size else 0.0
        if peak > 1e-14 and increments.size >= 4:
            q = max(1, increments.size // 4)
            if float(np.mean(increments[-q:])) > 0.5 * peak:
                raise RejectedPotentialError(
                    "dyadic increments of the integral of r^-1 |p(r)| do not decay; "
                    "r^2 a(r) does not settle to kappa"
                )

    def tail_increments(self) -> np.ndarray:
        """Integral of r^-1 |p(r)| over each dyadic interval [2^j, 2^(j+1)] inside [1, r_max]."""
        j_max = int(math.floor(math.log2(self.r_max)))
        out = []
        for j in range(j_max):
            s = np.linspace(j * math.log(2), (j + 1) * math.log(2), 65)
            out.append(np.trapezoid(np.abs(self.p(np.exp(s))), s))
        return np.asarray(out)


def load_perturbation_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read a two-column CSV of (r, p) samples; a non-numeric header row is skipped."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                rows.append((float(row[0]), float(row[1])))
            except ValueError:
                if rows:
                    raise
    if not rows:
        raise RejectedPotentialError(f"{path}: no numeric (r, p) rows")
    data = np.asarray(rows)
    return data[:, 0], data[:, 1]


@dataclass(frozen=True)
class RadialBasis:
    """Sampled fundamental pair normalized by V(1) = W(1) = 1."""

    n: int
    lam: float
    kappa: float
    iota_plus: float
    iota_minus: float
    chi: float
    chi_prime: float
    grid: np.ndarray
    V: np.ndarray
    W: np.ndarray
    dV: np.ndarray
    dW: np.ndarray
    # log-derivative data used for interpolation and the inner tails
    log_V: np.ndarray = field(repr=False)
    log_W: np.ndarray = field(repr=False)
    u_V: np.ndarray = field(repr=False)
    u_W: np.ndarray = field(repr=False)
    tail_mode: bool = True
    label: str = "euler"

    @property
    def r_min(self) -> float:
        return float(self.grid[0])

    @property
    def r_max(self) -> float:
        return float(self.grid[-1])

    @cached_property
    def _splines(self):
        s = np.log(self.grid)
        return (
            CubicSpline(s, self.log_V),
            CubicSpline(s, self.log_W),
            CubicSpline(s, self.u_V),
            CubicSpline(s, self.u_W),
        )

    def __call__(self, r):
        return eval_basis(self, r)

    def V_of(self, r):
        return eval_basis(self, r)[0]

    def W_of(self, r):
        return eval_basis(self, r)[1]

    def splice_radii(self) -> tuple[float, float]:
        return self.r_min, self.r_max


def _riccati_rhs(n: int, lam: float, kappa: float, spec: PotentialSpec):
    c0 = lam + kappa
    shift = n - 2

    def rhs(s, y):
        u = y[0]
        pr = 0.0 if spec.perturbation is None else float(spec.p(np.exp(s)))
        return [-u * u - shift * u + c0 + pr, u]

    return rhs


def solve_radial(
    spec: PotentialSpec,
    n: int,
    lam: float,
    tol: float = DEFAULT_TOL,
    n_grid: int = DEFAULT_GRID,
) -> RadialBasis:
    """Integrate the radial equation and return the normalized pair (V, W).

    Raises :class:`RejectedPotentialError` if ``spec`` fails validation and
    :class:`ConvergenceError` if the Wronskian residual exceeds ``tol``.
    """
    if n < 2:
        raise DomainError(f"dimension must be >= 2, got {n}")
    if not math.isfinite(lam) or lam <= 0:
        raise DomainError(f"eigenvalue must be positive and finite, got {lam}")
    grid = np.geomspace(spec.r_min, spec.r_max, n_grid)
    spec.validate(grid)
    iota_plus, iota_minus, chi = exponents(n, spec.kappa, lam)

    s_grid = np.log(grid)
    s0, s1 = float(s_grid[0]), float(s_grid[-1])
    rhs = _riccati_rhs(n, lam, spec.kappa, spec)
    # seeds use the local exponent so the unwanted mode starts near zero
    seed_plus = exponents(n, spec.kappa + float(spec.p(spec.r_min)), lam)[0]
    seed_minus = exponents(n, spec.kappa + float(spec.p(spec.r_max)), lam)[1]
    opts = dict(method="DOP853", rtol=1e-12, atol=1e-13, dense_output=True)
    fwd = solve_ivp(rhs, (s0, s1), [seed_plus, 0.0], t_eval=s_grid, **opts)
    bwd = solve_ivp(rhs, (s1, s0), [seed_minus, 0.0], t_eval=s_grid[::-1], **opts)
    if not (fwd.success and bwd.success):
        raise ConvergenceError(f"radial integration failed: {fwd.message} / {bwd.message}")

    u_V = fwd.y[0]
    log_V = fwd.y[1] - fwd.sol(0.0)[1]
    u_W = bwd.y[0][::-1]
    log_W = bwd.y[1][::-1] - bwd.sol(0.0)[1]
    V = np.exp(log_V)
    W = np.exp(log_W)
    dV = u_V * V / grid
    dW = u_W * W / grid
    chi_prime = float(fwd.sol(0.0)[0] - bwd.sol(0.0)[0])

    if np.any(u_V < -1e-12) or np.any(u_W >= 0):
        raise ConvergenceError("radial solutions lost monotonicity; potential too rough for the grid")

    arrays = [grid, V, W, dV, dW, log_V, log_W, u_V, u_W]
    for arr in arrays:
        arr.setflags(write=False)
    basis = RadialBasis(
        n=n,
        lam=float(lam),
        kappa=float(spec.kappa),
        iota_plus=iota_plus,
        iota_minus=iota_minus,
        chi=chi,
        chi_prime=chi_prime,
        grid=grid,
        V=V,
        W=W,
        dV=dV,
        dW=dW,
        log_V=log_V,
        log_W=log_W,
        u_V=u_V,
        u_W=u_W,
        label=spec.label,
    )
    residual = wronskian_residual(basis)
    if residual > tol:
        raise ConvergenceError(f"Wronskian residual {residual:.3e} exceeds tol {tol:.1e}")
    return basis


def eval_basis(basis: RadialBasis, r):
    """Return ``(V, W, dV, dW)`` at ``r`` (scalar or array).

    Inside the grid the log-profiles are spline-interpolated.  Beyond r_max
    the tails are r**iota_plus / r**iota_minus; below r_min the local
    exponents at the grid edge are used.
    """
    r_arr = np.asarray(r, dtype=float)
    if np.any(~np.isfinite(r_arr)) or np.any(r_arr <= 0):
        raise DomainError("eval_basis: r must be positive and finite")
    s = np.log(r_arr)
    sp_lV, sp_lW, sp_uV, sp_uW = basis._splines
    s_lo, s_hi = math.log(basis.r_min), math.log(basis.r_max)
    inside = (s >= s_lo) & (s <= s_hi)
    s_in = np.clip(s, s_lo, s_hi)
    log_V = sp_lV(s_in)
    log_W = sp_lW(s_in)
    u_V = sp_uV(s_in)
    u_W = sp_uW(s_in)
    if basis.tail_mode and not np.all(inside):
        hi = s > s_hi
        lo = s < s_lo
        u_V = np.where(hi, basis.iota_plus, np.where(lo, basis.u_V[0], u_V))
        u_W = np.where(hi, basis.iota_minus, np.where(lo, basis.u_W[0], u_W))
        ds = np.where(hi, s - s_hi, np.where(lo, s - s_lo, 0.0))
        log_V = log_V + u_V * ds
        log_W = log_W + u_W * ds
    elif not np.all(inside):
        raise DomainError("eval_basis: r outside the grid and tail extension disabled")
    V = np.exp(log_V)
    W = np.exp(log_W)
    dV = u_V * V / r_arr
    dW = u_W * W / r_arr
    if np.ndim(r) == 0:
        return float(V), float(W), float(dV), float(dW)
    return V, W, dV, dW


def wronskian_values(basis: RadialBasis) -> np.ndarray:
    r = basis.grid
    return r ** (basis.n - 1) * (basis.dV * basis.W - basis.V * basis.dW)


def wronskian_residual(basis: RadialBasis) -> float:
    """Max over the grid of |r^(n-1)(V'W - VW') / chi_prime - 1|."""
    return float(np.max(np.abs(wronskian_values(basis) / basis.chi_prime - 1.0)))
