"""Least Dirichlet eigenpair of the Beltrami operator on supported spherical domains.

Every supported domain is rotationally symmetric about the x_n axis with
half-aperture ``beta``; the eigenfunction depends only on the angle ``psi``
from the axis.  Internally points are Cartesian arrays with the cone axis
along the last coordinate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, optimize, special

from .errors import ConvergenceError, DomainError

__all__ = [
    "DomainSpec",
    "Point",
    "SphericalEigen",
    "solve_eigen",
    "eval_phi",
    "boundary_normal_derivative",
    "sphere_area",
    "legendre_p",
]

ARC_EPS = 1e-6
SHAPES = ("arc", "cap", "half_sphere")


def sphere_area(n: int) -> float:
    """Surface area s_n of the unit sphere S^(n-1) in R^n."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def legendre_p(nu: float, x):
    """Legendre function P_nu(x) of real degree via 2F1(-nu, nu+1; 1; (1-x)/2)."""
    return special.hyp2f1(-nu, nu + 1.0, 1.0, (1.0 - np.asarray(x, dtype=float)) / 2.0)


def legendre_p_prime(nu: float, x):
    """d/dx P_nu(x)."""
    z = (1.0 - np.asarray(x, dtype=float)) / 2.0
    return 0.5 * nu * (nu + 1.0) * special.hyp2f1(1.0 - nu, nu + 2.0, 2.0, z)


@dataclass(frozen=True)
class Point:
    """Point of R^n in spherical coordinates.

    ``theta[0]`` is the angular coordinate attached to the domain: for caps
    and half-spheres (n >= 3) the colatitude from the cone axis; for n = 2
    the signed angle from the axis, except for arcs where it runs over
    [0, alpha] from one boundary ray.  ``theta[1:]`` are hyperspherical
    angles of the remaining directions.
    """

    r: float
    theta: tuple[float, ...]

    def __post_init__(self):
        if not (self.r >= 0 and math.isfinite(self.r)):
            raise DomainError(f"radius must be finite and >= 0, got {self.r}")


@dataclass(frozen=True)
class DomainSpec:
    """Spherical base domain Omega of the cone C_n(Omega)."""

    n: int
    shape: str
    alpha: Optional[float] = None

    def __post_init__(self):
        if self.n < 2:
            raise DomainError(f"dimension must be >= 2, got {self.n}")
        if self.shape not in SHAPES:
            raise DomainError(f"unknown shape {self.shape!r}; expected one of {SHAPES}")
        if self.shape == "arc":
            if self.n != 2:
                raise DomainError("arc domains exist only for n = 2")
            if self.alpha is None or not (0 < self.alpha <= 2 * math.pi - ARC_EPS):
                raise DomainError(f"arc angle must lie in (0, 2pi - eps], got {self.alpha}")
        elif self.shape == "cap":
            if self.n != 3:
                raise DomainError("cap domains are supported for n = 3 only")
            if self.alpha is None or not (0 < self.alpha < math.pi):
                raise DomainError(f"cap colatitude must lie in (0, pi), got {self.alpha}")
        elif self.alpha is not None:
            raise DomainError("half_sphere takes no angle parameter")

    @property
    def half_aperture(self) -> float:
        if self.shape == "arc":
            return self.alpha / 2.0
        if self.shape == "cap":
            return self.alpha
        return math.pi / 2.0

    # --- coordinates -------------------------------------------------
    def psi_from_theta(self, theta0: float) -> float:
        if self.shape == "arc":
            return theta0 - self.alpha / 2.0
        return theta0

    def theta_from_psi(self, psi: float) -> float:
        if self.shape == "arc":
            return psi + self.alpha / 2.0
        return psi

    def to_cartesian(self, p: Point) -> np.ndarray:
        n = self.n
        if len(p.theta) != n - 1:
            raise DomainError(f"expected {n - 1} angular coordinates, got {len(p.theta)}")
        psi = self.psi_from_theta(p.theta[0])
        if n == 2:
            return np.array([p.r * math.sin(psi), p.r * math.cos(psi)])
        x = np.empty(n)
        x[-1] = p.r * math.cos(psi)
        rho = p.r * math.sin(psi)
        angles = p.theta[1:]
        prod = 1.0
        for i, ang in enumerate(angles):
            x[i] = rho * prod * math.cos(ang)
            prod *= math.sin(ang)
        x[n - 2] = rho * prod
        return x

    def from_cartesian(self, x: Sequence[float]) -> Point:
        x = np.asarray(x, dtype=float)
        n = self.n
        if x.shape != (n,):
            raise DomainError(f"expected a point of R^{n}")
        r = float(np.linalg.norm(x))
        if r == 0.0:
            return Point(0.0, tuple([0.0] * (n - 1)))
        if n == 2:
            psi = math.atan2(x[0], x[1])
            return Point(r, (self.theta_from_psi(psi),))
        y = x[:-1]
        psi = math.atan2(float(np.linalg.norm(y)), x[-1])
        angles = []
        for i in range(n - 3):
            tail = float(np.linalg.norm(y[i:]))
            angles.append(math.acos(max(-1.0, min(1.0, y[i] / tail))) if tail > 0 else 0.0)
        angles.append(math.atan2(y[-1], y[-2]) % (2 * math.pi))
        return Point(r, (self.theta_from_psi(psi), *angles))

    def psi_of(self, X) -> np.ndarray:
        """Unsigned angle from the cone axis for Cartesian points (..., n)."""
        X = np.asarray(X, dtype=float)
        r = np.linalg.norm(X, axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            c = np.where(r > 0, X[..., -1] / np.where(r > 0, r, 1.0), 1.0)
        return np.arccos(np.clip(c, -1.0, 1.0))

    def axis_point(self, r: float = 1.0) -> np.ndarray:
        x = np.zeros(self.n)
        x[-1] = r
        return x

    def boundary_point(self, t: float = 1.0) -> np.ndarray:
        """A point of the lateral boundary S_n(Omega) at radius t (first-coordinate side)."""
        beta = self.half_aperture
        x = np.zeros(self.n)
        x[0] = t * math.sin(beta)
        x[-1] = t * math.cos(beta)
        return x

    def inward_normal(self, X) -> np.ndarray:
        """Unit inward normal of S_n(Omega) at boundary points X (..., n)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        beta = self.half_aperture
        rho = np.linalg.norm(X[:, :-1], axis=1)
        lateral = np.where(rho[:, None] > 0, X[:, :-1] / np.where(rho > 0, rho, 1.0)[:, None], 0.0)
        # d/dpsi direction points away from the axis; inward is its negative
        N = np.empty_like(X)
        N[:, :-1] = -math.cos(beta) * lateral
        N[:, -1] = math.sin(beta)
        return N

    def describe(self) -> dict:
        out = {"n": self.n, "shape": self.shape}
        if self.alpha is not None:
            out["alpha"] = self.alpha
        return out


@dataclass(frozen=True)
class SphericalEigen:
    """First Dirichlet eigenpair (lam, phi) with the profile phi(psi)."""

    domain: DomainSpec
    lam: float
    amplitude: float
    nu: Optional[float]
    J_Omega: float
    normalization_residual: float

    @property
    def beta(self) -> float:
        return self.domain.half_aperture

    def profile(self, psi) -> np.ndarray:
        """phi as a function of the unsigned axis angle; zero outside [0, beta]."""
        psi = np.abs(np.asarray(psi, dtype=float))
        d = self.domain
        beta = self.beta
        if d.shape == "arc":
            val = self.amplitude * np.cos(math.pi * psi / d.alpha)
        elif d.shape == "cap":
            val = self.amplitude * legendre_p(self.nu, np.cos(psi))
        else:
            val = self.amplitude * np.cos(psi)
        return np.where(psi < beta, np.maximum(val, 0.0), 0.0)

    def profile_derivative(self, psi) -> np.ndarray:
        """d phi / d psi (unsigned psi)."""
        psi = np.abs(np.asarray(psi, dtype=float))
        d = self.domain
        if d.shape == "arc":
            return -self.amplitude * (math.pi / d.alpha) * np.sin(math.pi * psi / d.alpha)
        if d.shape == "cap":
            return -self.amplitude * np.sin(psi) * legendre_p_prime(self.nu, np.cos(psi))
        return -self.amplitude * np.sin(psi)

    def phi(self, theta: Sequence[float]) -> float:
        return eval_phi(self, theta)

    def phi_cart(self, X) -> np.ndarray:
        """phi(Theta) for Cartesian points X of shape (..., n)."""
        return self.profile(self.domain.psi_of(X))

    def grad_phi(self, theta: Sequence[float]) -> float:
        """Tangential derivative of phi along the axis-angle direction."""
        psi = self.domain.psi_from_theta(theta[0])
        return float(np.sign(psi) * self.profile_derivative(psi)) if psi != 0 else 0.0

    @property
    def normal_derivative(self) -> float:
        """Inward normal derivative of phi on the boundary (constant by symmetry)."""
        return float(-self.profile_derivative(self.beta))


def _golden_max(f, a: float, b: float, tol: float = 1e-10) -> tuple[float, float]:
    g = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def _cap_degree(alpha: float, tol: float) -> float:
    x = math.cos(alpha)
    nus = np.linspace(1e-3, 30.0, 6000)
    vals = special.hyp2f1(-nus, nus + 1.0, 1.0, (1.0 - x) / 2.0)
    sign_change = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0)[0]
    if sign_change.size == 0:
        raise ConvergenceError(f"no Legendre degree root in (0, 30] for cap angle {alpha}")
    i = int(sign_change[0])
    return optimize.brentq(lambda v: float(legendre_p(v, x)), nus[i], nus[i + 1], xtol=tol, rtol=4 * np.finfo(float).eps)


def _sphere_weight(n: int):
    s_lower = sphere_area(n - 1)  # area of S^(n-2); equals 2 for n = 2
    return lambda psi: s_lower * np.sin(psi) ** (n - 2)


def solve_eigen(spec: DomainSpec, tol: float = 1e-12) -> SphericalEigen:
    """Least Dirichlet eigenvalue and L^2(S^(n-1))-normalized eigenfunction."""
    n = spec.n
    beta = spec.half_aperture
    nu = None
    weight = _sphere_weight(n)
    if spec.shape == "arc":
        lam = (math.pi / spec.alpha) ** 2
        amplitude = math.sqrt(2.0 / spec.alpha)
        raw = lambda psi: math.cos(math.pi * psi / spec.alpha)
    elif spec.shape == "half_sphere":
        lam = float(n - 1)
        amplitude = math.sqrt(2.0 * n / sphere_area(n))
        raw = math.cos
    else:
        nu = _cap_degree(spec.alpha, tol)
        lam = nu * (nu + 1.0)
        raw = lambda psi: float(legendre_p(nu, math.cos(psi)))
        norm2, _ = integrate.quad(lambda p: raw(p) ** 2 * weight(p), 0.0, beta, epsabs=1e-14, epsrel=1e-13, limit=200)
        amplitude = 1.0 / math.sqrt(norm2)

    eig = SphericalEigen(spec, lam, amplitude, nu, J_Omega=float("nan"), normalization_residual=float("nan"))
    # independent Gauss-Legendre check of the normalization
    nodes, wts = np.polynomial.legendre.leggauss(200)
    psi = 0.5 * beta * (nodes + 1.0)
    norm = 0.5 * beta * float(np.sum(wts * eig.profile(psi) ** 2 * weight(psi)))
    _, J = _golden_max(lambda p: float(eig.profile(p)), 0.0, beta)
    J = max(J, float(eig.profile(0.0)))
    return SphericalEigen(spec, lam, amplitude, nu, J_Omega=J, normalization_residual=abs(norm - 1.0))


def _check_closure(eig: SphericalEigen, theta: Sequence[float]) -> float:
    d = eig.domain
    if len(theta) != d.n - 1:
        raise DomainError(f"expected {d.n - 1} angular coordinates, got {len(theta)}")
    psi = abs(d.psi_from_theta(float(theta[0])))
    if psi > eig.beta + 1e-12:
        raise DomainError(f"angle {theta[0]} lies outside the closure of Omega")
    return psi


def eval_phi(eig: SphericalEigen, theta: Sequence[float]) -> float:
    """phi(Theta); exactly 0 on the boundary of Omega."""
    psi = _check_closure(eig, theta)
    if psi >= eig.beta - 1e-14:
        return 0.0
    return float(eig.profile(psi))


def boundary_normal_derivative(eig: SphericalEigen, theta: Sequence[float], atol: float = 1e-9) -> float:
    """Inward normal derivative of phi at a point of the boundary of Omega."""
    psi = _check_closure(eig, theta)
    if abs(psi - eig.beta) > atol:
        raise DomainError(f"angle {theta[0]} is not on the boundary of Omega")
    return eig.normal_derivative
