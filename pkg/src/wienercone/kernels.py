"""Green-function surrogates, Martin kernels and the half-space Laplace oracle.

For radially separated arguments (r/t or t/r at most 4/5) the surrogate
Green a-function is the product form

    c_mid V(r ^ t) W(r v t) phi(Theta) phi(Phi),

which has exactly the order of the true Green function there.  For
comparable radii it is

    min( F_n(D),  max(product, 2 r t phi(Theta) phi(Phi) / (J^2 s_n D^n)) ),

with F_n the free-space kernel, D = max(|P-Q|, h) and J the normal
derivative of phi on the boundary.  The second term is the boundary-layer
decay of a Dirichlet Green function between nearby points; without it the
product form would dominate near the diagonal and erase local geometry.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional, Union

import numpy as np

from .errors import DomainError, NotApplicableError, UnsupportedConfigurationError
from .radial import PotentialSpec, RadialBasis, eval_basis, solve_radial
from .spherical import DomainSpec, Point, SphericalEigen, solve_eigen, sphere_area

__all__ = [
    "ConeContext",
    "KernelModel",
    "EnvelopeFit",
    "SingularDiagonalWarning",
    "build_context",
    "green",
    "green_matrix",
    "green_bounds",
    "martin_infinity",
    "martin_origin",
    "poisson_surrogate",
    "poisson_matrix",
    "green_pairs",
    "patch_self_interaction",
    "cell_self_distance",
    "halfspace_green_oracle",
    "sample_separated_pairs",
    "order_agreement",
    "fit_envelope",
]

SURROGATE = "surrogate"
ORACLE = "halfspace_oracle"
SEPARATION = 0.8

PointLike = Union[Point, np.ndarray, tuple, list]


class SingularDiagonalWarning(RuntimeWarning):
    """Green function evaluated on its diagonal."""


@dataclass(frozen=True)
class ConeContext:
    """Everything needed to evaluate kernels on one cone C_n(Omega)."""

    domain: DomainSpec
    eigen: SphericalEigen
    basis: RadialBasis
    potential: PotentialSpec
    kappa_martin: float = 1.0

    @property
    def n(self) -> int:
        return self.domain.n

    @property
    def reference_point(self) -> np.ndarray:
        return self.domain.axis_point(1.0)

    @property
    def is_laplace(self) -> bool:
        return self.potential.is_euler and self.potential.kappa == 0.0

    def cart(self, P: PointLike) -> np.ndarray:
        if isinstance(P, Point):
            return self.domain.to_cartesian(P)
        return np.asarray(P, dtype=float)

    def radial(self, r):
        return eval_basis(self.basis, r)

    def phi(self, X) -> np.ndarray:
        return self.eigen.phi_cart(X)


def build_context(
    domain: DomainSpec,
    potential: Optional[PotentialSpec] = None,
    kappa_martin: float = 1.0,
    radial_tol: float = 1e-8,
) -> ConeContext:
    """Solve the spherical eigenproblem, then the radial equation with that eigenvalue."""
    potential = potential or PotentialSpec()
    eigen = solve_eigen(domain)
    basis = solve_radial(potential, domain.n, eigen.lam, tol=radial_tol)
    if kappa_martin <= 0:
        raise DomainError("kappa_martin must be positive")
    return ConeContext(domain, eigen, basis, potential, kappa_martin)


@dataclass(frozen=True)
class KernelModel:
    """Kernel configuration; ``scale`` multiplies every kernel value."""

    context: ConeContext
    c_mid: float = 1.0
    h_reg: float = 1e-3
    mode: str = SURROGATE
    scale: float = 1.0
    c_lower: float = 0.01
    c_upper: Optional[float] = None
    envelope: Optional["EnvelopeFit"] = field(default=None, compare=False)

    def __post_init__(self):
        if self.mode not in (SURROGATE, ORACLE):
            raise UnsupportedConfigurationError(f"unknown kernel mode {self.mode!r}")
        if self.mode == ORACLE:
            _require_oracle(self.context)
        if self.c_mid <= 0 or self.h_reg <= 0 or self.scale <= 0:
            raise DomainError("c_mid, h_reg and scale must be positive")

    def scaled(self, c: float) -> "KernelModel":
        return replace(self, scale=self.scale * c)

    @property
    def n(self) -> int:
        return self.context.n


def _require_oracle(context: ConeContext) -> None:
    d = context.domain
    if not (d.n == 3 and d.shape == "half_sphere" and context.is_laplace):
        raise UnsupportedConfigurationError(
            "halfspace_oracle mode needs n=3, a=0 and a half_sphere base "
            f"(got n={d.n}, shape={d.shape}, kappa={context.potential.kappa}, "
            f"perturbation={'none' if context.potential.is_euler else context.potential.label})"
        )


def newtonian(n: int, dist, r_big=None) -> np.ndarray:
    """Free-space kernel F_n.  For n = 2 the logarithm is shifted to stay positive."""
    dist = np.asarray(dist, dtype=float)
    if n >= 3:
        return 1.0 / ((n - 2) * sphere_area(n) * dist ** (n - 2))
    return np.log1p(2.0 * np.asarray(r_big, dtype=float) / dist) / (2.0 * math.pi)


# h / rho_n is the distance at which F_n equals its mean over pairs of points
# of a cube of side h (geometric mean distance for the logarithm, n = 2)
_CELL_RHO = {2: 2.2369, 3: 1.8823, 4: 1.6628, 5: 1.5162, 6: 1.3965}


@lru_cache(maxsize=None)
def cell_self_distance(n: int) -> float:
    """rho_n with F_n(h / rho_n) the mean self-interaction of a lattice cell of side h."""
    if n in _CELL_RHO:
        return _CELL_RHO[n]
    from scipy.stats import qmc

    s = qmc.Sobol(2 * n, scramble=True, seed=0).random(2**18)
    z = np.linalg.norm(s[:, :n] - s[:, n:], axis=1)
    return float(np.mean(z ** (2.0 - n)) ** (1.0 / (n - 2)))


def _pairwise(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    diff = X[:, None, :] - Y[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def green_matrix(
    model: KernelModel,
    X,
    Y=None,
    h_self=None,
) -> np.ndarray:
    """Kernel matrix G(X_i, Y_j).

    With ``Y`` omitted the matrix is the self-interaction of ``X``.  Each
    point then stands for a lattice cell of side ``h_self[i]`` and the
    diagonal is the kernel at that cell's equivalent self-distance
    h / rho_n; without ``h_self`` the diagonal sits at distance ``h_reg``.
    """
    ctx = model.context
    X = np.atleast_2d(np.asarray(X, dtype=float))
    self_mode = Y is None
    Y = X if self_mode else np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[0] == 0 or Y.shape[0] == 0:
        return np.zeros((X.shape[0], Y.shape[0]))
    dist = _pairwise(X, Y)
    D = np.maximum(dist, model.h_reg)
    if self_mode:
        if h_self is None:
            np.fill_diagonal(D, model.h_reg)
        else:
            np.fill_diagonal(D, np.asarray(h_self, dtype=float) / cell_self_distance(model.n))
    if model.mode == ORACLE:
        a = np.clip(X[:, -1], 0.0, None)
        b = np.clip(Y[:, -1], 0.0, None)
        G = (1.0 / D - 1.0 / np.sqrt(D**2 + 4.0 * a[:, None] * b[None, :])) / (4.0 * math.pi)
        return model.scale * G
    rx = np.linalg.norm(X, axis=1)
    ry = np.linalg.norm(Y, axis=1)
    Vx, Wx, _, _ = ctx.radial(rx)
    Vy, Wy, _, _ = ctx.radial(ry)
    px = ctx.phi(X)
    py = ctx.phi(Y)
    x_inner = rx[:, None] <= ry[None, :]
    prod = np.where(x_inner, Vx[:, None] * Wy[None, :], Vy[None, :] * Wx[:, None])
    pp = px[:, None] * py[None, :]
    prod = model.c_mid * prod * pp
    lo, hi = np.minimum(rx[:, None], ry[None, :]), np.maximum(rx[:, None], ry[None, :])
    F = newtonian(model.n, D, hi)
    # comparable radii: free-space kernel damped by the boundary layer
    J = ctx.eigen.normal_derivative
    layer = 2.0 * rx[:, None] * ry[None, :] * pp / (J * J * sphere_area(model.n) * D**model.n)
    near = np.minimum(F, np.maximum(prod, layer))
    return model.scale * np.where(lo <= SEPARATION * hi, prod, near)


def green_pairs(model: KernelModel, A, B) -> np.ndarray:
    """Elementwise kernel values G(A_i, B_i) for matching rows (no diagonal special case)."""
    ctx = model.context
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    D = np.maximum(np.linalg.norm(A - B, axis=1), model.h_reg)
    if model.mode == ORACLE:
        a = np.clip(A[:, -1], 0.0, None)
        b = np.clip(B[:, -1], 0.0, None)
        return model.scale * (1.0 / D - 1.0 / np.sqrt(D**2 + 4.0 * a * b)) / (4.0 * math.pi)
    ra, rb = np.linalg.norm(A, axis=1), np.linalg.norm(B, axis=1)
    Va, Wa, _, _ = ctx.radial(ra)
    Vb, Wb, _, _ = ctx.radial(rb)
    pp = np.clip(ctx.phi(A), 0.0, None) * np.clip(ctx.phi(B), 0.0, None)
    prod = model.c_mid * np.where(ra <= rb, Va * Wb, Vb * Wa) * pp
    lo, hi = np.minimum(ra, rb), np.maximum(ra, rb)
    J = ctx.eigen.normal_derivative
    layer = 2.0 * ra * rb * pp / (J * J * sphere_area(model.n) * D**model.n)
    near = np.minimum(newtonian(model.n, D, hi), np.maximum(prod, layer))
    return model.scale * np.where(lo <= SEPARATION * hi, prod, near)


def _patch_rule(dim: int, order: int = 12) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for the difference of two uniform points of the unit cube in ``dim`` dimensions."""
    g, wg = np.polynomial.legendre.leggauss(order)
    u = 0.5 * (g + 1.0)
    w1 = 0.5 * wg * (1.0 - u)  # density 1 - |u| on [-1, 1], folded
    nodes = np.concatenate([-u, u])
    weights = np.concatenate([w1, w1])
    grids = np.meshgrid(*([nodes] * dim), indexing="ij")
    wgrid = np.meshgrid(*([weights] * dim), indexing="ij")
    return np.stack([a.ravel() for a in grids], axis=1), np.prod(np.stack([a.ravel() for a in wgrid]), axis=0)


def patch_self_interaction(model: KernelModel, X, h, normal) -> np.ndarray:
    """Mean of G over pairs of points of the square patch of side h_i centred at X_i, orthogonal to ``normal``.

    A point sample standing for a piece of surface closer to the boundary
    than its own spacing needs this instead of G at distance h: the point
    value misses the capacitor-like interaction of the patch with its image.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    h = np.broadcast_to(np.asarray(h, dtype=float), (X.shape[0],))
    if X.shape[0] == 0:
        return np.zeros(0)
    normal = np.asarray(normal, dtype=float)
    frame = np.linalg.svd(normal[None, :] / np.linalg.norm(normal))[2][1:]
    Z, wz = _patch_rule(model.n - 1)
    D = Z @ frame
    half = 0.5 * h[:, None, None] * D[None, :, :]
    A = (X[:, None, :] - half).reshape(-1, model.n)
    B = (X[:, None, :] + half).reshape(-1, model.n)
    G = green_pairs(model, A, B).reshape(X.shape[0], -1)
    return G @ wz


def green(model: KernelModel, P: PointLike, Q: PointLike) -> float:
    """Green a-function surrogate (or the exact half-space value in oracle mode)."""
    ctx = model.context
    x, y = ctx.cart(P), ctx.cart(Q)
    if model.mode == ORACLE:
        return model.scale * halfspace_green_oracle(x, y)
    return float(green_matrix(model, x[None, :], y[None, :])[0, 0])


def _product_form(ctx: ConeContext, x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    r, t = float(np.linalg.norm(x)), float(np.linalg.norm(y))
    Vr, Wr, _, _ = ctx.radial(r)
    Vt, Wt, _, _ = ctx.radial(t)
    phis = float(ctx.phi(x)) * float(ctx.phi(y))
    prod = (Vr * Wt if r <= t else Vt * Wr) * phis
    return prod, r, t


def is_separated(r: float, t: float) -> bool:
    return min(r, t) <= SEPARATION * max(r, t)


def green_bounds(model: KernelModel, P: PointLike, Q: PointLike) -> tuple[float, float]:
    """Two-sided product-form bounds ``(C1 prod, C2 prod)`` for separated pairs."""
    ctx = model.context
    x, y = ctx.cart(P), ctx.cart(Q)
    prod, r, t = _product_form(ctx, x, y)
    if r == 0 or t == 0 or not is_separated(r, t):
        raise NotApplicableError(f"pair not radially separated (r={r:.6g}, t={t:.6g})")
    if model.mode == ORACLE:
        if model.envelope is None:
            raise NotApplicableError("oracle bounds need fitted envelope constants; see fit_envelope")
        lo, hi = model.envelope.C1, model.envelope.C2
    else:
        lo = model.c_lower
        hi = model.c_mid if model.c_upper is None else model.c_upper
    return model.scale * lo * prod, model.scale * hi * prod


def martin_infinity(context: ConeContext, P: PointLike) -> float:
    """Martin kernel at infinity, V(r) phi(Theta)."""
    x = context.cart(P)
    r = float(np.linalg.norm(x))
    if r == 0.0:
        return 0.0
    return float(context.radial(r)[0] * context.phi(x))


def martin_infinity_many(context: ConeContext, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        return np.zeros(0)
    return context.radial(np.linalg.norm(X, axis=1))[0] * context.phi(X)


def martin_origin(context: ConeContext, P: PointLike) -> float:
    """Martin kernel at the vertex, kappa_martin W(r) phi(Theta)."""
    x = context.cart(P)
    r = float(np.linalg.norm(x))
    if r == 0.0:
        raise DomainError("martin_origin is singular at the vertex")
    return float(context.kappa_martin * context.radial(r)[1] * context.phi(x))


def martin_origin_many(context: ConeContext, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        return np.zeros(0)
    return context.kappa_martin * context.radial(np.linalg.norm(X, axis=1))[1] * context.phi(X)


def _check_boundary(ctx: ConeContext, Y: np.ndarray, atol: float = 1e-9) -> None:
    psi = ctx.domain.psi_of(Y)
    if np.any(np.abs(psi - ctx.domain.half_aperture) > atol) or np.any(np.linalg.norm(Y, axis=1) == 0):
        raise DomainError("poisson kernel needs points on the lateral boundary S_n(Omega)")


def poisson_matrix(model: KernelModel, X, Y) -> np.ndarray:
    """Normal-derivative kernel dG(X_i, Y_j)/dn for interior X and boundary Y."""
    ctx = model.context
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[0] == 0 or Y.shape[0] == 0:
        return np.zeros((X.shape[0], Y.shape[0]))
    _check_boundary(ctx, Y)
    px = ctx.phi(X)
    if np.any(px <= 0):
        raise DomainError("poisson kernel needs interior points P")
    dist = np.maximum(_pairwise(X, Y), model.h_reg)
    if model.mode == ORACLE:
        return model.scale * X[:, -1][:, None] / (2.0 * math.pi * dist**3)
    n = model.n
    dphi = ctx.eigen.normal_derivative
    r = np.linalg.norm(X, axis=1)[:, None]
    t = np.linalg.norm(Y, axis=1)[None, :]
    Vr, Wr, _, _ = ctx.radial(r)
    Vt, Wt, _, _ = ctx.radial(t)
    inner_q = t <= SEPARATION * r
    inner_p = r <= SEPARATION * t
    near = np.abs(px)[:, None] * dphi
    out = np.where(
        inner_q,
        model.c_mid * Vt * Wr / t * near,
        np.where(
            inner_p,
            model.c_mid * Vr * Wt / t * near,
            near * t ** (1 - n) + r * near / dist**n,
        ),
    )
    return model.scale * out


def poisson_surrogate(model: KernelModel, P: PointLike, Q: PointLike) -> float:
    """Poisson a-kernel surrogate at interior P and boundary point Q."""
    ctx = model.context
    return float(poisson_matrix(model, ctx.cart(P)[None, :], ctx.cart(Q)[None, :])[0, 0])


def halfspace_green_oracle(P, Q) -> float:
    """Exact Laplace Green function of the upper half-space in R^3 (method of images)."""
    x = np.asarray(P.cartesian() if hasattr(P, "cartesian") else P, dtype=float)
    y = np.asarray(Q.cartesian() if hasattr(Q, "cartesian") else Q, dtype=float)
    if x.shape != (3,) or y.shape != (3,):
        raise DomainError("half-space oracle needs points of R^3")
    if x[2] < 0 or y[2] < 0:
        raise DomainError("half-space oracle needs points with x_3 >= 0")
    if x[2] == 0 or y[2] == 0:
        return 0.0
    d = float(np.linalg.norm(x - y))
    if d == 0.0:
        warnings.warn("Green function evaluated on the diagonal", SingularDiagonalWarning, stacklevel=2)
        return math.inf
    y_star = y.copy()
    y_star[2] = -y_star[2]
    return (1.0 / d - 1.0 / float(np.linalg.norm(x - y_star))) / (4.0 * math.pi)


@dataclass(frozen=True)
class EnvelopeFit:
    """Empirical constants with C1 prod <= G_exact <= C2 prod on the sampled pairs."""

    C1: float
    C2: float
    n_pairs: int
    seed: int
    ratio_band: str = "exact/product"

    @property
    def log_width(self) -> float:
        return math.log(self.C2 / self.C1)

    def as_dict(self) -> dict:
        return {
            "C1": self.C1,
            "C2": self.C2,
            "log_width": self.log_width,
            "log_8": math.log(8.0),
            "n_pairs": self.n_pairs,
            "seed": self.seed,
        }


def sample_separated_pairs(context: ConeContext, n_pairs: int, rng: np.random.Generator):
    """Random radially separated pairs with both points in the cone."""
    n = context.n
    beta = context.domain.half_aperture
    out_x, out_y = [], []
    while len(out_x) < n_pairs:
        r = math.exp(rng.uniform(math.log(0.1), math.log(10.0)))
        ratio = math.exp(rng.uniform(math.log(1.0 / SEPARATION), math.log(8.0)))
        t = r * ratio
        if rng.random() < 0.5:
            r, t = t, r
        pts = []
        for rad in (r, t):
            v = rng.normal(size=n)
            v[-1] = abs(v[-1])
            v /= np.linalg.norm(v)
            pts.append(rad * v)
        if context.domain.psi_of(np.array(pts)).max() >= beta:
            continue
        out_x.append(pts[0])
        out_y.append(pts[1])
    return np.array(out_x), np.array(out_y)


def fit_envelope(model: KernelModel, n_pairs: int = 500, seed: int = 0) -> EnvelopeFit:
    """Sweep the exact half-space Green function over random separated pairs.

    Returns the empirical envelope of exact / product-form ratios.
    """
    ctx = model.context
    _require_oracle(ctx)
    rng = np.random.default_rng(seed)
    X, Y = sample_separated_pairs(ctx, n_pairs, rng)
    ratios = np.empty(n_pairs)
    for i in range(n_pairs):
        prod, _, _ = _product_form(ctx, X[i], Y[i])
        ratios[i] = halfspace_green_oracle(X[i], Y[i]) / prod
    return EnvelopeFit(float(ratios.min()), float(ratios.max()), n_pairs, seed)


def order_agreement(context: ConeContext, n_pairs: int = 500, seed: int = 0, c_mid: float = 1.0) -> float:
    """max |log(surrogate / exact)| over random separated pairs (half-space Laplace case only)."""
    _require_oracle(context)
    X, Y = sample_separated_pairs(context, n_pairs, np.random.default_rng(seed))
    sur = green_pairs(KernelModel(context, c_mid=c_mid), X, Y)
    exact = np.array([halfspace_green_oracle(x, y) for x, y in zip(X, Y)])
    return float(np.max(np.abs(np.log(sur / exact))))
