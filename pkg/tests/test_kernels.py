import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wienercone.errors import DomainError, NotApplicableError, UnsupportedConfigurationError
from wienercone.kernels import (
    ORACLE,
    KernelModel,
    SingularDiagonalWarning,
    build_context,
    fit_envelope,
    green,
    green_bounds,
    green_matrix,
    green_pairs,
    halfspace_green_oracle,
    martin_infinity,
    martin_origin,
    newtonian,
    order_agreement,
    patch_self_interaction,
    poisson_matrix,
    poisson_surrogate,
    sample_separated_pairs,
)
from wienercone.radial import PotentialSpec
from wienercone.spherical import DomainSpec, Point

HALF3 = math.sqrt(6.0 / (4.0 * math.pi))


def random_interior(rng, n, size, beta=math.pi / 2, rmin=0.1, rmax=10.0):
    out = []
    while len(out) < size:
        v = rng.normal(size=n)
        v[-1] = abs(v[-1])
        v /= np.linalg.norm(v)
        if math.acos(v[-1]) < beta * 0.98:
            out.append(v * math.exp(rng.uniform(math.log(rmin), math.log(rmax))))
    return np.array(out)


# ---------------------------------------------------------------- oracle


def test_oracle_axis_pair():
    # [DERIVED] (1/4pi)(1/2 - 1/4)
    assert halfspace_green_oracle((0, 0, 1), (0, 0, 3)) == pytest.approx(1 / (16 * math.pi), rel=1e-14)
    assert 1 / (16 * math.pi) == pytest.approx(0.0198944, abs=1e-7)


def test_oracle_model_green(oracle3):
    assert green(oracle3, (0, 0, 1), (0, 0, 3)) == pytest.approx(1 / (16 * math.pi), rel=1e-14)
    assert green(oracle3, Point(1.0, (0.0, 0.0)), Point(3.0, (0.0, 0.0))) == pytest.approx(1 / (16 * math.pi))


def test_oracle_diagonal_and_plane():
    with pytest.warns(SingularDiagonalWarning):
        assert halfspace_green_oracle((0, 0, 1), (0, 0, 1)) == math.inf
    assert halfspace_green_oracle((1, 2, 3), (0.5, 0.1, 0.0)) == 0.0
    with pytest.raises(DomainError):
        halfspace_green_oracle((0, 0, -1), (0, 0, 1))
    with pytest.raises(DomainError):
        halfspace_green_oracle((0, 1), (0, 1))


def test_oracle_matrix_matches_scalar(oracle3, rng):
    X = random_interior(rng, 3, 20)
    Y = random_interior(rng, 3, 15)
    G = green_matrix(oracle3, X, Y)
    ref = np.array([[halfspace_green_oracle(x, y) for y in Y] for x in X])
    assert np.allclose(G, ref, rtol=1e-12)


def test_oracle_rejected_outside_half_space():
    for ctx in (
        build_context(DomainSpec(2, "half_sphere")),
        build_context(DomainSpec(3, "cap", 1.0)),
        build_context(DomainSpec(3, "half_sphere"), PotentialSpec(1.0)),
    ):
        with pytest.raises(UnsupportedConfigurationError):
            KernelModel(ctx, mode=ORACLE)


# ---------------------------------------------------------------- surrogate green


def test_surrogate_symmetric(surrogate3, rng):
    X = random_interior(rng, 3, 100)
    Y = random_interior(rng, 3, 100)
    for x, y in zip(X, Y):
        assert green(surrogate3, x, y) == pytest.approx(green(surrogate3, y, x), rel=1e-13)
    G = green_matrix(surrogate3, X, X)
    assert np.allclose(G, G.T, rtol=1e-13)


@pytest.mark.parametrize("spec", [DomainSpec(2, "arc", 2.0), DomainSpec(3, "cap", 1.2), DomainSpec(4, "half_sphere")])
def test_surrogate_symmetric_other_cones(spec, rng):
    ctx = build_context(spec)
    m = KernelModel(ctx)
    X = random_interior(rng, spec.n, 40, spec.half_aperture)
    G = green_matrix(m, X, X)
    assert np.allclose(G, G.T, rtol=1e-12)
    assert np.all(G >= 0)


def test_surrogate_separated_equals_product(ctx3, rng):
    m = KernelModel(ctx3, c_mid=1.7)
    X, Y = sample_separated_pairs(ctx3, 50, rng)
    for x, y in zip(X, Y):
        r, t = np.linalg.norm(x), np.linalg.norm(y)
        lo, hi = min(r, t), max(r, t)
        prod = 1.7 * lo * hi**-2 * HALF3**2 * (x[2] / r) * (y[2] / t)
        assert green(m, x, y) == pytest.approx(prod, rel=1e-8)


def test_surrogate_vanishes_at_boundary(surrogate3):
    q = np.array([3.0, 0.0, 0.0])
    assert green(surrogate3, (0, 0, 1), q) == 0.0
    # along interior normals the kernel decays to zero
    vals = [green(surrogate3, (0, 0, 1), (3.0, 0.0, eps)) for eps in (1e-1, 1e-2, 1e-3)]
    assert vals[0] > vals[1] > vals[2] > 0


def test_surrogate_monotone_tail(surrogate3):
    P = np.array([0.2, 0.1, 1.0])
    r = np.linalg.norm(P)
    d = np.array([0.3, -0.2, 0.9])
    d /= np.linalg.norm(d)
    ts = np.linspace(1.25 * r, 40 * r, 50)
    vals = [green(surrogate3, P, t * d) for t in ts]
    assert np.all(np.diff(vals) < 0)


def test_surrogate_below_newtonian(surrogate3, rng):
    X = random_interior(rng, 3, 60)
    Y = random_interior(rng, 3, 60)
    G = green_matrix(surrogate3, X, Y)
    D = np.linalg.norm(X[:, None] - Y[None], axis=-1)
    inner = np.minimum(np.linalg.norm(X, axis=1)[:, None], np.linalg.norm(Y, axis=1)[None]) > 0.8 * np.maximum(
        np.linalg.norm(X, axis=1)[:, None], np.linalg.norm(Y, axis=1)[None]
    )
    assert np.all(G[inner] <= newtonian(3, np.maximum(D[inner], 1e-3)) * (1 + 1e-12))


def test_green_pairs_matches_matrix_diagonal(surrogate3, rng):
    X = random_interior(rng, 3, 30)
    Y = random_interior(rng, 3, 30)
    assert np.allclose(green_pairs(surrogate3, X, Y), np.diag(green_matrix(surrogate3, X, Y)), rtol=1e-13)


def test_scaled_model(surrogate3):
    P, Q = (0.1, 0.0, 1.0), (0.5, 0.3, 4.0)
    assert green(surrogate3.scaled(3.0), P, Q) == pytest.approx(3.0 * green(surrogate3, P, Q))


def test_newtonian_kernels():
    assert newtonian(3, 2.0) == pytest.approx(1 / (8 * math.pi))
    assert newtonian(4, 1.0) == pytest.approx(1 / (2 * 2 * math.pi**2))
    assert float(newtonian(2, 1.0, 1.0)) > 0


def test_patch_self_interaction_exceeds_far_field(oracle3):
    X = np.array([[0.0, 0.0, 2.0], [0.0, 0.0, 0.05]])
    d = patch_self_interaction(oracle3, X, 0.01, np.array([0.0, 0.0, 1.0]))
    assert np.all(np.isfinite(d)) and np.all(d > 0)
    # close to the boundary the image charge lowers the self-energy
    assert d[1] < d[0]


# ---------------------------------------------------------------- bounds


def test_bounds_contain_surrogate(surrogate3, ctx3, rng):
    X, Y = sample_separated_pairs(ctx3, 100, rng)
    for x, y in zip(X, Y):
        lo, hi = green_bounds(surrogate3, x, y)
        g = green(surrogate3, x, y)
        assert lo <= g <= hi * (1 + 1e-12)


def test_bounds_not_applicable_on_equal_radii(surrogate3):
    with pytest.raises(NotApplicableError):
        green_bounds(surrogate3, (0, 0, 2.0), (0, 2.0, 1e-9 + 0.0))
    with pytest.raises(NotApplicableError):
        green_bounds(surrogate3, (0, 0, 2.0), (0.0, 0.6, 1.9))


def test_oracle_envelope(ctx3):
    env = fit_envelope(KernelModel(ctx3, mode=ORACLE), 200, seed=3)
    m = KernelModel(ctx3, mode=ORACLE, envelope=env)
    X, Y = sample_separated_pairs(ctx3, 200, np.random.default_rng(3))
    for x, y in zip(X, Y):
        lo, hi = green_bounds(m, x, y)
        assert lo * (1 - 1e-12) <= green(m, x, y) <= hi * (1 + 1e-12)
    assert 0 < env.C1 < env.C2
    assert env.as_dict()["log_width"] == pytest.approx(env.log_width)


def test_oracle_bounds_need_envelope(oracle3):
    with pytest.raises(NotApplicableError):
        green_bounds(oracle3, (0, 0, 1), (0, 0, 3))


def test_order_agreement_is_finite(ctx3):
    v = order_agreement(ctx3, 100, seed=1)
    assert 0 < v < 10


# ---------------------------------------------------------------- martin kernels


def test_martin_infinity_examples(ctx3):
    assert martin_infinity(ctx3, (0, 0, 2)) == pytest.approx(1.381977, abs=1e-6)
    assert martin_infinity(ctx3, (0, 0, 1)) == pytest.approx(HALF3, rel=1e-10)
    assert martin_infinity(ctx3, (2.0, 1.0, 0.0)) == 0.0


def test_martin_origin_examples(ctx3):
    assert martin_origin(ctx3, (0, 0, 2)) == pytest.approx(0.172747, abs=1e-6)
    assert martin_origin(ctx3, (2.0, 1.0, 0.0)) == 0.0
    vals = [martin_origin(ctx3, (0, 0, r)) for r in np.geomspace(0.1, 100, 30)]
    assert np.all(np.diff(vals) < 0)
    with pytest.raises(DomainError):
        martin_origin(ctx3, (0, 0, 0))


def test_martin_origin_kappa_scaling():
    ctx = build_context(DomainSpec(3, "half_sphere"), kappa_martin=2.5)
    assert martin_origin(ctx, (0, 0, 2)) == pytest.approx(2.5 * 0.25 * HALF3)


def test_martin_boundary_vanishing_along_normal(ctx3):
    vals = [martin_infinity(ctx3, (2.0, 0.0, e)) for e in (1e-1, 1e-3, 1e-6)]
    assert vals[0] > vals[1] > vals[2] > 0 and vals[2] < 1e-5


# ---------------------------------------------------------------- poisson kernels


def test_poisson_oracle_is_exact_normal_derivative(oracle3):
    P = np.array([0.3, -0.4, 1.5])
    Q = np.array([1.0, 2.0, 0.0])
    eps = 1e-6
    fd = halfspace_green_oracle(P, Q + eps * np.array([0, 0, 1.0])) / eps
    assert poisson_surrogate(oracle3, P, Q) == pytest.approx(fd, rel=1e-5)


def test_poisson_separated_product_and_difference_quotient(ctx3, surrogate3):
    # t/r = 1/2 with Q on the boundary plane
    P = np.array([0.0, 0.0, 4.0])
    Q = np.array([2.0, 0.0, 0.0])
    val = poisson_surrogate(surrogate3, P, Q)
    t, r = 2.0, 4.0
    dphi = ctx3.eigen.normal_derivative
    prod = (t / t) * r**-2 * HALF3 * dphi
    assert val == pytest.approx(prod, rel=1e-8)
    eps = 1e-5
    fd = green(surrogate3, P, Q + eps * np.array([0, 0, 1.0])) / eps
    assert 0.5 <= val / fd <= 2.0


def test_poisson_symmetric_mirror(surrogate3):
    P1, Q1 = np.array([0.5, 0.2, 1.0]), np.array([1.1, 0.3, 0.0])
    P2, Q2 = P1 * np.array([-1, -1, 1]), Q1 * np.array([-1, -1, 1])
    assert poisson_surrogate(surrogate3, P1, Q1) == pytest.approx(poisson_surrogate(surrogate3, P2, Q2), rel=1e-13)


def test_poisson_middle_band_decays(surrogate3):
    # r and t stay within a factor 4/5 while |P - Q| grows
    vals = []
    for t in (10.0, 100.0, 1000.0):
        P = np.array([0.0, 0.0, t])
        Q = np.array([t, 0.0, 0.0])
        vals.append(poisson_surrogate(surrogate3, P, Q))
    assert vals[0] > vals[1] > vals[2] > 0 and vals[2] < 1e-5


def test_poisson_domain_errors(surrogate3):
    with pytest.raises(DomainError):
        poisson_surrogate(surrogate3, (0, 0, 1), (1, 0, 0.5))
    with pytest.raises(DomainError):
        poisson_surrogate(surrogate3, (1, 0, 0), (2, 0, 0))


def test_poisson_matrix_shape(surrogate3):
    X = np.array([[0, 0, 1.0], [0.1, 0, 2.0]])
    Y = np.array([[1.0, 0, 0], [0, 3.0, 0], [0.2, 0.2, 0]])
    M = poisson_matrix(surrogate3, X, Y)
    assert M.shape == (2, 3) and np.all(M > 0)


@settings(max_examples=30, deadline=None)
@given(
    a=st.tuples(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.01, 5)),
    b=st.tuples(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.01, 5)),
)
def test_oracle_symmetric_and_positive(a, b):
    if np.linalg.norm(np.subtract(a, b)) < 1e-6:
        return
    g1, g2 = halfspace_green_oracle(a, b), halfspace_green_oracle(b, a)
    assert g1 == pytest.approx(g2, rel=1e-9, abs=1e-300)
    assert g1 >= 0
