import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from wienercone.errors import DomainError
from wienercone.radial import exponents
from wienercone.spherical import (
    DomainSpec,
    Point,
    boundary_normal_derivative,
    eval_phi,
    legendre_p,
    solve_eigen,
    sphere_area,
)

HALF3 = math.sqrt(6.0 / (4.0 * math.pi))


def test_sphere_area_values():
    assert sphere_area(2) == pytest.approx(2 * math.pi)
    assert sphere_area(3) == pytest.approx(4 * math.pi)
    assert sphere_area(4) == pytest.approx(2 * math.pi**2)


def test_half_sphere_n3():
    # [PAPER] lambda = n - 1, phi = (2n/s_n)^(1/2) cos(theta_1)
    e = solve_eigen(DomainSpec(3, "half_sphere"))
    assert e.lam == 2.0
    assert eval_phi(e, (0.0, 0.0)) == pytest.approx(0.690988, abs=1e-6)
    assert eval_phi(e, (0.0, 0.0)) == pytest.approx(HALF3, rel=1e-14)
    assert eval_phi(e, (1.0, 0.3)) == pytest.approx(HALF3 * math.cos(1.0), rel=1e-14)
    assert e.J_Omega == pytest.approx(HALF3, rel=1e-10)


def test_arc_pi():
    # [DERIVED] sin on (0, pi), L2-normalized
    e = solve_eigen(DomainSpec(2, "arc", math.pi))
    assert e.lam == pytest.approx(1.0)
    amp = math.sqrt(2 / math.pi)
    assert eval_phi(e, (math.pi / 2,)) == pytest.approx(0.797885, abs=1e-6)
    for th in (0.3, 1.1, 2.5):
        assert eval_phi(e, (th,)) == pytest.approx(amp * math.sin(th), rel=1e-12)
    assert boundary_normal_derivative(e, (0.0,)) == pytest.approx(amp, rel=1e-12)


def test_cap_half_matches_half_sphere():
    # [DERIVED] colatitude pi/2 is the half-sphere
    cap = solve_eigen(DomainSpec(3, "cap", math.pi / 2))
    half = solve_eigen(DomainSpec(3, "half_sphere"))
    assert cap.lam == pytest.approx(2.0, abs=1e-6)
    assert cap.nu == pytest.approx(1.0, abs=1e-9)
    psi = np.linspace(0, 1.5, 30)
    assert np.allclose(cap.profile(psi), half.profile(psi), atol=1e-6)


@pytest.mark.parametrize(
    "spec",
    [
        DomainSpec(2, "arc", 0.4),
        DomainSpec(2, "arc", math.pi),
        DomainSpec(2, "arc", 5.5),
        DomainSpec(3, "cap", 0.3),
        DomainSpec(3, "cap", 1.2),
        DomainSpec(3, "cap", 2.8),
        DomainSpec(2, "half_sphere"),
        DomainSpec(3, "half_sphere"),
        DomainSpec(5, "half_sphere"),
    ],
    ids=lambda s: f"{s.shape}-{s.n}-{s.alpha}",
)
def test_invariants(spec):
    e = solve_eigen(spec)
    assert e.normalization_residual <= 1e-6
    beta = spec.half_aperture
    # positive inside, zero on the boundary
    psi = np.linspace(0, beta, 201)[:-1]
    assert np.all(e.profile(psi) > 0)
    assert e.profile(beta) == 0.0
    assert e.normal_derivative > 0
    assert e.J_Omega == pytest.approx(float(np.max(e.profile(np.linspace(0, beta, 2001)))), rel=1e-6)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0, 2.6])
def test_cap_profile_solves_the_ode(alpha):
    # (Delta* + lambda) phi = 0 for a zonal function: phi'' + cot(psi) phi' + lambda phi = 0
    e = solve_eigen(DomainSpec(3, "cap", alpha))
    psi = np.linspace(0.1, alpha - 0.05, 9)
    h = 1e-4
    f = e.profile
    d1 = (f(psi + h) - f(psi - h)) / (2 * h)
    d2 = (f(psi + h) - 2 * f(psi) + f(psi - h)) / h**2
    resid = d2 + d1 / np.tan(psi) + e.lam * f(psi)
    assert np.max(np.abs(resid)) < 1e-5 * e.lam * e.J_Omega


def test_cap_normalization_by_independent_quadrature():
    e = solve_eigen(DomainSpec(3, "cap", 1.0))
    val, _ = integrate.quad(lambda p: 2 * math.pi * math.sin(p) * float(e.profile(p)) ** 2, 0, 1.0, epsabs=1e-13)
    assert val == pytest.approx(1.0, abs=1e-10)


def test_legendre_matches_integer_degree():
    x = np.linspace(-0.9, 0.9, 7)
    for deg in (1, 2, 5):
        assert np.allclose(legendre_p(float(deg), x), special.eval_legendre(deg, x), atol=1e-12)


def test_cap_lambda_decreasing_in_alpha():
    alphas = np.linspace(0.2, 3.0, 15)
    lams = [solve_eigen(DomainSpec(3, "cap", float(a))).lam for a in alphas]
    assert np.all(np.diff(lams) < 0)


@settings(max_examples=10, deadline=None)
@given(alpha=st.floats(0.1, 3.0))
def test_cap_exponent_equals_degree(alpha):
    e = solve_eigen(DomainSpec(3, "cap", alpha))
    ip, _, _ = exponents(3, 0.0, e.lam)
    assert ip == pytest.approx(e.nu, rel=1e-9)


def test_half_sphere_normal_derivative_n3():
    e = solve_eigen(DomainSpec(3, "half_sphere"))
    assert boundary_normal_derivative(e, (math.pi / 2, 0.2)) == pytest.approx(HALF3, rel=1e-12)


def test_eval_on_boundary_is_exact_zero():
    for spec in (DomainSpec(2, "arc", 2.0), DomainSpec(3, "cap", 0.7), DomainSpec(4, "half_sphere")):
        e = solve_eigen(spec)
        theta0 = spec.theta_from_psi(spec.half_aperture)
        assert eval_phi(e, (theta0, *[0.1] * (spec.n - 2))) == 0.0


def test_domain_errors():
    e = solve_eigen(DomainSpec(3, "cap", 0.7))
    with pytest.raises(DomainError):
        eval_phi(e, (0.9, 0.0))
    with pytest.raises(DomainError):
        boundary_normal_derivative(e, (0.3, 0.0))
    with pytest.raises(DomainError):
        eval_phi(e, (0.1,))


@pytest.mark.parametrize(
    "args",
    [(1, "half_sphere", None), (3, "arc", 1.0), (2, "arc", 0.0), (2, "arc", 2 * math.pi), (3, "cap", math.pi), (4, "cap", 1.0), (3, "half_sphere", 1.0), (3, "torus", None)],
)
def test_invalid_specs(args):
    with pytest.raises(DomainError):
        DomainSpec(*args)


def test_inward_normal_points_into_cone():
    d = DomainSpec(3, "cap", 1.0)
    q = d.boundary_point(2.0)
    nrm = d.inward_normal(q)[0]
    assert np.linalg.norm(nrm) == pytest.approx(1.0)
    assert np.dot(nrm, q) == pytest.approx(0.0, abs=1e-14)
    assert d.psi_of(q + 1e-3 * nrm) < 1.0


@given(
    r=st.floats(0.01, 100.0),
    t0=st.floats(0.0, math.pi / 2),
    t1=st.floats(0.0, 2 * math.pi - 1e-9),
)
def test_coordinate_round_trip(r, t0, t1):
    d = DomainSpec(3, "half_sphere")
    x = d.to_cartesian(Point(r, (t0, t1)))
    assert np.linalg.norm(x) == pytest.approx(r)
    back = d.from_cartesian(x)
    assert back.theta[0] == pytest.approx(t0, abs=1e-7)
    assert np.allclose(d.to_cartesian(back), x, atol=1e-9 * r)
