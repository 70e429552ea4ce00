import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wienercone.errors import DomainError
from wienercone.sets import (
    AxisBeads,
    Ball,
    BoundaryRegion,
    ExplicitPoints,
    SetSpec,
    ShellSector,
    block_index,
    boundary_distance,
    contains,
    decomposition_from_points,
    discretize,
    in_subcone,
)
from wienercone.spherical import DomainSpec, Point, solve_eigen

HALF = DomainSpec(3, "half_sphere")


@pytest.fixture(scope="module")
def eig():
    return solve_eigen(HALF)


def disc(spec, res=0.25, k=(0, 8), domain=HALF, eigen=None, cap=4096):
    return discretize(spec, res, k, domain, eigen, cap)


@pytest.mark.parametrize("r,k", [(4.0, 2), (1.0, 0), (0.3, -2), (7.999, 2), (8.0, 3), (0.5, -1)])
def test_block_index(r, k):
    assert block_index(Point(r, (0.0, 0.0))) == k
    assert block_index([0.0, 0.0, r]) == k


def test_block_index_rejects_origin():
    with pytest.raises(DomainError):
        block_index([0.0, 0.0, 0.0])


def test_every_point_in_its_block():
    d = disc(SetSpec((ShellSector(0, 6, 1.0), AxisBeads(0.7, 0, 6))))
    for b in d:
        if b.size:
            assert np.all((b.r >= 2.0**b.k) & (b.r < 2.0 ** (b.k + 1)))
            assert np.all(b.h <= 0.25 * 2.0**b.k * (1 + 1e-12))


def test_ball_inside_single_block():
    d = disc(SetSpec((Ball((0, 0, 6), 0.5),)), res=0.125)
    sizes = {b.k: b.size for b in d}
    assert sizes[2] > 0
    assert all(v == 0 for k, v in sizes.items() if k != 2)


def test_ball_straddling_blocks_is_split():
    d = disc(SetSpec((Ball((0, 0, 4), 0.5),)), res=0.125)
    assert d.blocks[1].size > 0 and d.blocks[2].size > 0
    assert d.total_points == sum(b.size for b in d)


def test_empty_spec():
    d = disc(SetSpec())
    assert d.is_empty() and len(d.blocks) == 9
    assert all(b.size == 0 for b in d)
    assert d.all_points().shape == (0, 3)


def test_shell_count_matches_enumeration(eig):
    # [DERIVED] direct enumeration of lattice points in I_3 of the upper half-space
    d = disc(SetSpec((ShellSector(3, 3),)), eigen=eig)
    h = 0.25 * 8
    rng = np.arange(-16, 16 + h, h)
    count = sum(
        1
        for x, y, z in itertools.product(rng, rng, rng)
        if z > 0 and 8 <= math.sqrt(x * x + y * y + z * z) < 16
    )
    assert d.blocks[3].size == count
    estimate = (2 / 3) * math.pi * (16**3 - 8**3) / h**3
    assert abs(count - estimate) <= 0.2 * estimate


def test_points_on_boundary_discarded(eig):
    d = disc(SetSpec((ShellSector(2, 2),)), eigen=eig)
    assert np.all(d.blocks[2].points[:, 2] > 0)


def test_deterministic():
    spec = SetSpec((ShellSector(1, 3, 0.8), AxisBeads(0.5, 0, 5), Ball((1.0, 0.5, 9.0), 2.0)))
    a, b = disc(spec), disc(spec)
    for k in a.blocks:
        assert np.array_equal(a.blocks[k].points, b.blocks[k].points)
        assert np.array_equal(a.blocks[k].h, b.blocks[k].h)


def _as_set(X):
    return {tuple(p) for p in X.tolist()}


@pytest.mark.parametrize(
    "extra",
    [
        (Ball((0.5, 0.0, 3.0), 0.3),),
        (ShellSector(2, 4, 1.0),),
        (AxisBeads(0.6, 0, 6), Ball((2.0, 2.0, 20.0), 5.0)),
    ],
)
def test_adding_primitives_grows_clouds(extra):
    base = (ShellSector(1, 2, 0.9), Ball((0.0, 0.0, 12.0), 3.0))
    A = disc(SetSpec(base))
    B = disc(SetSpec(base + extra))
    for k in A.blocks:
        assert _as_set(A.blocks[k].points) <= _as_set(B.blocks[k].points)


@pytest.mark.parametrize("prim", [Ball((0.3, 0.0, 5.0), 1.5), ShellSector(2, 2, 1.0), AxisBeads(1.0, 1, 3)])
def test_refinement_doubles_counts(prim):
    coarse = disc(SetSpec((prim,)), res=0.25)
    fine = disc(SetSpec((prim,)), res=0.125)
    for k in coarse.blocks:
        if coarse.blocks[k].size:
            assert fine.blocks[k].size >= 2 * coarse.blocks[k].size


def test_point_cap_coarsens():
    d = disc(SetSpec((ShellSector(0, 2),)), res=0.1, cap=500)
    assert all(b.size <= 500 for b in d)
    assert any(d.coarsened.values())


def test_outside_primitive_skipped(caplog):
    spec = SetSpec((Ball((0.0, 0.0, -5.0), 1.0), ExplicitPoints(((0.0, 0.0, -1.0),), (0.1,))), "below")
    d = disc(spec)
    assert d.is_empty()
    assert d.skipped == ("Ball", "ExplicitPoints")
    assert "outside the cone" in caplog.text


def test_explicit_points_bucketed():
    spec = SetSpec((ExplicitPoints(((0.0, 0.0, 1.5), (0.0, 0.3, 5.0), (1.0, 0.0, 0.0)), (0.1, 0.2, 0.1)),))
    d = disc(spec)
    assert d.blocks[0].size == 1 and d.blocks[2].size == 1
    assert d.blocks[2].h[0] == 0.2
    assert d.total_points == 2


def test_in_subcone(eig):
    beads = disc(SetSpec((AxisBeads(0.5, 1, 6),)))
    shells = disc(SetSpec((ShellSector(0, 4),)), eigen=eig)
    assert in_subcone(beads, eig, 0.5)
    assert not in_subcone(shells, eig, 0.5)
    assert in_subcone(disc(SetSpec()), eig, 0.5)
    with pytest.raises(DomainError):
        in_subcone(beads, eig, 1.5)


def test_shell_sector_angle(eig):
    d = disc(SetSpec((ShellSector(1, 3, 0.5),)))
    assert np.all(HALF.psi_of(d.all_points()) < 0.5)
    assert in_subcone(d, eig, 0.8)


def test_boundary_region_samples_near_q():
    q = HALF.boundary_point(2.0)
    d = disc(SetSpec((BoundaryRegion(tuple(q), 1.0, 0.5, 0.5),)), res=0.1)
    X = d.all_points()
    assert X.shape[0] > 0
    dist = np.linalg.norm(X - q, axis=1)
    assert np.all(dist < 0.5)
    assert np.all(boundary_distance(HALF, X) <= 0.5 * dist + 1e-12)


def test_contains_matches_primitives():
    spec = SetSpec((Ball((0, 0, 3), 1.0), ShellSector(4, 4, 0.3)))
    X = np.array([[0, 0, 3.5], [0, 0, 5.0], [0, 0, 20.0], [10.0, 0, 10.0], [0.5, 0, -3.0]])
    assert contains(spec, HALF, X).tolist() == [True, False, True, False, False]


def test_boundary_distance_half_space():
    X = np.array([[1.0, 2.0, 0.5], [0.0, 0.0, 3.0]])
    assert np.allclose(boundary_distance(HALF, X), [0.5, 3.0])


def test_decomposition_from_points():
    X = np.array([[0, 0, 1.2], [0, 0, 2.5], [0, 0, 3.9], [0, 0, 300.0]])
    d = decomposition_from_points(X, 0.1, (0, 3), 3)
    assert [b.size for b in d] == [1, 2, 0, 0]


def test_csv_export(tmp_path):
    d = disc(SetSpec((Ball((0, 0, 6), 0.5),)), res=0.25)
    path = tmp_path / "e.csv"
    d.to_csv(path, HALF)
    lines = path.read_text().splitlines()
    assert lines[0] == "k,r,theta1,theta2,h"
    assert len(lines) == d.total_points + 1


@pytest.mark.parametrize("bad", [lambda: Ball((0, 0, 1), 0.0), lambda: ShellSector(3, 2), lambda: AxisBeads(-1, 0, 2), lambda: ExplicitPoints(((0, 0, 1),), ())])
def test_invalid_primitives(bad):
    with pytest.raises(DomainError):
        bad()


def test_bad_resolution():
    with pytest.raises(DomainError):
        disc(SetSpec(), res=1.5)
    with pytest.raises(DomainError):
        disc(SetSpec(), k=(3, 1))


@settings(max_examples=15, deadline=None)
@given(
    cx=st.floats(-3, 3),
    cz=st.floats(0.5, 40),
    rad=st.floats(0.2, 4),
)
def test_ball_points_inside_ball_and_cone(cx, cz, rad):
    d = disc(SetSpec((Ball((cx, 0.0, cz), rad),)), k=(-3, 6))
    X = d.all_points()
    if X.shape[0]:
        assert np.all(np.linalg.norm(X - [cx, 0.0, cz], axis=1) < rad)
        assert np.all(X[:, 2] > 0)


def test_restrict_keeps_points_and_spacings():
    spec = SetSpec((ShellSector(1, 1, 0.8), AxisBeads(0.64, 2, 4)))
    d = disc(spec)
    part = SetSpec((ShellSector(1, 1, 0.8),))
    r = d.restrict(lambda X: contains(part, HALF, X), "part")
    assert r.name == "part" and r.k_min == d.k_min and r.k_max == d.k_max
    for k in d.blocks:
        full = {tuple(p): h for p, h in zip(d.blocks[k].points.tolist(), d.blocks[k].h)}
        for p, h in zip(r.blocks[k].points.tolist(), r.blocks[k].h):
            assert full[tuple(p)] == h
    assert r.blocks[1].size > 0 and r.blocks[3].size == 0
    # the overlap with the finer bead lattice keeps the finer spacing in both
    assert np.any(r.blocks[1].h < 0.5)
