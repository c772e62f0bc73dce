import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lorentz_nsds.geometry import ChartPoint, Curve, TangentVector, flat4, polar_metric
from lorentz_nsds.subspace import (
    PointCloud,
    SubspaceBasis,
    SubspaceError,
    basis_distance,
    canonical_basis,
    hyper_distance,
    hyper_point_distance,
    lorentz_orthonormalize,
    same_point_basis_distance,
    same_point_hyper_distance,
    vector_to_basis_distance,
)

from oracles import brute_basis_distance, brute_cloud_distance

SQ3 = math.sqrt(3.0)
G4 = flat4()
P0 = ChartPoint(0, [0.0, 0.0, 0.0, 0.0])
STILL = Curve(0, (0.0, 1.0), lambda t: np.zeros(4), lambda t: np.zeros(4))

rows4 = arrays(np.float64, st.tuples(st.integers(1, 3), st.just(4)), elements=st.floats(-2, 2))


def basis(rows, label="generic", p=P0):
    return SubspaceBasis(p, np.array(rows, dtype=float), label)


def independent(M):
    return np.linalg.svd(M, compute_uv=False)[-1] > 1e-3


def test_vector_to_basis_examples():
    e = basis([[0, 1, 0, 0]])
    assert vector_to_basis_distance(G4, STILL, TangentVector(P0, [0, 1, 0, 0]), 0.0, e, 0.0) == 0.0
    assert vector_to_basis_distance(G4, STILL, TangentVector(P0, [1, 0, 0, 0]), 0.0, e, 0.0) == 2.0
    # difference (0,0,1,1) is null
    f = basis([[0, 0, 1, 0]])
    assert vector_to_basis_distance(G4, STILL, TangentVector(P0, [0, 0, 2, 1]), 0.0, f, 0.0) == 0.0


def test_vector_off_curve_rejected():
    q = ChartPoint(0, [1.0, 0, 0, 0])
    with pytest.raises(SubspaceError):
        vector_to_basis_distance(G4, STILL, TangentVector(q, [1, 0, 0, 0]), 0.0, basis([[1, 0, 0, 0]]), 0.0)


def test_basis_distance_examples():
    a = basis([[1, 0, 0, 0]])
    b = basis([[0, 1, 0, 0]])
    assert same_point_basis_distance(G4, a, b) == 2.0
    assert same_point_basis_distance(G4, b, a) == 2.0
    assert same_point_basis_distance(G4, a, a) == 0.0


@given(rows4, rows4)
def test_basis_distance_symmetric_zero_and_matches_brute_force(A, B):
    if not (independent(A) and independent(B)):
        return
    bA, bB = basis(A), basis(B)
    d = same_point_basis_distance(G4, bA, bB)
    assert d == same_point_basis_distance(G4, bB, bA)
    assert same_point_basis_distance(G4, bA, bA) == 0.0
    assert d >= 0.0
    assert d == pytest.approx(brute_basis_distance(np.diag([1, 1, 1, -1.0]), A, B), rel=1e-12, abs=1e-12)


@given(rows4, st.randoms(use_true_random=False))
def test_vector_distance_ignores_basis_order(A, rnd):
    if not independent(A):
        return
    order = list(range(len(A)))
    rnd.shuffle(order)
    u = TangentVector(P0, [0.3, -1.0, 0.5, 2.0])
    d1 = vector_to_basis_distance(G4, STILL, u, 0.0, basis(A), 0.0)
    d2 = vector_to_basis_distance(G4, STILL, u, 0.0, basis(A).reordered(order), 0.0)
    assert d1 == d2


def test_basis_distance_transports_along_curve():
    # polar chart: the radial unit vector at theta=0 transported round a circle stays Euclidean-constant
    g = polar_metric()
    c = Curve.line(0, [1.0, 0.0], [0.0, 1.0], (0.0, math.pi / 2))
    here = SubspaceBasis(c.point(0.0), [[1.0, 0.0]])
    there = SubspaceBasis(c.point(math.pi / 2), [[0.0, -1.0]])  # Euclidean (1,0) in polar components at theta=pi/2
    assert basis_distance(g, c, here, 0.0, there, math.pi / 2) < 1e-9


def test_dependent_basis_rejected():
    with pytest.raises(SubspaceError):
        basis([[1, 0, 0, 0], [2, 0, 0, 0]])


def test_empty_basis_allowed_but_cloud_not():
    assert basis(np.zeros((0, 4))).dim == 0
    with pytest.raises(SubspaceError, match="empty"):
        PointCloud(P0, np.zeros((0, 4)))


def test_orthonormalize_examples():
    ortho = lorentz_orthonormalize(G4, basis([[1, 0, 0, 0], [0, 1, 0, 0]]))
    assert np.array_equal(ortho.matrix, [[1, 0, 0, 0], [0, 1, 0, 0]])
    assert np.array_equal(lorentz_orthonormalize(G4, basis([[2, 0, 0, 0]])).matrix, [[1, 0, 0, 0]])
    out = lorentz_orthonormalize(G4, basis([[0, 0, 0, 2], [0, 1, 0, 0]]))
    assert np.allclose(out.matrix, [[0, 0, 0, 1], [0, 1, 0, 0]])
    with pytest.raises(SubspaceError, match="subspace not orthonormalizable"):
        lorentz_orthonormalize(G4, basis([[1, 1, 1, SQ3]]))


@given(rows4)
def test_orthonormalize_output_is_orthonormal(A):
    if not independent(A):
        return
    try:
        out = lorentz_orthonormalize(G4, basis(A))
    except SubspaceError:
        return
    M = out.matrix @ np.diag([1, 1, 1, -1.0]) @ out.matrix.T
    assert np.allclose(np.abs(M), np.eye(len(A)), atol=1e-9)
    # same span
    assert np.linalg.matrix_rank(np.vstack([A, out.matrix]), tol=1e-8) == len(A)


@given(rows4)
def test_canonical_basis_is_spanning_set_independent(A):
    if not independent(A):
        return
    mix = np.random.default_rng(0).standard_normal((len(A), len(A))) + 3 * np.eye(len(A))
    b1 = canonical_basis(P0, A)
    b2 = canonical_basis(P0, mix @ A)
    assert np.linalg.matrix_rank(np.vstack([A, b1.matrix]), tol=1e-8) == len(A)
    assert np.allclose(b1.matrix, b2.matrix, atol=1e-8)


def test_hyper_point_distance_examples():
    u = TangentVector(P0, [1, 0, 0, 0])
    assert hyper_point_distance(G4, STILL, u, 0.0, PointCloud(P0, [[0, 1, 0, 0]]), 0.0) == 0.0
    assert hyper_point_distance(G4, STILL, u, 0.0, PointCloud(P0, [[1, 0, 0, 0]]), 0.0) == 1.0
    n = TangentVector(P0, [1, 1, 1, SQ3])
    assert hyper_point_distance(G4, STILL, n, 0.0, PointCloud(P0, [[1, 1, 1, SQ3]]), 0.0) < 1e-15


def test_hyper_distance_examples():
    null = PointCloud(P0, [[1, 1, 1, SQ3]])
    assert hyper_distance(G4, STILL, null, 0.0, null, 0.0) < 1e-15
    A = PointCloud(P0, [[1, 0, 0, 0], [0, 1, 0, 0]])
    B = PointCloud(P0, [[0, 0, 1, 0]])
    assert hyper_distance(G4, STILL, A, 0.0, B, 0.0) == 0.0
    u, v = PointCloud(P0, [[1, 2, 0, 1]]), PointCloud(P0, [[0, 1, 3, 2]])
    assert hyper_distance(G4, STILL, u, 0.0, v, 0.0) == abs(2.0 - 2.0)


@given(rows4, rows4)
def test_hyper_distance_symmetric_and_matches_brute_force(A, B):
    G = np.diag([1, 1, 1, -1.0])
    d = same_point_hyper_distance(G, A, B)
    assert d == same_point_hyper_distance(G, B, A)
    assert d >= 0
    assert d == pytest.approx(brute_cloud_distance(G, A, B), rel=1e-12, abs=1e-12)


@settings(max_examples=10, deadline=None)
@given(rows4)
def test_union_of_clouds(A):
    a = PointCloud(P0, A)
    both = a.union(a)
    assert len(both) == 2 * len(a)
