import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lorentz_nsds.anosov import check_invariance, fit_rates
from lorentz_nsds.gallery import (
    ExampleError,
    attractor_approx,
    count_clusters,
    cross_section,
    get_bundle,
    iterate_solenoid,
    make_scaled,
    make_warped,
    solenoid_inverse,
    solenoid_map,
    strand_count,
    strand_gap,
    unstable_leaf_curve,
)
from lorentz_nsds.geometry import ChartPoint, TangentVector, causal_classify, pairing
from lorentz_nsds.subspace import SubspaceBasis

from oracles import linkage_clusters, solenoid_step

SQ3 = math.sqrt(3.0)


def test_scaled_metric_examples():
    b = make_scaled(alpha=2.0)
    G0 = np.diag([1.0, 1.0, 1.0, -1.0])
    p0 = ChartPoint(0, np.zeros(4))
    assert np.allclose(b.metric.at(p0), G0, atol=1e-15)
    G3 = b.metric.at(ChartPoint(3, np.zeros(4)))
    assert pairing(G3, [1, 0, 0, 0], [1, 0, 0, 0]) == pytest.approx(0.125, rel=1e-12)
    assert pairing(G3, [0, 1, 0, 0], [0, 1, 0, 0]) == pytest.approx(8.0, rel=1e-12)
    assert pairing(G3, [0, 0, 1, 1], [0, 0, 1, 1]) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ExampleError, match="alpha"):
        make_scaled(alpha=1.0)


@given(alpha=st.floats(1.1, 4.0), i=st.integers(-6, 6))
def test_scaled_stable_unstable_product_is_index_free(alpha, i):
    b = make_scaled(alpha=alpha)
    s, u = np.array([1.0, 0, 0, 0]), np.array([0, 1.0, 0, 0])
    Gi = b.metric.at(ChartPoint(i, np.zeros(4)))
    G0 = b.metric.at(ChartPoint(0, np.zeros(4)))
    assert pairing(Gi, s, s) * pairing(Gi, u, u) == pytest.approx(pairing(G0, s, s) * pairing(G0, u, u), rel=1e-12)


def test_scaled_signature_and_invariance():
    b = make_scaled(alpha=3.0)
    rng = np.random.default_rng(0)
    for i in range(-5, 6):
        p = b.sample_point(rng, i)
        assert b.metric.is_lorentzian(p)
        assert check_invariance(b.family, b.model_splitting, p) == 0.0


def test_solenoid_map_examples():
    assert np.allclose(solenoid_map(0.0, 0.0, 0.0), (0.0, 0.1, 0.0))
    th, u, v = solenoid_map(math.pi, 0.5, 0.0)
    assert th == pytest.approx(0.0, abs=1e-12) and u == pytest.approx(-0.05) and v == pytest.approx(0.0, abs=1e-16)
    with pytest.raises(ExampleError, match="outside the solid torus"):
        solenoid_map(0.0, 1.0, 0.5)


@given(st.floats(0, 2 * math.pi, exclude_max=True), st.floats(0, 1), st.floats(0, 2 * math.pi))
def test_solenoid_image_radius_and_inverse(th, r, phi):
    u, v = r * math.cos(phi), r * math.sin(phi)
    t2, u2, v2 = solenoid_map(th, u, v)
    assert math.hypot(u2, v2) <= 0.2 + 1e-15
    assert np.allclose(solenoid_step([th, u, v, 0])[:3], [t2, u2, v2], atol=1e-15)
    back = solenoid_inverse(t2, u2, v2)
    assert math.remainder(back[0] - th, 2 * math.pi) == pytest.approx(0.0, abs=1e-9)
    assert back[1] == pytest.approx(u, abs=1e-9) and back[2] == pytest.approx(v, abs=1e-9)


def test_solenoid_causal_characters():
    b = get_bundle("solenoid")
    p = b.sample_point(np.random.default_rng(0), 0)
    assert causal_classify(b.metric, TangentVector(p, [1, 1, 1, SQ3])) == "null"
    assert causal_classify(b.metric, TangentVector(p, [0, 0, 0, 1])) == "timelike"
    assert b.metric.is_lorentzian(p)
    est = fit_rates(b.family, b.metric, b.model_splitting(p), 8)
    assert est.lam < 0.05


def test_attractor_approx():
    base = attractor_approx(0, 200, seed=1)
    assert np.all(base.points[:, 1] ** 2 + base.points[:, 2] ** 2 <= 1.0)
    deep = attractor_approx(2, 300, seed=1)
    assert deep.check()
    # random points of N are typically not in f^2(N)
    assert not type(deep)(2, base.points).check()
    with pytest.raises(ExampleError):
        attractor_approx(-1, 10)


def test_cross_section_depth_two_has_four_clusters():
    # strands of depth 2 are 0.02 apart, so points are refined to depth 5 and the gap scaled down
    pts = cross_section(5, 4000, seed=3)
    assert count_clusters(pts, strand_gap(2)) == 4
    assert linkage_clusters(pts[:1500], strand_gap(2)) == 4


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10 ** 6), n=st.integers(1, 120), gap=st.floats(0.01, 0.5))
def test_count_clusters_matches_single_linkage(seed, n, gap):
    rng = np.random.default_rng(seed)
    centres = rng.uniform(-1, 1, (4, 2))
    pts = centres[rng.integers(0, 4, n)] + 0.05 * rng.standard_normal((n, 2))
    assert count_clusters(pts, gap) == linkage_clusters(pts, gap)


def test_count_clusters_degenerate_inputs():
    assert count_clusters(np.zeros((0, 2)), 0.1) == 0
    assert count_clusters(np.array([[0.0, 0.0], [0.0, 0.0]]), 0.1) == 1
    line = np.column_stack([np.array([0.0, 0.05, 0.1, 1.0, 1.02]), np.zeros(5)])
    assert count_clusters(line, 0.08) == linkage_clusters(line, 0.08) == 2


@pytest.mark.parametrize("n", [1, 2, 3])
def test_strand_doubling(n):
    assert strand_count(n, samples=20_000) == 2 ** n


def test_leaf_curve_starts_at_point_and_is_tangent_to_unstable():
    b = get_bundle("solenoid")
    p = b.sample_point(np.random.default_rng(4), 0)
    c = unstable_leaf_curve(b.family, p)
    assert c.point(0.0).close_to(p, atol=1e-9)
    assert c.velocity_error(np.linspace(-0.5, 0.5, 5)) < 1e-4
    u = b.model_splitting(p).unstable.matrix[0]
    w = c.velocity(0.0)
    assert abs(np.cross(u[:3], w[:3])).max() <= 1e-8 * np.linalg.norm(w)


def test_iterate_solenoid_rejects_points_outside():
    with pytest.raises(ExampleError):
        iterate_solenoid(np.array([[0.0, 2.0, 0.0]]), 1)


def test_warped_examples():
    b = make_warped(d=0.5)
    y = b.family.f(0, [0.3, 0.7, -0.2])
    assert y[0] == 0.6 and 0 < y[0] < 2
    for i in (-2, 0, 3):
        p = b.sample_point(np.random.default_rng(i + 5), i)
        assert pairing(b.metric.at(p), [1, 0, 0], [1, 0, 0]) == -1.0
        assert b.metric.is_lorentzian(p)
        n = b.model_splitting(p).null_dist.matrix[0]
        measured = pairing(b.metric.at(p), n, n)
        assert measured == pytest.approx(-0.25 ** abs(i) + 0.5 ** abs(i), abs=1e-15)
    with pytest.raises(ExampleError, match=r"d outside \(0,1\)"):
        make_warped(d=1.5)
    with pytest.raises(ExampleError, match="outside I_0"):
        b.family.f(0, [1.5, 0, 0])


def test_warped_rotation_changes_stable_behaviour():
    b = make_warped(d=0.5, h_spec="rotation", angle=0.3)
    p = b.sample_point(np.random.default_rng(1), 0)
    assert check_invariance(b.family, b.model_splitting, p) > 1e-3
    with pytest.raises(ExampleError):
        make_warped(h_spec="shear")


def test_get_bundle():
    assert get_bundle("warped", d=0.25).params["d"] == 0.25
    with pytest.raises(KeyError, match="unknown example"):
        get_bundle("torus")


def test_splitting_basis_labels():
    b = get_bundle("solenoid")
    s = b.model_splitting(b.sample_point(np.random.default_rng(0), 0))
    assert isinstance(s.unstable, SubspaceBasis)
    assert (s.stable.label, s.unstable.label, s.null_dist.label) == ("stable", "unstable", "null")
