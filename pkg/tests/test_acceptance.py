"""End-to-end acceptance checks, one test per criterion, each at its stated tolerance."""
import dataclasses
import itertools
import json
import math
import time

import numpy as np
import pytest

from lorentz_nsds.anosov import (
    estimate_stable,
    estimate_unstable,
    estimated_splitting,
    fit_rates,
    lemma_mirror,
    splitting_continuity_test,
)
from lorentz_nsds.cli import main
from lorentz_nsds.gallery import count_clusters, cross_section, get_bundle, strand_count, unstable_leaf_curve
from lorentz_nsds.geometry import (
    ChartPoint,
    Curve,
    christoffel,
    pairing,
    polar_metric,
    sphere_metric,
    torsion_check,
    transport_matrix,
)
from lorentz_nsds.report import canonical
from lorentz_nsds.shadowing import (
    PseudoOrbitII,
    conjugacy_invariance_test,
    is_pseudo_orbit_I,
    is_pseudo_orbit_II,
    is_traced_I,
    is_traced_II,
    linear_conjugacy,
    random_pseudo_orbit_I,
    typeII_implies_typeI_test,
)
from lorentz_nsds.subspace import canonical_basis, same_point_basis_distance

from oracles import svd_stable, svd_unstable, svd_unstable_rate

SQ3 = math.sqrt(3.0)


@pytest.fixture(scope="module")
def sol():
    return get_bundle("solenoid")


def _random_curve(bundle, rng):
    """A line or circle through a sampled point that stays inside the chart."""
    i = int(rng.integers(-5, 6))
    p = bundle.sample_point(rng, i)
    m = p.dim
    if bundle.name == "warped":
        # keep the interval coordinate inside (0, 2^i)
        x = p.coords.copy()
        x[0] = 2.0 ** i * rng.uniform(0.4, 0.6)
        d = rng.standard_normal(m)
        d[0] = 0.3 * 2.0 ** i * rng.uniform(-1, 1)
        return Curve.line(i, x, d)
    if rng.random() < 0.5:
        return Curve.line(i, p.coords, rng.standard_normal(m))
    a, b = rng.choice(m, 2, replace=False)
    return Curve.circle(i, p.coords, int(a), int(b), rng.uniform(0.1, 1.0))


def test_criterion_01_transport_preserves_metric(criterion):
    rng = np.random.default_rng(1)
    bundles = [get_bundle(n) for n in ("scaled", "solenoid", "warped")]
    t0 = time.perf_counter()
    worst = 0.0
    for k in range(100):
        b = bundles[k % 3]
        # force the ODE path even though these metrics are chart-constant
        g = dataclasses.replace(b.metric, flat=False)
        c = _random_curve(b, rng)
        lo, hi = c.interval
        P = transport_matrix(g, c, lo, hi)
        v, w = rng.standard_normal((2, c.point(lo).dim))
        G0, G1 = g.at(c.point(lo)), g.at(c.point(hi))
        worst = max(worst, abs(pairing(G1, P @ v, P @ w) - pairing(G0, v, w)))
    elapsed = time.perf_counter() - t0
    ok = criterion(1, "transport preserves g", worst <= 1e-7 and elapsed < 10.0,
                   f"worst={worst:.2e} time={elapsed:.2f}s")
    assert ok


def test_criterion_02_levi_civita(criterion):
    rng = np.random.default_rng(2)
    closed = 0.0
    for r, th in zip(rng.uniform(0.3, 4.0, 20), rng.uniform(-3, 3, 20)):
        gam = christoffel(polar_metric(), ChartPoint(0, [r, th])).gamma
        closed = max(closed, abs(gam[0, 1, 1] + r), abs(gam[1, 0, 1] - 1 / r), abs(gam[1, 1, 0] - 1 / r))
    tors = max(torsion_check(polar_metric(), ChartPoint(0, [r, th]))
               for r, th in zip(rng.uniform(0.3, 4.0, 20), rng.uniform(-3, 3, 20)))
    tors = max(tors, max(torsion_check(sphere_metric(), ChartPoint(0, [a, b]))
                         for a, b in zip(rng.uniform(0.3, 2.8, 20), rng.uniform(-3, 3, 20))))
    th0 = math.pi / 4
    c = Curve.line(0, [th0, 0.0], [0.0, 1.0], (0.0, 2 * math.pi))
    w = transport_matrix(sphere_metric(), c, 0.0, 2 * math.pi) @ np.array([1.0, 0.0])
    angle = math.atan2(w[1] * math.sin(th0), w[0])
    hol = abs(angle - 2 * math.pi * (1 - math.cos(th0)))
    ok = criterion(2, "Levi-Civita correctness", closed <= 1e-8 and tors <= 1e-8 and hol <= 1e-4,
                   f"closed-form={closed:.1e} torsion={tors:.1e} holonomy={hol:.1e}")
    assert ok


def test_criterion_03_solenoid_rates(sol, criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    lam_s, lam_u, oracle_gap = [], [], 0.0
    for _ in range(5):
        p = sol.sample_point(rng, 0)
        est = estimated_splitting(sol.family, p, sol.model_splitting(p).null_dist, (2, 1), seed=int(rng.integers(1000)))
        lam_s.append(fit_rates(sol.family, sol.metric, est, 10, "stable").lam)
        lu = fit_rates(sol.family, sol.metric, est, 10, "unstable").lam
        lam_u.append(lu)
        oracle_gap = max(oracle_gap, abs(lu - svd_unstable_rate(p.coords, 10)))
    elapsed = time.perf_counter() - t0
    ok = (all(0.009 <= x <= 0.011 for x in lam_s) and all(0.2 <= x <= 0.3 for x in lam_u)
          and oracle_gap < 0.01 and elapsed < 30)
    ok = criterion(3, "solenoid rates", ok,
                   f"stable={min(lam_s):.5f}..{max(lam_s):.5f} unstable={min(lam_u):.5f}..{max(lam_u):.5f} "
                   f"svd-gap={oracle_gap:.1e} time={elapsed:.2f}s")
    assert ok


def test_criterion_04_null_distribution(sol, criterion):
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(200):
        p = sol.sample_point(rng, int(rng.integers(-10, 11)))
        v = rng.uniform(-10, 10) * sol.model_splitting(p).null_dist.matrix[0]
        worst = max(worst, abs(pairing(sol.metric.at(p), v, v)))
    ok = criterion(4, "E^n is null", worst <= 1e-12, f"max|g(v,v)|={worst:.1e}")
    assert ok


def test_criterion_05_splitting_uniqueness(sol, criterion):
    # the neutral z direction only falls behind the unstable one by 2^-n, so the distance
    # shrinks like 4^-n; past 17 the backward orbit leaves the disk in floating point
    depth = 17
    rng = np.random.default_rng(5)
    pair_u = pair_s = svd_u = svd_s = 0.0
    for _ in range(5):
        p = sol.sample_point(rng, 0)
        us = [estimate_unstable(sol.family, 0, p, depth, 1, np.random.default_rng(s)) for s in range(10)]
        ss = [estimate_stable(sol.family, 0, p, depth, 2, np.random.default_rng(s)) for s in range(10)]
        for a, b in itertools.combinations(us, 2):
            pair_u = max(pair_u, same_point_basis_distance(sol.metric, a, b))
        for a, b in itertools.combinations(ss, 2):
            pair_s = max(pair_s, same_point_basis_distance(sol.metric, a, b))
        u_ref = canonical_basis(p, svd_unstable(p.coords, depth))
        s_ref = canonical_basis(p, svd_stable(p.coords, depth))
        svd_u = max(svd_u, max(same_point_basis_distance(sol.metric, u, u_ref) for u in us))
        svd_s = max(svd_s, max(same_point_basis_distance(sol.metric, s, s_ref) for s in ss))
    ok = max(pair_u, pair_s, svd_u, svd_s) < 1e-4
    ok = criterion(5, "splitting uniqueness", ok,
                   f"pairwise u={pair_u:.1e} s={pair_s:.1e}; vs SVD u={svd_u:.1e} s={svd_s:.1e}")
    assert ok


def test_criterion_06_splitting_continuity(sol, criterion):
    p = sol.sample_point(np.random.default_rng(6), 0)
    curve = unstable_leaf_curve(sol.family, p)

    def field(q):
        return estimated_splitting(sol.family, q, sol.model_splitting(q).null_dist, (2, 1), seed=11)

    ts = [2.0 ** -n for n in range(1, 11)]
    d = splitting_continuity_test(sol.metric, field, curve, ts).unstable
    tail = d[2:]
    decreasing = all(b < a for a, b in zip(tail, tail[1:]))
    ok = criterion(6, "splitting continuity", decreasing and d[-1] < 1e-3,
                   f"d_1={d[0]:.1e} d_3={d[2]:.1e} d_10={d[-1]:.1e}")
    assert ok


def test_criterion_07_lemma_equivalence(sol, criterion):
    rng = np.random.default_rng(7)
    disagree = 0
    held = 0
    for _ in range(200):
        p = sol.sample_point(rng, 0)
        m = sol.model_splitting(p)
        kind = "stable" if rng.random() < 0.5 else "unstable"
        part = m.stable if kind == "stable" else m.unstable
        v = rng.standard_normal(part.dim) @ part.matrix
        n = int(rng.integers(1, 9))
        # constants straddle the true rates so both verdicts occur
        lam = rng.uniform(0.005, 0.02) if kind == "stable" else rng.uniform(0.15, 0.35)
        c = rng.uniform(0.5, 3.0)
        a, b = lemma_mirror(sol.family, sol.metric, p, v, n, c, lam, kind)
        disagree += a != b
        held += a
    ok = criterion(7, "forward/backward verdicts agree", disagree == 0,
                   f"disagreements={disagree}/200 (bound held in {held})")
    assert ok


def test_criterion_08_singleton_reduction(sol, criterion):
    rng = np.random.default_rng(8)
    mismatches = 0
    for _ in range(100):
        delta = rng.uniform(0.01, 1.0)
        po = random_pseudo_orbit_I(sol, rng, delta, 11)
        po2 = PseudoOrbitII.singletons(po)
        one, two = is_pseudo_orbit_I(sol.metric, sol.family, po, delta), \
            is_pseudo_orbit_II(sol.metric, sol.family, po2, delta)
        w, eps = rng.standard_normal(4), rng.uniform(0.01, 2.0)
        t1, t2 = is_traced_I(sol.metric, sol.family, po, w, eps), is_traced_II(sol.metric, sol.family, po2, w, eps)
        same = (one.passed == two.passed and np.array_equal(one.margins, two.margins)
                and t1.passed == t2.passed and np.array_equal(t1.margins, t2.margins))
        mismatches += not same
    rep = typeII_implies_typeI_test(sol, 100, 0.2, 0.5, seed=8, budget=100)
    ok = mismatches == 0 and rep.agreement_rate == 1.0 and rep.singleton_predicates_equal == 100
    ok = criterion(8, "singleton reduction", ok,
                   f"mismatches={mismatches}/100; implication {rep.type_one_confirmed}/{rep.cloud_tracer_found}")
    assert ok


def test_criterion_09_conjugacy_invariance(sol, criterion):
    ident = conjugacy_invariance_test(linear_conjugacy(sol, 1.0), [0.2], [0.5], 50, seed=9, budget=100)
    pair = linear_conjugacy(sol, 2.0)
    scaled = conjugacy_invariance_test(pair, [0.2], [0.5], 50, seed=9, budget=100)
    id_ratios = np.array(ident.margin_ratios)
    sc_ratios = np.array(scaled.margin_ratios)
    ok = (ident.agreement_rate == 1.0 and np.all(id_ratios == 1.0)
          and scaled.agreement_rate == 1.0 and np.allclose(sc_ratios, pair.pullback, rtol=1e-9))
    ok = criterion(9, "conjugacy invariance", ok,
                   f"identity agree={ident.agreement_rate:.0%} ratios={{{', '.join(map(str, set(id_ratios)))}}}; "
                   f"scale-2 agree={scaled.agreement_rate:.0%} pullback={pair.pullback:.6f} "
                   f"ratio range={sc_ratios.min():.9f}..{sc_ratios.max():.9f}")
    assert ok


def test_criterion_10_attractor_strands(criterion):
    t0 = time.perf_counter()
    counts = [strand_count(n, samples=100_000) for n in range(1, 5)]
    elapsed = time.perf_counter() - t0
    # sibling strands sit closer than 0.05 from depth 2 on, so a fixed gap merges them
    fixed = [count_clusters(cross_section(n, 100_000), 0.05) for n in range(1, 5)]
    ok = criterion(10, "2^n strands in the angle-0 slice", counts == [2, 4, 8, 16] and elapsed < 20,
                   f"counts={counts} (gap 0.05*10^(1-n)) time={elapsed:.2f}s; fixed gap 0.05 gives {fixed}")
    assert ok


def test_criterion_11_determinism(capsys, criterion):
    args = ["verify-family", "--example", "solenoid", "--seed", "7"]
    runs = []
    for _ in range(2):
        code = main(args)
        runs.append((code, canonical(json.loads(capsys.readouterr().out))))
    ok = criterion(11, "deterministic verify-family report", runs[0] == runs[1] and runs[0][0] == 0,
                   f"exit codes {runs[0][0]}, {runs[1][0]}")
    assert ok
