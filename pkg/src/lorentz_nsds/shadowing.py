"""Pseudo-orbits and tracing for tangent vectors (type I) and finite clouds (type II).

Closeness is measured by the metric pairing |g(x, y)|, not by |g(x - y, x - y)|:
a sequence ``v_k`` along an anchor orbit ``p_k`` is a delta-pseudo orbit when
``|g_{k+1}(Df_k v_k, v_{k+1})| < delta`` for every consecutive pair, and is
epsilon-traced by ``w`` at the anchor start when
``|g(DF^n w, v_n)| < epsilon`` for every n in the window. Passing
``semantics="difference"`` swaps in |g(x - y, x - y)| for comparison runs.

Type-I predicates and their singleton-cloud type-II analogues go through the
same Jacobian products and the same symmetric pairing, so on singleton clouds
they agree bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .gallery import ExampleBundle
from .geometry import ChartPoint, GeometryError, MetricField, TangentVector, pairing
from .nsds import FamilyMap, OrbitSegment, orbit_segment
from .subspace import PointCloud

DEFAULT_BUDGET = 2000
DEFAULT_LENGTH = 21
RELATION_TOL = 1e-8


class ShadowingError(GeometryError):
    pass


class ConjugacyError(ValueError):
    pass


def _closeness(G: np.ndarray, x: np.ndarray, y: np.ndarray, semantics: str) -> float:
    if semantics == "pairing":
        return abs(pairing(G, x, y))
    if semantics == "difference":
        d = x - y
        return abs(pairing(G, d, d))
    raise ValueError(f"unknown semantics {semantics!r}")


@dataclass(frozen=True, eq=False)
class PseudoOrbitI:
    """Vectors ``v_k`` at the anchor points ``p_k``, one per index of the anchor segment."""

    anchor: OrbitSegment
    vectors: np.ndarray

    def __post_init__(self):
        V = np.array(self.vectors, dtype=float)
        if V.shape != (len(self.anchor.points), self.anchor.points[0].dim):
            raise ShadowingError(f"need one vector per anchor point, got array of shape {V.shape}")
        V.setflags(write=False)
        object.__setattr__(self, "vectors", V)

    @property
    def start(self) -> int:
        return self.anchor.start

    def __len__(self):
        return len(self.anchor.points)

    def vector(self, k: int) -> TangentVector:
        return TangentVector(self.anchor.at(k), self.vectors[k - self.start])

    def scaled(self, s: float) -> "PseudoOrbitI":
        return PseudoOrbitI(self.anchor, s * self.vectors)


@dataclass(frozen=True, eq=False)
class PseudoOrbitII:
    anchor: OrbitSegment
    clouds: tuple

    def __post_init__(self):
        if len(self.clouds) != len(self.anchor.points):
            raise ShadowingError("need one cloud per anchor point")
        clouds = []
        for p, c in zip(self.anchor.points, self.clouds):
            arr = c.matrix if isinstance(c, PointCloud) else PointCloud(p, c).matrix
            clouds.append(arr)
        object.__setattr__(self, "clouds", tuple(clouds))

    @classmethod
    def singletons(cls, po: PseudoOrbitI) -> "PseudoOrbitII":
        return cls(po.anchor, tuple(v[None, :] for v in po.vectors))

    @property
    def start(self) -> int:
        return self.anchor.start

    def __len__(self):
        return len(self.anchor.points)


@dataclass
class PredicateResult:
    passed: bool
    worst: float
    margins: np.ndarray
    degenerate: bool = False


@dataclass
class TraceResult:
    found: bool
    tracer: Optional[np.ndarray]
    worst_margin: float
    search_stats: dict = field(default_factory=dict)


class _Anchor:
    """Metric matrices, step Jacobians and cumulative Jacobians along an anchor orbit."""

    def __init__(self, g: MetricField, F: FamilyMap, anchor: OrbitSegment, check: bool = True):
        if check:
            try:
                anchor.check(F)
            except GeometryError as exc:
                raise ShadowingError(f"anchor is not an orbit of {F.name}: {exc}") from exc
        self.points = anchor.points
        self.G = [g.at(p) for p in anchor.points]
        self.steps = [F.df(p.component, p.coords) for p in anchor.points[:-1]]
        cum = [np.eye(anchor.points[0].dim)]
        for D in self.steps:
            cum.append(D @ cum[-1])
        self.cumulative = cum


def _strict(values: np.ndarray, bound: float) -> PredicateResult:
    worst = float(values.max()) if len(values) else 0.0
    return PredicateResult(bool(np.all(values < bound)), worst, values)


def pseudo_orbit_margins_I(g: MetricField, F: FamilyMap, po: PseudoOrbitI, semantics: str = "pairing",
                           _anchor: Optional[_Anchor] = None) -> np.ndarray:
    a = _anchor or _Anchor(g, F, po.anchor)
    V = po.vectors
    return np.array([
        _closeness(a.G[k + 1], a.steps[k] @ V[k], V[k + 1], semantics) for k in range(len(V) - 1)
    ])


def is_pseudo_orbit_I(g: MetricField, F: FamilyMap, po: PseudoOrbitI, delta: float,
                      semantics: str = "pairing") -> PredicateResult:
    return _strict(pseudo_orbit_margins_I(g, F, po, semantics), delta)


def tracing_margins_I(g: MetricField, F: FamilyMap, po: PseudoOrbitI, w: np.ndarray, semantics: str = "pairing",
                      _anchor: Optional[_Anchor] = None) -> np.ndarray:
    """``|g(DF^n w, v_{start+n})|`` for n = 0 .. len(po) - 1, with ``w`` at the anchor start."""
    a = _anchor or _Anchor(g, F, po.anchor)
    w = np.asarray(w, dtype=float)
    return np.array([
        _closeness(a.G[n], a.cumulative[n] @ w, po.vectors[n], semantics) for n in range(len(po))
    ])


def is_traced_I(g: MetricField, F: FamilyMap, po: PseudoOrbitI, w, eps: float,
                semantics: str = "pairing") -> PredicateResult:
    """Tracing check; ``degenerate`` flags the zero tracer, which traces everything under the pairing form."""
    w = w.components if isinstance(w, TangentVector) else np.asarray(w, dtype=float)
    res = _strict(tracing_margins_I(g, F, po, w, semantics), eps)
    res.degenerate = not np.any(w)
    return res


def _unit(x: np.ndarray) -> Optional[np.ndarray]:
    n = np.linalg.norm(x)
    return x / n if n > 0 else None


def _constraint_rows(a: _Anchor, targets: Sequence[np.ndarray]) -> np.ndarray:
    """Rows ``r`` with ``r . w = g(DF^n w, v)`` for every target vector ``v`` at index n."""
    rows = []
    for n, V in enumerate(targets):
        for v in np.atleast_2d(V):
            rows.append(a.cumulative[n].T @ (a.G[n] @ v))
    return np.array(rows)


def _candidates(a: _Anchor, targets: Sequence[np.ndarray], first: np.ndarray, budget: int,
                rng: np.random.Generator):
    """Unit-norm tracer candidates: least-squares/null directions, the first vector, then random."""
    m = first.shape[-1]
    A = _constraint_rows(a, targets)
    _, s, Vt = np.linalg.svd(A)
    rank = int(np.sum(s > 1e-12 * max(s.max(initial=0.0), 1.0)))
    seeded = [("least_squares", Vt[k]) for k in range(m - 1, rank - 1, -1)] if rank < m else []
    seeded.append(("least_squares", Vt[-1]))
    for v in np.atleast_2d(first):
        u = _unit(v)
        if u is not None:
            seeded.append(("seed", u))
    yielded = 0
    for kind, c in seeded:
        if yielded >= budget:
            return
        yielded += 1
        yield kind, c
    while yielded < budget:
        yielded += 1
        yield "random", _unit(rng.standard_normal(m))


def find_tracer_I(g: MetricField, F: FamilyMap, po: PseudoOrbitI, eps: float, budget: int = DEFAULT_BUDGET,
                  rng: Optional[np.random.Generator] = None, semantics: str = "pairing") -> TraceResult:
    """Search unit-norm tracers; the zero vector is excluded since it traces every sequence."""
    if budget < 1:
        raise ValueError("budget must be at least 1")
    rng = np.random.default_rng(0) if rng is None else rng
    a = _Anchor(g, F, po.anchor)
    best, best_w = math.inf, None
    tried = 0
    for kind, w in _candidates(a, list(po.vectors), po.vectors[0], budget, rng):
        tried += 1
        margin = float(tracing_margins_I(g, F, po, w, semantics, a).max())
        if margin < best:
            best, best_w = margin, w
        if margin < eps:
            return TraceResult(True, w, margin, {"tried": tried, "source": kind})
    return TraceResult(False, best_w, best, {"tried": tried})


# ---------------------------------------------------------------- hyperspace (type II)

def induced_map(F: FamilyMap, i: int, K: PointCloud) -> PointCloud:
    """Elementwise pushforward of a cloud at ``p`` in ``M_i`` to ``f_i(p)``."""
    if K.base.component != i:
        raise ShadowingError(f"cloud lives in M_{K.base.component}, expected M_{i}")
    D = F.df(i, K.base.coords)
    q = ChartPoint(i + 1, F.f(i, K.base.coords))
    return PointCloud(q, np.array([D @ v for v in K.matrix]))


def _cloud_closeness(G: np.ndarray, A: np.ndarray, B: np.ndarray, semantics: str) -> float:
    one = max(min(_closeness(G, u, v, semantics) for v in B) for u in A)
    two = max(min(_closeness(G, v, u, semantics) for u in A) for v in B)
    return max(one, two)


def pseudo_orbit_margins_II(g: MetricField, F: FamilyMap, po: PseudoOrbitII, semantics: str = "pairing",
                            _anchor: Optional[_Anchor] = None) -> np.ndarray:
    a = _anchor or _Anchor(g, F, po.anchor)
    C = po.clouds
    out = []
    for k in range(len(C) - 1):
        pushed = np.array([a.steps[k] @ v for v in C[k]])
        out.append(_cloud_closeness(a.G[k + 1], pushed, C[k + 1], semantics))
    return np.array(out)


def is_pseudo_orbit_II(g: MetricField, F: FamilyMap, po: PseudoOrbitII, delta: float,
                       semantics: str = "pairing") -> PredicateResult:
    return _strict(pseudo_orbit_margins_II(g, F, po, semantics), delta)


def tracing_margins_II(g: MetricField, F: FamilyMap, po: PseudoOrbitII, W: np.ndarray, semantics: str = "pairing",
                       _anchor: Optional[_Anchor] = None) -> np.ndarray:
    a = _anchor or _Anchor(g, F, po.anchor)
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if W.shape[0] == 0:
        raise ShadowingError("empty tracer cloud")
    out = []
    for n in range(len(po)):
        pushed = np.array([a.cumulative[n] @ w for w in W])
        out.append(_cloud_closeness(a.G[n], pushed, po.clouds[n], semantics))
    return np.array(out)


def is_traced_II(g: MetricField, F: FamilyMap, po: PseudoOrbitII, W, eps: float,
                 semantics: str = "pairing") -> PredicateResult:
    W = W.matrix if isinstance(W, PointCloud) else W
    return _strict(tracing_margins_II(g, F, po, W, semantics), eps)


def find_tracer_II(g: MetricField, F: FamilyMap, po: PseudoOrbitII, eps: float, budget: int = DEFAULT_BUDGET,
                   rng: Optional[np.random.Generator] = None, semantics: str = "pairing") -> TraceResult:
    """Search tracer clouds: singletons of the type-I candidates, then random subsets of the first cloud."""
    if budget < 1:
        raise ValueError("budget must be at least 1")
    rng = np.random.default_rng(0) if rng is None else rng
    a = _Anchor(g, F, po.anchor)
    best, best_W = math.inf, None
    tried = 0
    n_single = max(1, budget // 2)
    for kind, w in _candidates(a, list(po.clouds), po.clouds[0], n_single, rng):
        tried += 1
        W = w[None, :]
        margin = float(tracing_margins_II(g, F, po, W, semantics, a).max())
        if margin < best:
            best, best_W = margin, W
        if margin < eps:
            return TraceResult(True, W, margin, {"tried": tried, "source": kind})
    first = po.clouds[0]
    while tried < budget:
        tried += 1
        size = int(rng.integers(1, len(first) + 1))
        W = first[rng.choice(len(first), size=size, replace=False)]
        margin = float(tracing_margins_II(g, F, po, W, semantics, a).max())
        if margin < best:
            best, best_W = margin, W
        if margin < eps:
            return TraceResult(True, W, margin, {"tried": tried, "source": "subsample"})
    return TraceResult(False, best_W, best, {"tried": tried})


# ---------------------------------------------------------------- generators

def anchor_for(bundle: ExampleBundle, rng: np.random.Generator, length: int = DEFAULT_LENGTH,
               start: Optional[int] = None) -> OrbitSegment:
    """Genuine orbit segment of ``length`` points, by default centred in the window."""
    a, b = bundle.window
    if start is None:
        start = max(a, min(-(length // 2), b - length + 1))
    if start < a or start + length - 1 > b:
        raise ShadowingError(f"segment [{start}, {start + length - 1}] does not fit in window {bundle.window}")
    p = bundle.sample_point(rng, start)
    return orbit_segment(bundle.family, start, length - 1, p)


def random_pseudo_orbit_I(bundle: ExampleBundle, rng: np.random.Generator, delta: float,
                          length: int = DEFAULT_LENGTH, start: Optional[int] = None) -> PseudoOrbitI:
    """A delta-pseudo orbit built step by step: each ``v_{k+1}`` is a random unit-ish vector
    adjusted so that its pairing with ``Df_k v_k`` is a prescribed value below ``delta``."""
    anchor = anchor_for(bundle, rng, length, start)
    g, F = bundle.metric, bundle.family
    m = anchor.points[0].dim
    V = [_unit(rng.standard_normal(m))]
    for k in range(length - 1):
        p, q = anchor.points[k], anchor.points[k + 1]
        x = F.df(p.component, p.coords) @ V[-1]
        G = g.at(q)
        r = _unit(rng.standard_normal(m))
        y = G @ x
        target = delta * rng.uniform(-0.9, 0.9)
        denom = pairing(G, x, y)
        if denom > 0:
            r = r + (target - pairing(G, x, r)) / denom * y
        V.append(r)
    return PseudoOrbitI(anchor, np.array(V))


def null_pseudo_orbit_I(bundle: ExampleBundle, rng: np.random.Generator, length: int = DEFAULT_LENGTH,
                        start: Optional[int] = None) -> PseudoOrbitI:
    """Random positive multiples of the model null direction along an orbit."""
    anchor = anchor_for(bundle, rng, length, start)
    V = []
    for p in anchor.points:
        n = bundle.model_splitting(p).null_dist.matrix[0]
        V.append(rng.uniform(0.5, 2.0) * n)
    return PseudoOrbitI(anchor, np.array(V))


# ---------------------------------------------------------------- conjugacy

@dataclass(frozen=True)
class ConjugacyPair:
    """Homeomorphisms ``h_i: M_i -> M~_i`` with ``h_{i+1} o f_i = f~_i o h_i``.

    ``dh(i, x)`` is the derivative of ``h_i`` at ``x`` and moves tangent
    vectors. ``pullback`` is the sampled ratio ``g~(Dh u, Dh v) / g(u, v)``;
    a single constant (conformal ``Dh``) is what makes the modulus of
    continuity ``eps -> pullback * eps`` uniform.
    """

    source: ExampleBundle
    target: ExampleBundle
    h: Callable[[int, np.ndarray], np.ndarray]
    h_inv: Callable[[int, np.ndarray], np.ndarray]
    dh: Callable[[int, np.ndarray], np.ndarray]
    dh_inv: Callable[[int, np.ndarray], np.ndarray]
    pullback: float = 1.0
    residual: float = 0.0
    moduli: tuple = ()

    def modulus(self, eps: float) -> float:
        return self.pullback * eps

    def inverse(self) -> "ConjugacyPair":
        return ConjugacyPair(self.target, self.source, self.h_inv, self.h, self.dh_inv, self.dh,
                             1.0 / self.pullback, self.residual,
                             tuple((self.pullback * e, e) for e, _ in self.moduli))


def make_conjugacy(source: ExampleBundle, target: ExampleBundle, h, h_inv, dh, dh_inv,
                   samples: int = 50, seed: int = 0, tol: float = RELATION_TOL,
                   eps_grid: Sequence[float] = (1e-3, 1e-2, 1e-1)) -> ConjugacyPair:
    """Validate the conjugacy relation on sampled points and tabulate the pullback factor.

    Raises ``ConjugacyError`` when the relation residual exceeds ``tol`` or the
    pullback ratio is not constant across samples.
    """
    rng = np.random.default_rng(seed)
    a, b = source.window
    F, Ft = source.family, target.family
    worst = 0.0
    ratios = []
    for _ in range(samples):
        i = int(rng.integers(a, b))
        p = source.sample_point(rng, i)
        x = p.coords
        lhs = np.asarray(h(i + 1, F.f(i, x)))
        rhs = Ft.f(i, np.asarray(h(i, x)))
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
        u, v = rng.standard_normal((2, p.dim))
        D = dh(i, x)
        base = pairing(source.metric.at(p), u, v)
        mapped = pairing(target.metric.at(ChartPoint(i, h(i, x))), D @ u, D @ v)
        if abs(base) > 1e-6:
            ratios.append(mapped / base)
    if worst > tol:
        raise ConjugacyError(f"conjugacy relation residual {worst:.3e} exceeds {tol:.0e}")
    ratios = np.array(ratios)
    k = float(np.median(ratios)) if len(ratios) else 1.0
    if len(ratios) and np.max(np.abs(ratios - k)) > 1e-8 * max(1.0, abs(k)):
        raise ConjugacyError("derivative of h does not scale the metric pairing by a constant factor")
    return ConjugacyPair(source, target, h, h_inv, dh, dh_inv, abs(k), worst,
                         tuple((e, abs(k) * e) for e in eps_grid))


def rescaled_bundle(bundle: ExampleBundle, s: float) -> ExampleBundle:
    """Copy of ``bundle`` in coordinates multiplied by ``s``: ``f~_i(y) = s f_i(y / s)``, same metric matrix."""
    F = bundle.family
    Ft = FamilyMap(
        F.window,
        lambda i, y: s * F.f(i, np.asarray(y) / s),
        lambda i, y: s * F.f_inv(i, np.asarray(y) / s),
        lambda i, y: F.df(i, np.asarray(y) / s),
        name=f"{F.name}*{s:g}",
    )
    g = bundle.metric
    metric = MetricField(lambda i, y: g.matrix(i, np.asarray(y) / s), None, name=f"{g.name}*{s:g}", flat=g.flat)

    def splitting(p: ChartPoint):
        from .anosov import Splitting
        from .subspace import SubspaceBasis
        src = bundle.model_splitting(ChartPoint(p.component, p.coords / s))
        return Splitting(p, SubspaceBasis(p, src.stable.matrix, "stable"),
                         SubspaceBasis(p, src.unstable.matrix, "unstable"),
                         SubspaceBasis(p, src.null_dist.matrix, "null"))

    def sampler(rng, i):
        p = bundle.sample_point(rng, i)
        return ChartPoint(i, s * p.coords)

    return ExampleBundle(f"{bundle.name}*{s:g}", Ft, metric, splitting, sampler, {**bundle.params, "scale": s})


def linear_conjugacy(bundle: ExampleBundle, s: float, **kw) -> ConjugacyPair:
    """``h_i(x) = s x`` between ``bundle`` and its rescaled copy; pullback factor ``s**2``."""
    target = bundle if s == 1.0 else rescaled_bundle(bundle, s)
    m = bundle.sample_point(np.random.default_rng(0), bundle.window[0]).dim
    D = s * np.eye(m)
    Dinv = np.eye(m) / s
    return make_conjugacy(bundle, target, lambda i, x: s * np.asarray(x), lambda i, y: np.asarray(y) / s,
                          lambda i, x: D, lambda i, y: Dinv, **kw)


def conjugate_family(pair: ConjugacyPair, po: PseudoOrbitI) -> PseudoOrbitI:
    """Move a pseudo-orbit across the conjugacy: points by ``h_k``, vectors by ``Dh_k``."""
    pts = []
    vecs = []
    for p, v in zip(po.anchor.points, po.vectors):
        D = pair.dh(p.component, p.coords)
        if abs(np.linalg.det(D)) <= 1e-14:
            raise ConjugacyError(f"h_{p.component} is not invertible at {p!r}")
        pts.append(ChartPoint(p.component, pair.h(p.component, p.coords)))
        vecs.append(D @ v)
    return PseudoOrbitI(OrbitSegment(po.start, tuple(pts)), np.array(vecs))


@dataclass
class ConjugacyReport:
    trials: int
    agreements: int
    disagreements: int
    margin_ratios: list
    records: list

    @property
    def agreement_rate(self) -> float:
        total = self.agreements + self.disagreements
        return self.agreements / total if total else 1.0


def conjugacy_invariance_test(pair: ConjugacyPair, deltas: Sequence[float], epsilons: Sequence[float],
                              trials: int, seed: int = 0, budget: int = 200,
                              length: int = DEFAULT_LENGTH) -> ConjugacyReport:
    """Compare pseudo-orbit and tracing verdicts in the source with the transported ones in the target.

    For each trial pseudo-orbit of the source and each (delta, epsilon): the
    source verdicts use (delta, epsilon); the target verdicts use the moduli
    (pullback * delta, pullback * epsilon) and are recomputed directly on the
    transported objects.
    """
    agree = disagree = 0
    ratios = []
    records = []
    src, tgt = pair.source, pair.target
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        po = random_pseudo_orbit_I(src, rng, max(deltas), length)
        po_t = conjugate_family(pair, po)
        a_s = pseudo_orbit_margins_I(src.metric, src.family, po)
        a_t = pseudo_orbit_margins_I(tgt.metric, tgt.family, po_t)
        for delta in deltas:
            for eps in epsilons:
                is_po_s = bool(np.all(a_s < delta))
                is_po_t = bool(np.all(a_t < pair.modulus(delta)))
                tr = find_tracer_I(src.metric, src.family, po, eps, budget, np.random.default_rng([seed, t, 1]))
                if tr.found:
                    w_t = pair.dh(po.anchor.points[0].component, po.anchor.points[0].coords) @ tr.tracer
                    chk = is_traced_I(tgt.metric, tgt.family, po_t, w_t, pair.modulus(eps))
                    traced_t = chk.passed
                    if tr.worst_margin > 0:
                        ratios.append(chk.worst / tr.worst_margin)
                else:
                    traced_t = False
                ok = (is_po_s == is_po_t) and (tr.found == traced_t)
                agree += ok
                disagree += not ok
                records.append({"trial": t, "delta": delta, "epsilon": eps, "pseudo_orbit": is_po_s,
                                "traced": tr.found, "agree": ok})
    return ConjugacyReport(trials, agree, disagree, ratios, records)


@dataclass
class ImplicationReport:
    trials: int
    cloud_tracer_found: int
    type_one_confirmed: int
    singleton_predicates_equal: int

    @property
    def agreement_rate(self) -> float:
        return self.type_one_confirmed / self.cloud_tracer_found if self.cloud_tracer_found else 1.0


def typeII_implies_typeI_test(bundle: ExampleBundle, trials: int, delta: float, eps: float, seed: int = 0,
                              budget: int = 200, length: int = DEFAULT_LENGTH,
                              generator: str = "random") -> ImplicationReport:
    """Wrap type-I pseudo-orbits as singleton clouds, search cloud tracers, confirm a member traces.

    ``generator`` is ``"random"`` (delta-pseudo orbits by construction) or
    ``"null"`` (multiples of the model null direction).
    """
    g, F = bundle.metric, bundle.family
    found = confirmed = equal = 0
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        po = null_pseudo_orbit_I(bundle, rng, length) if generator == "null" else \
            random_pseudo_orbit_I(bundle, rng, delta, length)
        po2 = PseudoOrbitII.singletons(po)
        one = is_pseudo_orbit_I(g, F, po, delta)
        two = is_pseudo_orbit_II(g, F, po2, delta)
        equal += (one.passed == two.passed) and np.array_equal(one.margins, two.margins)
        res = find_tracer_II(g, F, po2, eps, budget, np.random.default_rng([seed, t, 2]))
        if res.found:
            found += 1
            confirmed += any(is_traced_I(g, F, po, w, eps).passed for w in res.tracer)
    return ImplicationReport(trials, found, confirmed, equal)
