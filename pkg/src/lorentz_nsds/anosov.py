"""Numerical checks of the Lorentzian Anosov-family conditions and splitting estimation.

The conditions are checked on finite samples: finitely many points, basis
vectors and iterates ``1 <= n <= N``. Inequalities carry a small slack
(absolute 1e-9 plus relative 1e-6) to absorb rounding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .geometry import TOL_NULL, ChartPoint, Curve, GeometryError, MetricField, pairing
from .nsds import FamilyMap, compose, jacobian_chain, jacobian_sequence, orbit
from .report import CheckEntry, VerificationReport
from .subspace import SubspaceBasis, basis_distance, canonical_basis

SLACK_ABS = 1e-9
SLACK_REL = 1e-6
NOISE_FLOOR = 1e-20
RANK_TOL = 1e-14


class SplittingError(GeometryError):
    pass


class PreconditionError(ValueError):
    pass


class RateFitError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Splitting:
    """``T_p M = E^s + E^u + E^n`` at one point, each part given by a basis."""

    base: ChartPoint
    stable: SubspaceBasis
    unstable: SubspaceBasis
    null_dist: SubspaceBasis

    def __post_init__(self):
        for part in (self.stable, self.unstable, self.null_dist):
            if not part.base.close_to(self.base, atol=1e-9):
                raise SplittingError("all parts of a splitting must live at its base point")
        m = self.base.dim
        dims = (self.stable.dim, self.unstable.dim, self.null_dist.dim)
        if sum(dims) != m:
            raise SplittingError(f"dimensions {dims} do not add up to {m}")
        stacked = self.all_vectors()
        if np.linalg.matrix_rank(stacked, tol=1e-10 * max(1.0, np.abs(stacked).max())) != m:
            raise SplittingError("stable, unstable and null parts do not form a direct sum")

    def all_vectors(self) -> np.ndarray:
        return np.vstack([self.stable.matrix, self.unstable.matrix, self.null_dist.matrix])

    def causal_violations(self, g: MetricField, tol_null: float = TOL_NULL) -> list[str]:
        """Diagnostics for the causal-character requirements, empty when they hold.

        Null part: every basis vector and every combination must be null, i.e.
        the restricted form vanishes. Stable/unstable parts: the restricted
        form must be definite (otherwise the part contains a null vector).
        """
        G = g.at(self.base)
        out = []
        N = self.null_dist.matrix
        if N.shape[0]:
            R = N @ G @ N.T
            if np.max(np.abs(R)) > tol_null:
                out.append(f"null part is not null: max |g| = {np.max(np.abs(R)):.3e}")
        for name, part in (("stable", self.stable), ("unstable", self.unstable)):
            B = part.matrix
            if B.shape[0] == 0:
                continue
            B = B / np.linalg.norm(B, axis=1, keepdims=True)
            w = np.linalg.eigvalsh(0.5 * (B @ G @ B.T + (B @ G @ B.T).T))
            if not (np.all(w > tol_null) or np.all(w < -tol_null)):
                out.append(f"{name} part contains a null vector: restricted eigenvalues {np.round(w, 12)}")
        return out


SplittingField = Callable[[ChartPoint], Splitting]


@dataclass(frozen=True)
class RateEstimate:
    c: float
    lam: float
    residual: float

    def __post_init__(self):
        if not (0.0 < self.lam < 1.0) or not self.c > 0.0:
            raise RateFitError(f"no valid (c, lambda): c={self.c}, lambda={self.lam}")


def leq(lhs: float, rhs: float, slack_abs: float = SLACK_ABS, slack_rel: float = SLACK_REL) -> bool:
    return bool(lhs <= rhs * (1.0 + slack_rel) + slack_abs)


def _gnorm(g: MetricField, p: ChartPoint, v: np.ndarray) -> float:
    return abs(pairing(g.at(p), v, v))


def _orthonormal(rows: np.ndarray) -> np.ndarray:
    Q, _ = np.linalg.qr(rows.T)
    return Q


def check_invariance(F: FamilyMap, splitting_field: SplittingField, p: ChartPoint) -> float:
    """Largest Euclidean residual of ``Df(E^s_p)`` outside ``E^s_{F(p)}`` (same for ``E^u``).

    Each pushed vector is normalised to unit length before projecting, so the
    margin is a sine-like quantity in [0, 1].
    """
    i = p.component
    here = splitting_field(p)
    q = compose(F, i, 1, p)
    there = splitting_field(q)
    D = F.df(i, p.coords)
    worst = 0.0
    for a, b in ((here.stable, there.stable), (here.unstable, there.unstable)):
        if a.dim != b.dim:
            raise SplittingError(f"{a.label} dimension changes from {a.dim} to {b.dim} along the map")
        if a.dim == 0:
            continue
        Q = _orthonormal(b.matrix)
        for v in a.matrix:
            w = D @ v
            w = w / np.linalg.norm(w)
            worst = max(worst, float(np.linalg.norm(w - Q @ (Q.T @ w))))
    return worst


def _require_non_null(g: MetricField, p: ChartPoint, basis: SubspaceBasis):
    for v in basis.matrix:
        if _gnorm(g, p, v) <= TOL_NULL:
            raise SplittingError(
                f"{basis.label} vector {v} is null at {p!r}; rate bounds are undefined on null vectors"
            )


def rate_series(F: FamilyMap, g: MetricField, p: ChartPoint, v: np.ndarray, N: int, forward: bool) -> np.ndarray:
    """``|g(D F^{+-n} v, D F^{+-n} v)|`` for n = 0..N along the forward or backward orbit."""
    i = p.component
    n = N if forward else -N
    pts = orbit(F, i, n, p)
    Js = jacobian_sequence(F, i, n, p)
    return np.array([_gnorm(g, q, J @ v) for q, J in zip(pts, Js)])


def check_rates(F: FamilyMap, g: MetricField, splitting: Splitting, N: int, c: float, lam: float,
                slack_abs: float = SLACK_ABS, slack_rel: float = SLACK_REL) -> CheckEntry:
    """Condition (iii): forward contraction on ``E^s``, backward contraction on ``E^u``.

    ``margin`` is the largest relative excess ``(lhs - c lam^n |g(v,v)|) / (c lam^n |g(v,v)|)``;
    non-positive means every bound held without slack.
    """
    if N < 1:
        raise PreconditionError("N must be at least 1")
    p = splitting.base
    worst = -math.inf
    ok = True
    count = 0
    for part, forward in ((splitting.stable, True), (splitting.unstable, False)):
        _require_non_null(g, p, part)
        for v in part.matrix:
            series = rate_series(F, g, p, v, N, forward)
            for n in range(1, N + 1):
                rhs = c * lam ** n * series[0]
                worst = max(worst, (series[n] - rhs) / rhs)
                ok &= leq(series[n], rhs, slack_abs, slack_rel)
                count += 1
    return CheckEntry("iii", ok, worst if count else 0.0, count, {"N": N, "c": c, "lambda": lam})


@dataclass
class EquivalentForms:
    iii: bool
    iii_prime: bool
    iii_dprime: bool

    @property
    def agree(self) -> bool:
        return self.iii == self.iii_prime == self.iii_dprime


def check_equivalent_forms(F: FamilyMap, g: MetricField, splitting: Splitting, N: int, c: float, lam: float,
                           slack_abs: float = SLACK_ABS, slack_rel: float = SLACK_REL) -> EquivalentForms:
    """Verdicts of (iii), (iii') and (iii'') on the basis vectors of ``splitting``.

    (iii')  stable: forward <= c lam^n;   unstable: forward >= c^-1 lam^-n.
    (iii'') stable: backward >= c^-1 lam^-n; unstable: backward <= c lam^n.
    """
    if N < 1:
        raise PreconditionError("N must be at least 1")
    p = splitting.base
    iii = check_rates(F, g, splitting, N, c, lam, slack_abs, slack_rel).passed
    prime = dprime = True
    for part, is_stable in ((splitting.stable, True), (splitting.unstable, False)):
        _require_non_null(g, p, part)
        for v in part.matrix:
            fwd = rate_series(F, g, p, v, N, True)
            bwd = rate_series(F, g, p, v, N, False)
            for n in range(1, N + 1):
                k = c * lam ** n
                if is_stable:
                    prime &= leq(fwd[n], k * fwd[0], slack_abs, slack_rel)
                    # |g(DF^-n v)| >= c^-1 lam^-n |g(v)|, rearranged
                    dprime &= leq(bwd[0], k * bwd[n], slack_abs, slack_rel)
                else:
                    prime &= leq(fwd[0], k * fwd[n], slack_abs, slack_rel)
                    dprime &= leq(bwd[n], k * bwd[0], slack_abs, slack_rel)
    return EquivalentForms(iii, prime, dprime)


def lemma_mirror(F: FamilyMap, g: MetricField, p: ChartPoint, v: np.ndarray, n: int, c: float, lam: float,
                 kind: str = "stable", slack_abs: float = SLACK_ABS,
                 slack_rel: float = SLACK_REL) -> tuple[bool, bool]:
    """Verdict of the contraction bound at ``p`` and of its mirrored expansion bound at the image point.

    For ``kind='stable'``: the first verdict is ``|g(DF^n v)| <= c lam^n |g(v)|``
    at ``p``; the second starts from ``q = F^n(p)``, ``w = DF^n v``, pulls
    ``w`` back with inverse Jacobians and tests
    ``|g(DF^-n w)| >= c^-1 lam^-n |g(w)|``. ``kind='unstable'`` swaps the
    directions. The two are computed along separate orbits.
    """
    if n < 1:
        raise PreconditionError("n must be at least 1")
    i = p.component
    step = n if kind == "stable" else -n
    q = compose(F, i, step, p)
    w = jacobian_chain(F, i, step, p) @ v
    first = leq(_gnorm(g, q, w), c * lam ** n * _gnorm(g, p, v), slack_abs, slack_rel)
    back = compose(F, q.component, -step, q)
    v_back = jacobian_chain(F, q.component, -step, q) @ w
    second = leq(_gnorm(g, q, w), c * lam ** n * _gnorm(g, back, v_back), slack_abs, slack_rel)
    return first, second


@dataclass
class MixedLimitResult:
    values: np.ndarray
    decreasing: bool
    below_tol: bool

    @property
    def passed(self) -> bool:
        return self.decreasing and self.below_tol


def check_mixed_limit(F: FamilyMap, g: MetricField, p: ChartPoint, xi: np.ndarray, nu: np.ndarray, N: int,
                      c: float, lam: float, tol_limit: float = 1e-6) -> MixedLimitResult:
    """Condition (iv): ``a_n = |g(DF^-n xi, DF^-n nu)|`` should decay when ``nu`` contracts backward.

    Raises ``PreconditionError`` when ``nu`` fails the backward bound
    ``|g(DF^-n nu)| <= c lam^n |g(nu)|`` for some ``1 <= n <= N``.
    """
    if N < 1:
        raise PreconditionError("N must be at least 1")
    nu_series = rate_series(F, g, p, nu, N, False)
    for n in range(1, N + 1):
        if not leq(nu_series[n], c * lam ** n * nu_series[0]):
            raise PreconditionError(
                f"nu does not contract backward at n={n}: {nu_series[n]:.3e} > {c * lam ** n * nu_series[0]:.3e}"
            )
    i = p.component
    pts = orbit(F, i, -N, p)
    Js = jacobian_sequence(F, i, -N, p)
    a = np.array([abs(pairing(g.at(q), J @ xi, J @ nu)) for q, J in zip(pts, Js)])[1:]
    decreasing = bool(a[-1] < a[0]) or not np.any(a)
    return MixedLimitResult(a, decreasing, bool(a[-1] < tol_limit))


def _power_iterate(matrices: Sequence[np.ndarray], X: np.ndarray, inverse: bool) -> np.ndarray:
    for D in matrices:
        Y = np.linalg.solve(D, X) if inverse else D @ X
        X, R = np.linalg.qr(Y)
        d = np.abs(np.diag(R))
        if d.min() <= RANK_TOL * max(d.max(), 1.0):
            raise SplittingError("rank collapse during power iteration")
    return X


def _seed(rng: np.random.Generator, m: int, k: int) -> np.ndarray:
    X, _ = np.linalg.qr(rng.standard_normal((m, k)))
    return X


def estimate_unstable(F: FamilyMap, i: int, p: ChartPoint, n_iter: int = 15, seed_dim: int = 1,
                      rng: Optional[np.random.Generator] = None) -> SubspaceBasis:
    """Push a random ``seed_dim``-plane forward from ``F^-n_iter(p)`` to ``p`` with QR at each step."""
    if n_iter < 1:
        raise PreconditionError("n_iter must be at least 1")
    rng = np.random.default_rng(0) if rng is None else rng
    pts = orbit(F, i, -n_iter, p)[::-1]  # p_{-n}, ..., p
    mats = [F.df(q.component, q.coords) for q in pts[:-1]]
    X = _power_iterate(mats, _seed(rng, p.dim, seed_dim), inverse=False)
    return canonical_basis(p, X.T, "unstable")


def estimate_stable(F: FamilyMap, i: int, p: ChartPoint, n_iter: int = 15, seed_dim: int = 1,
                    rng: Optional[np.random.Generator] = None) -> SubspaceBasis:
    """Pull a random ``seed_dim``-plane back from ``F^n_iter(p)`` to ``p`` with inverse Jacobians."""
    if n_iter < 1:
        raise PreconditionError("n_iter must be at least 1")
    rng = np.random.default_rng(0) if rng is None else rng
    pts = orbit(F, i, n_iter, p)
    mats = [F.df(q.component, q.coords) for q in reversed(pts[:-1])]
    X = _power_iterate(mats, _seed(rng, p.dim, seed_dim), inverse=True)
    return canonical_basis(p, X.T, "stable")


def estimated_splitting(F: FamilyMap, p: ChartPoint, null_dist: SubspaceBasis, dims: tuple[int, int],
                        n_iter: int = 15, seed: int = 0) -> Splitting:
    """Splitting with power-iteration estimates for ``E^s``/``E^u`` and a given null part."""
    rng = np.random.default_rng(seed)
    s = estimate_stable(F, p.component, p, n_iter, dims[0], rng)
    u = estimate_unstable(F, p.component, p, n_iter, dims[1], rng)
    return Splitting(p, s, u, null_dist)


def fit_geometric(ns: np.ndarray, ratios: np.ndarray) -> RateEstimate:
    """Least-squares fit ``ratios ~ c lam^n`` in log space; ``c`` is raised until every point is covered."""
    ns = np.asarray(ns, dtype=float)
    ratios = np.asarray(ratios, dtype=float)
    if np.any(ratios <= 0) or not np.all(np.isfinite(ratios)):
        raise RateFitError("no valid (c, lambda): ratios must be positive and finite")
    y = np.log(ratios)
    A = np.column_stack([np.ones_like(ns), ns])
    (a, b), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (a + b * ns)
    lam = math.exp(b)
    if not 0.0 < lam < 1.0:
        raise RateFitError(f"no valid (c, lambda): fitted lambda = {lam:.6g}")
    margin = max(0.0, float(resid.max()))
    return RateEstimate(math.exp(a + margin), lam, float(np.sqrt(np.mean(resid ** 2))))


def fit_rates(F: FamilyMap, g: MetricField, splitting: Splitting, N: int, which: str = "stable") -> RateEstimate:
    """Fit (c, lambda) to ``|g(DF^n v)| / |g(v)|`` over n = 1..N.

    ``which='stable'`` uses forward iterates of ``E^s`` vectors,
    ``which='unstable'`` backward iterates of ``E^u`` vectors.
    """
    if N < 3:
        raise PreconditionError("N must be at least 3")
    part = splitting.stable if which == "stable" else splitting.unstable
    if part.dim == 0:
        raise RateFitError(f"no valid (c, lambda): empty {which} subspace")
    p = splitting.base
    _require_non_null(g, p, part)
    ns, ratios = [], []
    for v in part.matrix:
        series = rate_series(F, g, p, v, N, which == "stable")
        ns.extend(range(1, N + 1))
        ratios.extend(series[1:] / series[0])
    return fit_geometric(np.array(ns), np.array(ratios))


@dataclass
class ContinuityResult:
    unstable: list[float]
    stable: list[float]
    tol_cont: float

    @staticmethod
    def converges(seq: list[float], tol: float) -> bool:
        # a sequence sitting at rounding level (constant field) counts as converged
        if len(seq) < 2 or max(seq) <= NOISE_FLOOR:
            return max(seq, default=0.0) < tol
        return seq[-1] < seq[0] and seq[-1] < tol

    @property
    def passed(self) -> bool:
        return self.converges(self.unstable, self.tol_cont) and self.converges(self.stable, self.tol_cont)


def splitting_continuity_test(g: MetricField, splitting_field: SplittingField, curve: Curve,
                              t_sequence: Sequence[float], tol_cont: float = 1e-3) -> ContinuityResult:
    """Distances between the splitting at ``curve(t_n)`` and at ``curve(0)``, per n.

    A failure to build the splitting at any ``curve(t_n)`` propagates.
    """
    base = splitting_field(curve.point(0.0))
    du, ds = [], []
    for t in t_sequence:
        s = splitting_field(curve.point(t))
        du.append(basis_distance(g, curve, s.unstable, t, base.unstable, 0.0) if s.unstable.dim else 0.0)
        ds.append(basis_distance(g, curve, s.stable, t, base.stable, 0.0) if s.stable.dim else 0.0)
    return ContinuityResult(du, ds, tol_cont)


def verify_splittings(F: FamilyMap, g: MetricField, splittings: Sequence[Splitting], N: int,
                      c: Optional[float] = None, lam: Optional[float] = None,
                      tol_inv: float = 1e-9, tol_limit: float = 1e-3,
                      splitting_field: Optional[SplittingField] = None,
                      rng: Optional[np.random.Generator] = None) -> VerificationReport:
    """Run conditions (i)-(iv) plus (iii')/(iii'') on a list of splittings.

    When ``c``/``lam`` are omitted they are fitted: ``lam`` is the largest
    fitted rate over stable and unstable parts, ``c`` the largest fitted
    constant, inflated by 5% to keep the data off the boundary. ``tol_limit``
    for condition (iv) is relative to ``|xi| |nu|``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    entries: list[CheckEntry] = []
    params = {"N": N, "tol_inv": tol_inv, "tol_limit": tol_limit, "slack_abs": SLACK_ABS, "slack_rel": SLACK_REL}

    viol = {f"{s.base!r}": s.causal_violations(g) for s in splittings}
    bad = {k: v for k, v in viol.items() if v}
    entries.append(CheckEntry("i", not bad, float(len(bad)), len(splittings), {"violations": bad}))

    if splitting_field is not None:
        margins = [check_invariance(F, splitting_field, s.base) for s in splittings]
        worst = max(margins)
        entries.append(CheckEntry("ii", worst <= tol_inv, worst, len(margins)))

    fit_notes = {}
    if c is None or lam is None:
        cs, lams = [], []
        for s in splittings:
            for which in ("stable", "unstable"):
                part = s.stable if which == "stable" else s.unstable
                if part.dim == 0:
                    continue
                try:
                    est = fit_rates(F, g, s, max(N, 3), which)
                except (RateFitError, SplittingError) as exc:
                    fit_notes.setdefault(which, str(exc))
                    continue
                cs.append(est.c)
                lams.append(est.lam)
        lam = max(lams) if lams else 0.5
        c = 1.05 * max(cs) if cs else 1.0
    params.update({"c": c, "lambda": lam})
    if fit_notes:
        params["fit_failures"] = fit_notes

    rate_entries = []
    forms = []
    for s in splittings:
        try:
            rate_entries.append(check_rates(F, g, s, N, c, lam))
            forms.append(check_equivalent_forms(F, g, s, N, c, lam))
        except SplittingError as exc:
            rate_entries.append(CheckEntry("iii", False, math.inf, 0, {"error": str(exc)}))
            forms.append(EquivalentForms(False, False, False))
    entries.append(CheckEntry(
        "iii", all(e.passed for e in rate_entries), max(e.margin for e in rate_entries),
        sum(e.n_samples for e in rate_entries),
    ))
    entries.append(CheckEntry("iii'", all(f.iii_prime for f in forms), float(sum(not f.iii_prime for f in forms)),
                              len(forms)))
    entries.append(CheckEntry("iii''", all(f.iii_dprime for f in forms), float(sum(not f.iii_dprime for f in forms)),
                              len(forms), {"agree_with_iii": all(f.agree for f in forms)}))

    worst = 0.0
    ok = True
    n_iv = 0
    for s in splittings:
        if s.unstable.dim == 0:
            continue
        xi = s.unstable.matrix[0]
        coef = rng.uniform(0.25, 1.0, size=s.unstable.dim)
        nu = coef @ s.unstable.matrix
        scale = np.linalg.norm(xi) * np.linalg.norm(nu)
        try:
            res = check_mixed_limit(F, g, s.base, xi, nu, N, c, lam, tol_limit * scale)
            worst = max(worst, float(res.values[-1] / scale))
            ok &= res.passed
        except PreconditionError as exc:
            ok = False
            worst = math.inf
            params.setdefault("iv_precondition", str(exc))
        n_iv += 1
    entries.append(CheckEntry("iv", ok, worst, n_iv))
    return VerificationReport(entries, params)
