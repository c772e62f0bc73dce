"""Built-in example families: scaled metrics, the lifted solenoid, and the warped product.

Each builder returns an ``ExampleBundle`` holding the family of maps, the
metric on every component, a model splitting field and a sampler for base
points that have orbits inside the window.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import Delaunay

from .anosov import Splitting
from .geometry import ChartPoint, Curve, GeometryError, MetricField
from .nsds import DEFAULT_WINDOW, FamilyMap, jacobian_chain, orbit
from .subspace import SubspaceBasis, canonical_basis

TWO_PI = 2 * math.pi
SQRT3 = math.sqrt(3.0)
DISK_TOL = 1e-9


class ExampleError(ValueError):
    pass


@dataclass(frozen=True)
class ExampleBundle:
    name: str
    family: FamilyMap
    metric: MetricField
    model_splitting: Callable[[ChartPoint], Splitting]
    sampler: Callable[[np.random.Generator, int], ChartPoint]
    params: dict = field(default_factory=dict)

    def sample_point(self, rng: np.random.Generator, i: int = 0) -> ChartPoint:
        return self.sampler(rng, i)

    @property
    def window(self) -> tuple[int, int]:
        return self.family.window


# ---------------------------------------------------------------- scaled family

def _default_scaled_splitting(m: int):
    if m != 4:
        raise ExampleError("a default splitting is only provided for m = 4; pass splitting0")
    G0 = np.diag([1.0, 1.0, 1.0, -1.0])
    stable = np.array([[1.0, 0, 0, 0], [0, 0, 1.0, 0]])
    unstable = np.array([[0, 1.0, 0, 0]])
    null = np.array([[0, 0, 1.0, 1.0]])
    return G0, (stable, unstable, null)


def scaled_metric_matrix(G0: np.ndarray, parts, alpha: float, i: int) -> np.ndarray:
    """Metric of component ``i``: ``g_0`` rescaled by alpha^-|i| on E^s, alpha^|i| on E^u, unchanged on E^n.

    Built as a congruence in the splitting basis, so the signature of ``g_0``
    is preserved and cross terms scale by the geometric mean of the factors.
    """
    stable, unstable, null = parts
    B = np.vstack([stable, unstable, null]).T
    scale = np.concatenate([
        np.full(len(stable), alpha ** (-abs(i))),
        np.full(len(unstable), alpha ** abs(i)),
        np.ones(len(null)),
    ])
    root = np.sqrt(scale)
    inner = (B.T @ G0 @ B) * np.outer(root, root)
    Binv = np.linalg.inv(B)
    G = Binv.T @ inner @ Binv
    return 0.5 * (G + G.T)


def make_scaled(m: int = 4, alpha: float = 2.0, splitting0=None, G0=None,
                window: tuple[int, int] = DEFAULT_WINDOW) -> ExampleBundle:
    """Family on copies of R^m with identity maps and exponentially rescaled metrics."""
    if not alpha > 1.0:
        raise ExampleError(f"alpha must be > 1, got {alpha}")
    if splitting0 is None:
        G0_default, parts = _default_scaled_splitting(m)
        G0 = G0_default if G0 is None else np.asarray(G0, dtype=float)
    else:
        if G0 is None:
            raise ExampleError("G0 is required together with splitting0")
        G0 = np.asarray(G0, dtype=float)
        parts = tuple(np.atleast_2d(np.asarray(x, dtype=float)).reshape(-1, m) for x in splitting0)
    cache: dict[int, np.ndarray] = {}

    def matrix(i, x):
        if i not in cache:
            G = scaled_metric_matrix(G0, parts, alpha, i)
            G.setflags(write=False)
            cache[i] = G
        return cache[i]

    zeros = np.zeros((m, m, m))
    zeros.setflags(write=False)
    metric = MetricField(matrix, lambda i, x: zeros, name=f"scaled(alpha={alpha})", flat=True)
    eye = np.eye(m)
    family = FamilyMap(window, lambda i, x: np.array(x, dtype=float), lambda i, y: np.array(y, dtype=float),
                       lambda i, x: eye, name="scaled")

    def splitting(p: ChartPoint) -> Splitting:
        s, u, n = parts
        return Splitting(p, SubspaceBasis(p, s, "stable"), SubspaceBasis(p, u, "unstable"),
                         SubspaceBasis(p, n, "null"))

    def sampler(rng, i):
        return ChartPoint(i, rng.uniform(-1.0, 1.0, size=m))

    return ExampleBundle("scaled", family, metric, splitting, sampler,
                         {"alpha": alpha, "m": m, "window": list(window)})


# ---------------------------------------------------------------- solenoid

def _in_disk(u: float, v: float) -> bool:
    return u * u + v * v <= 1.0 + DISK_TOL


def solenoid_map(theta: float, u: float, v: float) -> tuple[float, float, float]:
    """Angle-doubling, disk-contracting embedding of the solid torus into itself."""
    if not _in_disk(u, v):
        raise ExampleError(f"point ({theta}, {u}, {v}) is outside the solid torus")
    return (
        (2.0 * theta) % TWO_PI,
        u / 10.0 + math.cos(theta) / 10.0,
        v / 10.0 + math.sin(theta) / 10.0,
    )


def solenoid_inverse(theta: float, u: float, v: float) -> tuple[float, float, float]:
    """Preimage under ``solenoid_map`` of a point of its image; the angle branch is picked by the disk centre."""
    best = None
    for t in ((theta % TWO_PI) / 2.0, (theta % TWO_PI) / 2.0 + math.pi):
        du = u - math.cos(t) / 10.0
        dv = v - math.sin(t) / 10.0
        r = du * du + dv * dv
        if best is None or r < best[0]:
            best = (r, t, 10.0 * du, 10.0 * dv)
    _, t, u0, v0 = best
    if not _in_disk(u0, v0):
        raise ExampleError(f"point ({theta}, {u}, {v}) has no preimage in the solid torus")
    return t % TWO_PI, u0, v0


def solenoid_jacobian3(theta: float) -> np.ndarray:
    return np.array([
        [2.0, 0.0, 0.0],
        [-math.sin(theta) / 10.0, 0.1, 0.0],
        [math.cos(theta) / 10.0, 0.0, 0.1],
    ])


def _lift_forward(i, x):
    return np.array([*solenoid_map(x[0], x[1], x[2]), x[3]])


def _lift_inverse(i, y):
    return np.array([*solenoid_inverse(y[0], y[1], y[2]), y[3]])


def _lift_jacobian(i, x):
    J = np.eye(4)
    J[:3, :3] = solenoid_jacobian3(x[0])
    return J


SOLENOID_METRIC = np.diag([1.0, 1.0, 1.0, -1.0])
SOLENOID_NULL = np.array([[1.0, 1.0, 1.0, SQRT3]])


def solenoid_family(window: tuple[int, int] = DEFAULT_WINDOW) -> FamilyMap:
    return FamilyMap(window, _lift_forward, _lift_inverse, _lift_jacobian, name="solenoid", periodic=(0,))


def sample_solid_torus(rng: np.random.Generator, size: int) -> np.ndarray:
    """Uniform samples of N = S^1 x D^2 as rows (theta, u, v)."""
    theta = rng.uniform(0.0, TWO_PI, size)
    r = np.sqrt(rng.uniform(0.0, 1.0, size))
    phi = rng.uniform(0.0, TWO_PI, size)
    return np.column_stack([theta, r * np.cos(phi), r * np.sin(phi)])


def iterate_solenoid(points: np.ndarray, n: int) -> np.ndarray:
    """Vectorised ``f^n`` on rows (theta, u, v)."""
    th, u, v = points[:, 0].copy(), points[:, 1].copy(), points[:, 2].copy()
    if np.any(u * u + v * v > 1.0 + DISK_TOL):
        raise ExampleError("input outside the solid torus")
    for _ in range(n):
        u = u / 10.0 + np.cos(th) / 10.0
        v = v / 10.0 + np.sin(th) / 10.0
        th = (2.0 * th) % TWO_PI
    return np.column_stack([th, u, v])


def unstable_graph_transform(F: FamilyMap, p: ChartPoint, depth: int = 12) -> SubspaceBasis:
    """Unstable line at ``p``: the angle direction at ``F^-depth(p)`` pushed forward to ``p``.

    Lines transverse to the disk directions converge to the unstable line at
    rate 0.05 per step, so depth 12 is exact to rounding.
    """
    i = p.component
    depth = min(depth, i - F.window[0])
    if depth < 1:
        raise GeometryError(f"no backward orbit available at M_{i} inside window {F.window}")
    back = orbit(F, i, -depth, p)[-1]
    seed = np.zeros(p.dim)
    seed[0] = 1.0
    w = jacobian_chain(F, back.component, depth, back) @ seed
    return canonical_basis(p, w[None, :], "unstable")


def make_solenoid_bundle(window: tuple[int, int] = DEFAULT_WINDOW, depth: int = 30) -> ExampleBundle:
    """Lifted solenoid on copies of Lambda x R with metric diag(1, 1, 1, -1).

    ``depth`` is how many forward iterates a sampled base point has been
    through, so its backward orbit stays in the solid torus.
    """
    F = solenoid_family(window)
    metric = MetricField.constant(SOLENOID_METRIC, name="solenoid")
    stable_rows = np.array([[0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]])

    def splitting(p: ChartPoint) -> Splitting:
        return Splitting(
            p,
            SubspaceBasis(p, stable_rows, "stable"),
            unstable_graph_transform(F, p),
            SubspaceBasis(p, SOLENOID_NULL, "null"),
        )

    def sampler(rng, i):
        q = iterate_solenoid(sample_solid_torus(rng, 1), depth)[0]
        return ChartPoint(i, [q[0], q[1], q[2], rng.uniform(-1.0, 1.0)])

    return ExampleBundle("solenoid", F, metric, splitting, sampler, {"window": list(window), "depth": depth})


@dataclass(frozen=True, eq=False)
class AttractorApprox:
    depth: int
    points: np.ndarray  # rows (theta, u, v)

    def check(self, tol: float = 1e-6) -> bool:
        """Every point lies in N and its first ``depth`` preimages lie in N."""
        for q in self.points:
            x = tuple(q)
            if x[1] ** 2 + x[2] ** 2 > 1.0 + tol:
                return False
            for _ in range(self.depth):
                try:
                    x = solenoid_inverse(*x)
                except ExampleError:
                    return False
        return True


def attractor_approx(n: int, samples: int, seed: int = 0) -> AttractorApprox:
    """Points of N, f(N), ..., f^n(N) obtained as ``f^n`` of uniform samples of N."""
    if n < 0 or samples < 1:
        raise ExampleError("need n >= 0 and samples >= 1")
    rng = np.random.default_rng(seed)
    return AttractorApprox(n, iterate_solenoid(sample_solid_torus(rng, samples), n))


def cross_section(n: int, samples: int, theta: float = 0.0, seed: int = 0) -> np.ndarray:
    """(u, v) of points of the depth-``n`` approximation lying exactly on the slice {angle = theta}.

    Each starting angle is ``(theta + 2 pi j) / 2^n`` for a random branch ``j``,
    so the n-th image lands on the slice.
    """
    rng = np.random.default_rng(seed)
    start = sample_solid_torus(rng, samples)
    j = rng.integers(0, 2 ** n, samples)
    start[:, 0] = (theta + TWO_PI * j) / 2.0 ** n
    return iterate_solenoid(start, n)[:, 1:]


def count_clusters(points: np.ndarray, gap: float) -> int:
    """Single-linkage clusters of planar points at distance threshold ``gap``.

    The Euclidean minimum spanning tree is a subgraph of the Delaunay graph, so
    thresholding Delaunay edges gives the same components as all pairs.
    """
    pts = np.unique(np.asarray(points, dtype=float), axis=0)
    n = len(pts)
    if n == 0:
        return 0
    centred = pts - pts.mean(axis=0)
    _, sv, vt = np.linalg.svd(centred, full_matrices=False)
    if n < 3 or sv[-1] <= 1e-12 * max(sv[0], 1e-300):
        # collinear: single linkage is a split at every large gap along the line
        t = np.sort(centred @ vt[0])
        return 1 + int(np.sum(np.diff(t) >= gap))
    tri = Delaunay(pts)
    s = tri.simplices
    edges = np.vstack([s[:, [0, 1]], s[:, [1, 2]], s[:, [0, 2]]])
    if len(tri.coplanar):
        # near-duplicates left out of the triangulation join their nearest vertex
        edges = np.vstack([edges, tri.coplanar[:, [0, 2]]])
    length = np.linalg.norm(pts[edges[:, 0]] - pts[edges[:, 1]], axis=1)
    keep = edges[length < gap]
    graph = coo_matrix((np.ones(len(keep)), (keep[:, 0], keep[:, 1])), shape=(n, n))
    return int(connected_components(graph, directed=False)[0])


def strand_gap(n: int, base_gap: float = 0.05) -> float:
    """Clustering threshold for depth ``n``: ``base_gap`` at depth 1, shrinking 10x per level."""
    return base_gap * 10.0 ** (1 - n)


def strand_count(n: int, samples: int = 100_000, refine: int = 3, theta: float = 0.0,
                 base_gap: float = 0.05, seed: int = 0) -> int:
    """Number of strands of the depth-``n`` approximation crossing the slice {angle = theta}.

    The depth-``n`` disks touch their siblings, so points are taken ``refine``
    levels deeper, where each depth-``n`` strand is a tight clump, and
    clustered at ``strand_gap(n)``.
    """
    return count_clusters(cross_section(n + refine, samples, theta, seed), strand_gap(n, base_gap))


def unstable_leaf_curve(F: FamilyMap, p: ChartPoint, depth: int = 12, half_width: float = 1.0) -> Curve:
    """Curve through ``p`` (at t = 0) inside the unstable leaf of the solenoid.

    ``gamma(t) = F^depth(F^-depth(p) + (t / 2^depth) e_theta)``; the parameter
    is rescaled so that the speed stays of order one.
    """
    i = p.component
    depth = min(depth, i - F.window[0])
    if depth < 1:
        raise GeometryError(f"no backward orbit available at M_{i} inside window {F.window}")
    x0 = np.array(orbit(F, i, -depth, p)[-1].coords)
    e = np.zeros(p.dim)
    e[0] = 1.0
    scale = 2.0 ** -depth

    def start(t):
        return ChartPoint(i - depth, x0 + t * scale * e)

    def position(t):
        x = start(t).coords
        for k in range(i - depth, i):
            x = F.f(k, x)
        return x

    def velocity(t):
        return jacobian_chain(F, i - depth, depth, start(t)) @ (scale * e)

    return Curve(i, (-half_width, half_width), position, velocity)


# ---------------------------------------------------------------- warped product

def _rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def make_warped(d: float = 0.5, h_spec: str = "identity", angle: float = 0.3,
                window: tuple[int, int] = DEFAULT_WINDOW) -> ExampleBundle:
    """Warped products (0, 2^i) x R^2 with metric -dx^2 + d^|i| (dy1^2 + dy2^2) and f_i(x, y) = (2x, h(y))."""
    if not 0.0 < d < 1.0:
        raise ExampleError(f"d outside (0,1): d={d}")
    if h_spec == "identity":
        H = np.eye(2)
    elif h_spec == "rotation":
        H = _rotation(angle)
    else:
        raise ExampleError(f"unknown h_spec {h_spec!r}; use 'identity' or 'rotation'")
    Hinv = H.T

    def forward(i, x):
        if not 0.0 < x[0] < 2.0 ** i:
            raise ExampleError(f"x={x[0]} is outside I_{i} = (0, {2.0 ** i})")
        return np.concatenate([[2.0 * x[0]], H @ x[1:]])

    def inverse(i, y):
        if not 0.0 < y[0] < 2.0 ** (i + 1):
            raise ExampleError(f"x={y[0]} is outside I_{i + 1} = (0, {2.0 ** (i + 1)})")
        return np.concatenate([[y[0] / 2.0], Hinv @ y[1:]])

    J = np.eye(3)
    J[0, 0] = 2.0
    J[1:, 1:] = H
    J.setflags(write=False)
    F = FamilyMap(window, forward, inverse, lambda i, x: J, name="warped")

    zeros = np.zeros((3, 3, 3))
    zeros.setflags(write=False)
    metric = MetricField(lambda i, x: np.diag([-1.0, d ** abs(i), d ** abs(i)]), lambda i, x: zeros,
                         name=f"warped(d={d})", flat=True)
    factor_norm = 1.0  # sqrt(g((0,1),(0,1))) for the flat factor

    def splitting(p: ChartPoint) -> Splitting:
        i = p.component
        return Splitting(
            p,
            SubspaceBasis(p, [[0.0, 1.0, 1.0]], "stable"),
            SubspaceBasis(p, [[1.0, 0.0, 0.0]], "unstable"),
            SubspaceBasis(p, [[d ** abs(i) * factor_norm, 0.0, 1.0]], "null"),
        )

    def sampler(rng, i):
        return ChartPoint(i, [rng.uniform(0.05, 0.95) * 2.0 ** i, *rng.normal(size=2)])

    return ExampleBundle("warped", F, metric, splitting, sampler,
                         {"d": d, "h": h_spec, "angle": angle if h_spec == "rotation" else 0.0,
                          "window": list(window)})


BUILDERS = {
    "scaled": make_scaled,
    "solenoid": make_solenoid_bundle,
    "warped": make_warped,
}


def get_bundle(name: str, **overrides) -> ExampleBundle:
    if name not in BUILDERS:
        raise KeyError(f"unknown example {name!r}; choose from {sorted(BUILDERS)}")
    return BUILDERS[name](**overrides)
