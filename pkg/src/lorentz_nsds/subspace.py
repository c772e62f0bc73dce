"""Tangent subspaces as ordered bases, finite point clouds, and the two distances between them.

``basis_distance`` compares bases through |g(P u - w, P u - w)| (a squared,
difference-based pseudo-distance). ``hyper_distance`` compares finite clouds
through the pairing |g(P u, v)|. The two are deliberately different
functions and neither is a metric in the usual sense: null differences give
zero distance between distinct vectors, and d(u, {u}) = |g(u, u)| under the
pairing form.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import (
    TOL_NULL,
    ChartPoint,
    Curve,
    GeometryError,
    MetricField,
    TangentVector,
    pairing,
    transport_matrix,
)

LABELS = ("stable", "unstable", "null", "generic")
INDEPENDENCE_TOL = 1e-10


class SubspaceError(GeometryError):
    pass


def _rows(vectors, dim: int) -> np.ndarray:
    if isinstance(vectors, np.ndarray):
        arr = np.array(vectors, dtype=float)
    else:
        arr = np.array(
            [v.components if isinstance(v, TangentVector) else v for v in vectors], dtype=float
        )
    return arr.reshape(-1, dim)


@dataclass(frozen=True, eq=False)
class SubspaceBasis:
    """Ordered basis of a subspace of ``T_base M``; rows of ``matrix`` are the basis vectors."""

    base: ChartPoint
    matrix: np.ndarray
    label: str = "generic"

    def __post_init__(self):
        if self.label not in LABELS:
            raise SubspaceError(f"unknown label {self.label!r}")
        for v in () if isinstance(self.matrix, np.ndarray) else self.matrix:
            if isinstance(v, TangentVector) and not v.base.close_to(self.base):
                raise SubspaceError("basis vectors must share the base point")
        M = _rows(self.matrix, self.base.dim)
        if M.shape[0] > self.base.dim:
            raise SubspaceError(f"{M.shape[0]} vectors cannot be independent in dimension {self.base.dim}")
        if M.shape[0] and np.linalg.svd(M, compute_uv=False)[-1] <= INDEPENDENCE_TOL:
            raise SubspaceError("basis vectors are linearly dependent")
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def vectors(self) -> list[TangentVector]:
        return [TangentVector(self.base, row) for row in self.matrix]

    def __len__(self):
        return self.dim

    def reordered(self, order) -> "SubspaceBasis":
        return SubspaceBasis(self.base, self.matrix[list(order)], self.label)


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Finite sample standing in for a compact subset of ``T_base M``; duplicates allowed."""

    base: ChartPoint
    matrix: np.ndarray

    def __post_init__(self):
        M = _rows(self.matrix, self.base.dim)
        if M.shape[0] == 0:
            raise SubspaceError("empty point cloud")
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)

    @classmethod
    def singleton(cls, v: TangentVector) -> "PointCloud":
        return cls(v.base, v.components[None, :])

    @property
    def vectors(self) -> list[TangentVector]:
        return [TangentVector(self.base, row) for row in self.matrix]

    def __len__(self):
        return self.matrix.shape[0]

    def union(self, other: "PointCloud") -> "PointCloud":
        if not self.base.close_to(other.base):
            raise SubspaceError("clouds at different points")
        return PointCloud(self.base, np.vstack([self.matrix, other.matrix]))


def _on_curve(curve: Curve, p: ChartPoint, t: float, what: str):
    if not p.close_to(curve.point(t), atol=1e-9):
        raise SubspaceError(f"{what} based at {p!r} is not on the curve at parameter {t}")


def _transported(g: MetricField, curve: Curve, rows: np.ndarray, t: float, zeta: float) -> np.ndarray:
    """Rows transported from curve(t) to curve(zeta); skipped entirely when t == zeta."""
    if t == zeta:
        return rows
    P = transport_matrix(g, curve, t, zeta)
    return rows @ P.T


def vector_to_basis_distance(g: MetricField, curve: Curve, u: TangentVector, t: float,
                             basis: SubspaceBasis, zeta: float) -> float:
    """min over basis vectors w of |g(P u - w, P u - w)|, P transporting curve(t) -> curve(zeta)."""
    _on_curve(curve, u.base, t, "vector")
    _on_curve(curve, basis.base, zeta, "basis")
    return _min_diff(g.at(basis.base), _transported(g, curve, u.components[None, :], t, zeta)[0], basis.matrix)


def _min_diff(G: np.ndarray, pu: np.ndarray, W: np.ndarray) -> float:
    if W.shape[0] == 0:
        raise SubspaceError("distance to an empty basis is undefined")
    return min(abs(pairing(G, pu - w, pu - w)) for w in W)


def basis_distance(g: MetricField, curve: Curve, B_E: SubspaceBasis, zeta: float,
                   B_F: SubspaceBasis, t: float) -> float:
    """Symmetric max-min distance between two bases placed at curve(zeta) and curve(t)."""
    _on_curve(curve, B_E.base, zeta, "basis")
    _on_curve(curve, B_F.base, t, "basis")
    G_E = g.at(B_E.base)
    G_F = g.at(B_F.base)
    E_at_F = _transported(g, curve, B_E.matrix, zeta, t)
    F_at_E = _transported(g, curve, B_F.matrix, t, zeta)
    one = max(_min_diff(G_F, v, B_F.matrix) for v in E_at_F)
    two = max(_min_diff(G_E, u, B_E.matrix) for u in F_at_E)
    return max(one, two)


def same_point_basis_distance(g: MetricField, B_E: SubspaceBasis, B_F: SubspaceBasis) -> float:
    """``basis_distance`` for two bases at one point (no transport)."""
    if not B_E.base.close_to(B_F.base, atol=1e-9):
        raise SubspaceError("bases are not at a common point")
    curve = Curve(B_E.base.component, (0.0, 0.0), lambda t: B_E.base.coords, lambda t: np.zeros(B_E.base.dim))
    return basis_distance(g, curve, B_E, 0.0, B_F, 0.0)


def lorentz_orthonormalize(g: MetricField, basis: SubspaceBasis, tol_null: float = TOL_NULL) -> SubspaceBasis:
    """Gram-Schmidt with |g|-normalisation: |g(e_i, e_j)| = delta_ij on output."""
    G = g.at(basis.base)
    out: list[np.ndarray] = []
    norms: list[float] = []
    for v in basis.matrix:
        w = v.copy()
        for e, q in zip(out, norms):
            w = w - pairing(G, w, e) / q * e
        q = pairing(G, w, w)
        if abs(q) <= tol_null:
            raise SubspaceError("subspace not orthonormalizable: a projected vector is null")
        e = w / np.sqrt(abs(q))
        out.append(e)
        norms.append(float(np.sign(q)))
    return SubspaceBasis(basis.base, np.array(out).reshape(-1, basis.base.dim), basis.label)


def _pivots(P: np.ndarray, k: int, rel_tie: float = 1e-9) -> list[int]:
    """Greedy column pivots of the projector ``P``; near-ties go to the lowest index."""
    R = P.copy()
    piv: list[int] = []
    for _ in range(k):
        norms = np.linalg.norm(R, axis=0)
        norms[piv] = -1.0
        j = int(np.flatnonzero(norms >= (1.0 - rel_tie) * norms.max())[0])
        piv.append(j)
        col = R[:, j] / norms[j]
        R = R - np.outer(col, col @ R)
    return sorted(piv)


def canonical_basis(base: ChartPoint, rows: np.ndarray, label: str = "generic") -> SubspaceBasis:
    """Basis of span(rows) in reduced echelon form on pivot coordinates.

    Pivots are chosen greedily from the orthogonal projector onto the span, so
    they depend on the subspace only; each returned row has a 1 on its own
    pivot and 0 on the other pivots.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    k = rows.shape[0]
    if k == 0:
        return SubspaceBasis(base, rows.reshape(0, base.dim), label)
    Q, _ = np.linalg.qr(rows.T)
    piv = _pivots(Q @ Q.T, k)
    B = np.linalg.solve(Q[piv, :].T, Q.T)  # rows span the subspace, B[:, piv] = I
    return SubspaceBasis(base, B, label)


def hyper_point_distance(g: MetricField, curve: Curve, u: TangentVector, t: float,
                         K: PointCloud, zeta: float) -> float:
    """min over v in K of |g(P u, v)|, the pairing (not difference) form."""
    _on_curve(curve, u.base, t, "vector")
    _on_curve(curve, K.base, zeta, "cloud")
    pu = _transported(g, curve, u.components[None, :], t, zeta)[0]
    return _min_pair(g.at(K.base), pu, K.matrix)


def _min_pair(G: np.ndarray, pu: np.ndarray, V: np.ndarray) -> float:
    return min(abs(pairing(G, pu, v)) for v in V)


def cloud_distance(G_A: np.ndarray, A: np.ndarray, G_B: np.ndarray, B: np.ndarray,
                   A_at_B: np.ndarray, B_at_A: np.ndarray) -> float:
    one = max(_min_pair(G_B, u, B) for u in A_at_B)
    two = max(_min_pair(G_A, v, A) for v in B_at_A)
    return max(one, two)


def hyper_distance(g: MetricField, curve: Curve, A: PointCloud, t: float, B: PointCloud, zeta: float) -> float:
    """max(max_u d(u, B), max_v d(v, A)) with the pairing point-to-cloud distance."""
    _on_curve(curve, A.base, t, "cloud")
    _on_curve(curve, B.base, zeta, "cloud")
    return cloud_distance(
        g.at(A.base), A.matrix, g.at(B.base), B.matrix,
        _transported(g, curve, A.matrix, t, zeta), _transported(g, curve, B.matrix, zeta, t),
    )


def same_point_hyper_distance(G: np.ndarray, A: np.ndarray, B: np.ndarray) -> float:
    """``hyper_distance`` for two clouds in one tangent space with metric matrix ``G``."""
    return cloud_distance(G, A, G, B, A, B)
