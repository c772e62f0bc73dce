"""Independent reference computations used by the tests.

Nothing here calls into the package's numerical routines: Christoffel symbols
come from sympy, subspaces from plain SVDs of Jacobian products, distances
from double loops, clusters from scipy's hierarchical clustering.
"""
import itertools
import math

import numpy as np
import sympy as sp
from scipy.cluster.hierarchy import fcluster, linkage


def christoffel_sympy(metric_expr, coords, values):
    """Gamma^k_ij from a sympy metric matrix, evaluated at ``values``."""
    G = sp.Matrix(metric_expr)
    Ginv = G.inv()
    m = len(coords)
    out = np.zeros((m, m, m))
    subs = dict(zip(coords, values))
    for k, i, j in itertools.product(range(m), repeat=3):
        expr = sum(
            Ginv[k, l] * (sp.diff(G[j, l], coords[i]) + sp.diff(G[i, l], coords[j]) - sp.diff(G[i, j], coords[l]))
            for l in range(m)
        ) / 2
        out[k, i, j] = float(expr.subs(subs))
    return out


def solenoid_step(x):
    th, u, v, z = x
    return np.array([(2 * th) % (2 * math.pi), u / 10 + math.cos(th) / 10, v / 10 + math.sin(th) / 10, z])


def solenoid_jac(x):
    th = x[0]
    J = np.eye(4)
    J[:3, :3] = [[2, 0, 0], [-math.sin(th) / 10, 0.1, 0], [math.cos(th) / 10, 0, 0.1]]
    return J


def solenoid_product(x, n):
    """(end point, DF^n) for the lifted solenoid by direct iteration."""
    J = np.eye(4)
    for _ in range(n):
        J = solenoid_jac(x) @ J
        x = solenoid_step(x)
    return x, J


def solenoid_backward_point(x, n):
    """``F^-n(x)`` for a point of the attractor: the preimage branch is the one whose disk holds (u, v)."""
    for _ in range(n):
        th, u, v, z = x
        best = None
        for t in (th / 2, th / 2 + math.pi):
            r = (u - math.cos(t) / 10) ** 2 + (v - math.sin(t) / 10) ** 2
            if best is None or r < best[0]:
                best = (r, t)
        t = best[1]
        x = np.array([t, 10 * (u - math.cos(t) / 10), 10 * (v - math.sin(t) / 10), z])
    return x


def svd_unstable(x, n=10):
    """Top left singular vector of the n-step product ending at x."""
    x0 = solenoid_backward_point(np.asarray(x, float), n)
    _, J = solenoid_product(x0, n)
    U, _, _ = np.linalg.svd(J)
    return U[:, :1].T


def svd_stable(x, n=10):
    """Right singular vectors of the two smallest singular values of the n-step product starting at x."""
    _, J = solenoid_product(np.asarray(x, float), n)
    _, _, Vt = np.linalg.svd(J)
    return Vt[-2:]


def svd_unstable_rate(x, n=10):
    """Per-step backward contraction of |g| on E^u: sigma_max(DF^n)^(-2/n)."""
    x0 = solenoid_backward_point(np.asarray(x, float), n)
    _, J = solenoid_product(x0, n)
    return np.linalg.svd(J[:3, :3], compute_uv=False)[0] ** (-2.0 / n)


def span_gap(A, B):
    """Largest principal-angle sine between row spans."""
    Qa, _ = np.linalg.qr(np.atleast_2d(A).T)
    Qb, _ = np.linalg.qr(np.atleast_2d(B).T)
    s = np.linalg.svd(Qa.T @ Qb, compute_uv=False)
    return float(math.sqrt(max(0.0, 1.0 - min(s.min(), 1.0) ** 2)))


def brute_basis_distance(G, E, F):
    """Difference-based max-min distance between row sets at one point, by explicit loops."""
    def one_side(X, Y):
        worst = 0.0
        for x in X:
            best = math.inf
            for y in Y:
                d = x - y
                best = min(best, abs(sum(d[a] * G[a][b] * d[b] for a in range(len(d)) for b in range(len(d)))))
            worst = max(worst, best)
        return worst

    return max(one_side(E, F), one_side(F, E))


def brute_cloud_distance(G, A, B):
    def one_side(X, Y):
        return max(min(abs(float(x @ G @ y)) for y in Y) for x in X)

    return max(one_side(A, B), one_side(B, A))


def linkage_clusters(points, gap):
    """Single-linkage cluster count from scipy's hierarchical clustering."""
    pts = np.asarray(points, float)
    if len(pts) < 2:
        return len(pts)
    return int(fcluster(linkage(pts, "single"), gap, "distance").max())
