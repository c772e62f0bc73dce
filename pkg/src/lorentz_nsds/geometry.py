"""Lorentzian metrics on chart coordinates, Levi-Civita coefficients and parallel transport.

Every manifold component ``M_i`` is covered by a single chart, so a point is
just ``(component, coords)`` and a tangent vector is a coordinate vector at
such a point. Nothing here mutates its inputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

TOL_NULL = 1e-9
STEPS_PER_UNIT = 1000
DET_TOL = 1e-12


class GeometryError(ValueError):
    pass


class DegenerateMetricError(GeometryError):
    pass


def _frozen(x) -> np.ndarray:
    a = np.array(x, dtype=float).reshape(-1)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ChartPoint:
    component: int
    coords: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "component", int(self.component))
        object.__setattr__(self, "coords", _frozen(self.coords))

    @property
    def dim(self) -> int:
        return self.coords.shape[0]

    def close_to(self, other: "ChartPoint", atol: float = 1e-12) -> bool:
        return (
            self.component == other.component
            and self.dim == other.dim
            and bool(np.allclose(self.coords, other.coords, rtol=0.0, atol=atol))
        )

    def __repr__(self):
        return f"ChartPoint({self.component}, {np.array2string(self.coords, precision=6)})"


@dataclass(frozen=True, eq=False)
class TangentVector:
    base: ChartPoint
    components: np.ndarray

    def __post_init__(self):
        comps = _frozen(self.components)
        if comps.shape[0] != self.base.dim:
            raise GeometryError(
                f"vector has {comps.shape[0]} components but base point has dimension {self.base.dim}"
            )
        object.__setattr__(self, "components", comps)

    @property
    def dim(self) -> int:
        return self.components.shape[0]

    def is_zero(self) -> bool:
        return not np.any(self.components)

    def scaled(self, s: float) -> "TangentVector":
        return TangentVector(self.base, s * self.components)

    def __repr__(self):
        return f"TangentVector(at={self.base!r}, {np.array2string(self.components, precision=6)})"


def pairing(G: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """Bilinear form ``a^T G b``, symmetrised so that ``pairing(G, a, b) == pairing(G, b, a)`` bit for bit."""
    return float(0.5 * ((a @ G) @ b + (b @ G) @ a))


@dataclass(frozen=True)
class MetricField:
    """Per-component Lorentzian metric ``g_i`` in chart coordinates.

    ``matrix(i, x)`` returns the m x m metric matrix at coordinates ``x`` of
    component ``i``. ``derivative(i, x)``, when given, returns an (m, m, m)
    array whose slice ``[k]`` is the partial derivative of the matrix along
    ``x^k``; otherwise central differences are used.
    """

    matrix: Callable[[int, np.ndarray], np.ndarray]
    derivative: Optional[Callable[[int, np.ndarray], np.ndarray]] = None
    name: str = "metric"
    flat: bool = field(default=False, compare=False)

    @classmethod
    def constant(cls, G, name: str = "constant") -> "MetricField":
        G = np.array(G, dtype=float)
        G.setflags(write=False)
        m = G.shape[0]
        zeros = np.zeros((m, m, m))
        zeros.setflags(write=False)
        return cls(lambda i, x: G, lambda i, x: zeros, name=name, flat=True)

    def at(self, p: ChartPoint) -> np.ndarray:
        G = np.asarray(self.matrix(p.component, p.coords), dtype=float)
        if G.shape != (p.dim, p.dim):
            raise GeometryError(f"metric {self.name} returned shape {G.shape} at a {p.dim}-dim point")
        return G

    def derivatives_at(self, p: ChartPoint) -> np.ndarray:
        if self.derivative is not None:
            return np.asarray(self.derivative(p.component, p.coords), dtype=float)
        x = np.array(p.coords)
        m = x.shape[0]
        out = np.empty((m, m, m))
        for k in range(m):
            h = 1e-6 * max(1.0, abs(x[k]))
            xp = x.copy()
            xm = x.copy()
            xp[k] += h
            xm[k] -= h
            out[k] = (
                np.asarray(self.matrix(p.component, xp), dtype=float)
                - np.asarray(self.matrix(p.component, xm), dtype=float)
            ) / (2 * h)
        return out

    def signature(self, p: ChartPoint) -> tuple[int, int]:
        """(negative, positive) eigenvalue counts at ``p``."""
        w = np.linalg.eigvalsh(self.at(p))
        return int(np.sum(w < 0)), int(np.sum(w > 0))

    def timelike_axis(self, p: ChartPoint) -> int:
        """Eigen-direction index carrying the odd sign, mapped to the dominant coordinate axis.

        Either ``(-,+,...,+)`` or ``(+,...,+,-)`` conventions are accepted; the
        minority sign marks the timelike direction.
        """
        G = self.at(p)
        w, V = np.linalg.eigh(G)
        neg = w < 0
        pos = w > 0
        if neg.sum() + pos.sum() != len(w):
            raise DegenerateMetricError(f"degenerate metric at point {p!r}")
        if neg.sum() == 1:
            odd = int(np.flatnonzero(neg)[0])
        elif pos.sum() == 1:
            odd = int(np.flatnonzero(pos)[0])
        else:
            raise GeometryError(f"metric {self.name} is not Lorentzian at {p!r}: eigenvalues {w}")
        return int(np.argmax(np.abs(V[:, odd])))

    def is_lorentzian(self, p: ChartPoint) -> bool:
        G = self.at(p)
        if not np.allclose(G, G.T, atol=1e-12, rtol=0.0):
            return False
        neg, pos = self.signature(p)
        return p.dim > 1 and neg + pos == p.dim and min(neg, pos) == 1


def _common_base(v: TangentVector, w: TangentVector):
    if not v.base.close_to(w.base):
        raise GeometryError("vectors not at common point")


def metric_eval(g: MetricField, p: ChartPoint, v: TangentVector, w: TangentVector) -> float:
    if v.dim != w.dim or v.dim != p.dim:
        raise GeometryError(f"dimension mismatch: {v.dim}, {w.dim} at a {p.dim}-dim point")
    _common_base(v, w)
    if not v.base.close_to(p):
        raise GeometryError("vectors not at common point")
    return pairing(g.at(p), v.components, w.components)


def causal_classify(g: MetricField, v: TangentVector, tol_null: float = TOL_NULL) -> str:
    if v.is_zero():
        return "zero"
    q = pairing(g.at(v.base), v.components, v.components)
    if q < -tol_null:
        return "timelike"
    if q > tol_null:
        return "spacelike"
    return "null"


@dataclass(frozen=True, eq=False)
class ConnectionCoefficients:
    """``gamma[k, i, j]`` is the coefficient of ``d_k`` in ``nabla_{d_i} d_j``."""

    base: ChartPoint
    gamma: np.ndarray

    def torsion(self) -> float:
        return float(np.max(np.abs(self.gamma - self.gamma.transpose(0, 2, 1)), initial=0.0))


def _christoffel_array(G: np.ndarray, dG: np.ndarray, where) -> np.ndarray:
    if abs(np.linalg.det(G)) <= DET_TOL:
        raise DegenerateMetricError(f"degenerate metric at point {where!r}")
    if not np.any(dG):
        return np.zeros_like(dG)
    # dG[a, b, c] = d_a g_bc; term[l, i, j] = d_i g_jl + d_j g_il - d_l g_ij
    term = np.einsum("ijl->lij", dG) + np.einsum("jil->lij", dG) - dG
    return 0.5 * np.einsum("kl,lij->kij", np.linalg.inv(G), term)


def christoffel(g: MetricField, p: ChartPoint) -> ConnectionCoefficients:
    G = g.at(p)
    if g.flat:
        if abs(np.linalg.det(G)) <= DET_TOL:
            raise DegenerateMetricError(f"degenerate metric at point {p!r}")
        return ConnectionCoefficients(p, np.zeros((p.dim,) * 3))
    return ConnectionCoefficients(p, _christoffel_array(G, g.derivatives_at(p), p))


def torsion_check(g: MetricField, p: ChartPoint) -> float:
    return christoffel(g, p).torsion()


@dataclass(frozen=True)
class Curve:
    """Smooth curve inside one component, with its coordinate velocity."""

    component: int
    interval: tuple[float, float]
    position: Callable[[float], np.ndarray]
    velocity: Callable[[float], np.ndarray]

    def point(self, t: float) -> ChartPoint:
        return ChartPoint(self.component, self.position(t))

    def contains(self, t: float, slack: float = 1e-12) -> bool:
        a, b = self.interval
        return a - slack <= t <= b + slack

    def velocity_error(self, ts) -> float:
        """Largest relative mismatch between ``velocity`` and a central difference of ``position``."""
        worst = 0.0
        for t in ts:
            h = 1e-6 * max(1.0, abs(t))
            fd = (np.asarray(self.position(t + h)) - np.asarray(self.position(t - h))) / (2 * h)
            v = np.asarray(self.velocity(t), dtype=float)
            worst = max(worst, float(np.linalg.norm(fd - v) / max(1.0, np.linalg.norm(v))))
        return worst

    @classmethod
    def line(cls, component: int, start, direction, interval=(0.0, 1.0)) -> "Curve":
        start = np.array(start, dtype=float)
        direction = np.array(direction, dtype=float)
        return cls(component, interval, lambda t: start + t * direction, lambda t: direction)

    @classmethod
    def circle(cls, component: int, start, axis_a: int, axis_b: int, radius: float,
               interval=(0.0, 2 * math.pi)) -> "Curve":
        """Circle of given radius in the (axis_a, axis_b) coordinate plane, starting at ``start``."""
        start = np.array(start, dtype=float)

        def pos(t):
            x = start.copy()
            x[axis_a] += radius * (math.cos(t) - 1.0)
            x[axis_b] += radius * math.sin(t)
            return x

        def vel(t):
            v = np.zeros_like(start)
            v[axis_a] = -radius * math.sin(t)
            v[axis_b] = radius * math.cos(t)
            return v

        return cls(component, interval, pos, vel)


def _gamma_at(g: MetricField, component: int, x: np.ndarray, t: float) -> np.ndarray:
    p = ChartPoint(component, x)
    try:
        return christoffel(g, p).gamma
    except DegenerateMetricError as exc:
        raise DegenerateMetricError(f"degenerate metric along curve at t={t!r}") from exc


def transport_matrix(g: MetricField, curve: Curve, t0: float, t1: float,
                     steps_per_unit: int = STEPS_PER_UNIT) -> np.ndarray:
    """Matrix of the parallel-transport map from ``curve(t0)`` to ``curve(t1)``.

    Fixed-step classical RK4 on dY^k/dt = -Gamma^k_ij c'^i Y^j, applied to the
    identity so the result acts on any vector by matrix product.
    """
    if not (curve.contains(t0) and curve.contains(t1)):
        raise GeometryError(f"[{t0}, {t1}] not inside curve interval {curve.interval}")
    m = np.asarray(curve.position(t0)).shape[0]
    Y = np.eye(m)
    if t1 == t0:
        return Y
    n = max(1, int(math.ceil(steps_per_unit * abs(t1 - t0))))
    h = (t1 - t0) / n
    comp = curve.component

    if g.flat:
        _gamma_at(g, comp, np.asarray(curve.position(t0), dtype=float), t0)
        return Y

    def coeffs(t):
        vel = np.asarray(curve.velocity(t), dtype=float)
        gam = _gamma_at(g, comp, np.asarray(curve.position(t), dtype=float), t)
        return np.einsum("kij,i->kj", gam, vel)

    # the two midpoint stages share one evaluation, and each step's end is the next step's start
    A0 = coeffs(t0)
    for s in range(n):
        t = t0 + s * h
        Am = coeffs(t + h / 2)
        A1 = coeffs(t0 + (s + 1) * h)
        k1 = -A0 @ Y
        k2 = -Am @ (Y + h / 2 * k1)
        k3 = -Am @ (Y + h / 2 * k2)
        k4 = -A1 @ (Y + h * k3)
        Y = Y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        A0 = A1
    return Y


def parallel_transport(g: MetricField, curve: Curve, v: TangentVector, t0: float, t1: float,
                       steps_per_unit: int = STEPS_PER_UNIT) -> TangentVector:
    start = curve.point(t0)
    if not v.base.close_to(start, atol=1e-9):
        raise GeometryError(f"vector based at {v.base!r}, curve passes {start!r} at t={t0}")
    if t1 == t0:
        return v
    P = transport_matrix(g, curve, t0, t1, steps_per_unit)
    return TangentVector(curve.point(t1), P @ v.components)


# ---------------------------------------------------------------- presets

def flat4() -> MetricField:
    return MetricField.constant(np.diag([1.0, 1.0, 1.0, -1.0]), name="flat4")


def polar_metric() -> MetricField:
    """Euclidean plane in (r, theta): dr^2 + r^2 dtheta^2."""
    return MetricField(lambda i, x: np.diag([1.0, x[0] ** 2]), name="polar")


def sphere_metric() -> MetricField:
    """Unit sphere in (theta, phi): dtheta^2 + sin^2(theta) dphi^2."""
    return MetricField(lambda i, x: np.diag([1.0, math.sin(x[0]) ** 2]), name="sphere")


def warped_lorentz_metric() -> MetricField:
    """Curved Lorentzian metric -dt^2 + e^{t} (dx^2 + dy^2) + (1 + x^2) dz^2."""
    def matrix(i, x):
        a = math.exp(x[0])
        return np.diag([-1.0, a, a, 1.0 + x[1] ** 2])

    return MetricField(matrix, name="curved4")


METRIC_PRESETS = {
    "flat4": flat4,
    "polar": polar_metric,
    "sphere": sphere_metric,
    "curved4": warped_lorentz_metric,
}
