"""Non-stationary systems F = (f_i) on a finite index window, their compositions and Jacobian chains."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .geometry import ChartPoint, GeometryError, TangentVector

DEFAULT_WINDOW = (-20, 20)
FD_STEP = 1e-6


class WindowError(GeometryError):
    pass


class SingularJacobianError(GeometryError):
    pass


@dataclass(frozen=True)
class FamilyMap:
    """Maps ``f_i: M_i -> M_{i+1}`` for ``i_min <= i < i_max``, with inverses and Jacobians.

    ``forward(i, x)`` and ``inverse(i, y)`` act on chart coordinates;
    ``inverse(i, .)`` undoes ``forward(i, .)``, i.e. maps ``M_{i+1}`` back to
    ``M_i``. Coordinates flagged in ``periodic`` are angles in [0, 2pi); the
    finite-difference Jacobian unwraps them so it is the universal-cover
    derivative.
    """

    window: tuple[int, int]
    forward: Callable[[int, np.ndarray], np.ndarray]
    inverse: Callable[[int, np.ndarray], np.ndarray]
    jacobian: Optional[Callable[[int, np.ndarray], np.ndarray]] = None
    name: str = "family"
    periodic: tuple[int, ...] = field(default=())

    def __post_init__(self):
        a, b = self.window
        if a > b:
            raise WindowError(f"empty window [{a}, {b}]")
        object.__setattr__(self, "window", (int(a), int(b)))

    def _need_map(self, j: int):
        a, b = self.window
        if not (a <= j <= b - 1):
            raise WindowError(f"f_{j} is outside the window [{a}, {b}]")

    def f(self, i: int, x) -> np.ndarray:
        self._need_map(i)
        return np.asarray(self.forward(i, np.asarray(x, dtype=float)), dtype=float)

    def f_inv(self, i: int, y) -> np.ndarray:
        """``f_i^{-1}``: coordinates on ``M_{i+1}`` to coordinates on ``M_i``."""
        self._need_map(i)
        return np.asarray(self.inverse(i, np.asarray(y, dtype=float)), dtype=float)

    def df(self, i: int, x) -> np.ndarray:
        self._need_map(i)
        x = np.asarray(x, dtype=float)
        if self.jacobian is not None:
            return np.asarray(self.jacobian(i, x), dtype=float)
        return self.fd_jacobian(i, x)

    def fd_jacobian(self, i: int, x, step: float = FD_STEP) -> np.ndarray:
        self._need_map(i)
        x = np.asarray(x, dtype=float)
        m = x.shape[0]
        J = np.empty((m, m))
        for k in range(m):
            h = step * max(1.0, abs(x[k]))
            xp = x.copy()
            xm = x.copy()
            xp[k] += h
            xm[k] -= h
            diff = np.asarray(self.forward(i, xp), dtype=float) - np.asarray(self.forward(i, xm), dtype=float)
            for a in self.periodic:
                diff[a] = math.remainder(diff[a], 2 * math.pi)
            J[:, k] = diff / (2 * h)
        return J

    def contains_index(self, i: int) -> bool:
        return self.window[0] <= i <= self.window[1]


@dataclass(frozen=True, eq=False)
class OrbitSegment:
    start: int
    points: tuple[ChartPoint, ...]

    @property
    def end(self) -> int:
        return self.start + len(self.points) - 1

    def at(self, k: int) -> ChartPoint:
        if not self.start <= k <= self.end:
            raise WindowError(f"index {k} not in orbit segment [{self.start}, {self.end}]")
        return self.points[k - self.start]

    def check(self, F: FamilyMap, atol: float = 1e-9) -> float:
        """Largest mismatch ``|f_k(p_k) - p_{k+1}|`` along the segment (angles compared mod 2pi)."""
        worst = 0.0
        for k in range(self.start, self.end):
            d = F.f(k, self.at(k).coords) - self.at(k + 1).coords
            for a in F.periodic:
                d[a] = math.remainder(d[a], 2 * math.pi)
            worst = max(worst, float(np.max(np.abs(d), initial=0.0)))
        if worst > atol:
            raise GeometryError(f"orbit segment violates the map relation by {worst:.3e}")
        return worst


def _check_point(F: FamilyMap, i: int, p: ChartPoint):
    if p.component != i:
        raise GeometryError(f"point lives in M_{p.component}, expected M_{i}")
    if not F.contains_index(i):
        raise WindowError(f"M_{i} is outside the window {F.window}")


def orbit(F: FamilyMap, i: int, n: int, p: ChartPoint) -> list[ChartPoint]:
    """``[p, F_i^{+-1}(p), ..., F_i^n(p)]``, stepping forward for n > 0 and backward for n < 0."""
    _check_point(F, i, p)
    pts = [p]
    x = p.coords
    if n >= 0:
        for j in range(i, i + n):
            x = F.f(j, x)
            pts.append(ChartPoint(j + 1, x))
    else:
        for j in range(i - 1, i + n - 1, -1):
            x = F.f_inv(j, x)
            pts.append(ChartPoint(j, x))
    return pts


def orbit_segment(F: FamilyMap, i: int, n: int, p: ChartPoint) -> OrbitSegment:
    pts = orbit(F, i, n, p)
    if n < 0:
        return OrbitSegment(i + n, tuple(reversed(pts)))
    return OrbitSegment(i, tuple(pts))


def compose(F: FamilyMap, i: int, n: int, p: ChartPoint) -> ChartPoint:
    return orbit(F, i, n, p)[-1]


def jacobian_chain(F: FamilyMap, i: int, n: int, p: ChartPoint) -> np.ndarray:
    """Matrix of ``D_p F_i^n`` by the chain rule along the (forward or backward) orbit of ``p``."""
    pts = orbit(F, i, n, p)
    J = np.eye(p.dim)
    if n >= 0:
        for q in pts[:-1]:
            J = F.df(q.component, q.coords) @ J
    else:
        for q in pts[1:]:
            D = F.df(q.component, q.coords)
            try:
                J = np.linalg.solve(D, J)
            except np.linalg.LinAlgError as exc:
                raise SingularJacobianError(f"singular Jacobian of f_{q.component} at {q!r}") from exc
    if not np.all(np.isfinite(J)):
        raise SingularJacobianError(f"non-finite Jacobian chain from {p!r}, n={n}")
    return J


def jacobian_sequence(F: FamilyMap, i: int, n: int, p: ChartPoint) -> list[np.ndarray]:
    """``[D_p F_i^k for k = 0..n]`` (or ``0..-|n|``), built incrementally along one orbit."""
    pts = orbit(F, i, n, p)
    J = np.eye(p.dim)
    out = [J]
    if n >= 0:
        for q in pts[:-1]:
            J = F.df(q.component, q.coords) @ J
            out.append(J)
    else:
        for q in pts[1:]:
            J = np.linalg.solve(F.df(q.component, q.coords), J)
            out.append(J)
    return out


def pushforward(F: FamilyMap, i: int, n: int, v: TangentVector) -> TangentVector:
    q = compose(F, i, n, v.base)
    return TangentVector(q, jacobian_chain(F, i, n, v.base) @ v.components)


def roundtrip_error(F: FamilyMap, i: int, points: Sequence[np.ndarray]) -> float:
    """Largest ``|f_i^{-1}(f_i(x)) - x|`` over ``points`` (angles compared mod 2pi)."""
    worst = 0.0
    for x in points:
        d = F.f_inv(i, F.f(i, x)) - np.asarray(x, dtype=float)
        for a in F.periodic:
            d[a] = math.remainder(d[a], 2 * math.pi)
        worst = max(worst, float(np.max(np.abs(d))))
    return worst


def jacobian_fd_error(F: FamilyMap, i: int, points: Sequence[np.ndarray]) -> float:
    """Largest relative gap between ``F.df`` and a central-difference Jacobian."""
    worst = 0.0
    for x in points:
        J = F.df(i, x)
        fd = F.fd_jacobian(i, x)
        worst = max(worst, float(np.max(np.abs(J - fd)) / max(1.0, np.max(np.abs(J)))))
    return worst
