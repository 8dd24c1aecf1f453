"""Metric projections onto closed convex sets and Dykstra's algorithm."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .hilbert import (
    TOL_NUM,
    GridFunction,
    HilbertElement,
    RkhsElement,
    compact,
    inner,
    norm,
    scale,
)


def project_ball(x: HilbertElement, radius: float = 1.0) -> HilbertElement:
    """Radial projection onto ``{x : |x| <= radius}``: ``x / max(|x| / radius, 1)``."""
    if not radius > 0:
        raise ValueError("ball radius must be positive")
    nx = norm(x)
    if nx <= radius:
        return x
    return scale(radius / nx, x)


def project_hyperplane(x: HilbertElement, u: HilbertElement, eta: float) -> HilbertElement:
    """Projection onto ``{x : <x, u> = eta}``."""
    uu = inner(u, u)
    if not uu > 0:
        raise ValueError("hyperplane normal must be nonzero")
    return compact(x + ((eta - inner(x, u)) / uu) * u)


def project_nonneg(q: GridFunction) -> GridFunction:
    if not isinstance(q, GridFunction):
        raise TypeError("the nonnegative cone is only defined for grid functions")
    return GridFunction(q.grid, np.maximum(q.values, 0.0))


@dataclass(frozen=True)
class Ball:
    radius: float = 1.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")

    def project(self, x):
        return project_ball(x, self.radius)

    def violation(self, x) -> float:
        return max(norm(x) - self.radius, 0.0)

    def _project_values(self, v, measure):
        nv = np.sqrt(max(np.dot(measure * v, v), 0.0))
        return v if nv <= self.radius else v * (self.radius / nv)


@dataclass(frozen=True, eq=False)
class Hyperplane:
    normal: HilbertElement
    level: float
    normal_sq: float = field(init=False, repr=False)

    def __post_init__(self):
        uu = inner(self.normal, self.normal)
        if not uu > 0:
            raise ValueError("hyperplane normal must be nonzero")
        object.__setattr__(self, "normal_sq", uu)

    def project(self, x):
        return compact(x + ((self.level - inner(x, self.normal)) / self.normal_sq) * self.normal)

    def violation(self, x) -> float:
        # distance to the plane
        return abs(inner(x, self.normal) - self.level) / np.sqrt(self.normal_sq)

    def _project_values(self, v, measure):
        u = self.normal.values
        return v + ((self.level - np.dot(measure * v, u)) / self.normal_sq) * u


@dataclass(frozen=True)
class NonnegativeCone:
    def project(self, x):
        return project_nonneg(x)

    def violation(self, x) -> float:
        neg = np.minimum(x.values, 0.0)
        return float(np.sqrt(np.dot(x.grid.measure * neg, neg)))

    def _project_values(self, v, measure):
        return np.maximum(v, 0.0)


@dataclass(frozen=True)
class ProjectionReport:
    point: HilbertElement
    cycles_used: int = 0
    last_cycle_displacement: float = 0.0
    epsilon_estimate: float = 0.0
    converged: bool = True
    displacements: tuple = ()


@dataclass(frozen=True)
class Intersection:
    """Intersection of projectable sets, resolved by Dykstra's algorithm.

    The intersection must be nonempty; that is assumed, not checked.
    """

    sets: tuple
    tol: float = 1e-8
    max_cycles: int = 10_000

    def __post_init__(self):
        object.__setattr__(self, "sets", tuple(self.sets))
        if not self.sets:
            raise ValueError("intersection of zero sets")

    def project(self, x):
        return self.report(x).point

    def report(self, x, tol=None) -> ProjectionReport:
        return dykstra(self.sets, x, self.tol if tol is None else tol, self.max_cycles)

    def violation(self, x) -> float:
        return max(s.violation(x) for s in self.sets)


ConstraintSet = Ball | Hyperplane | NonnegativeCone | Intersection


def project(constraint, x, tol=None) -> ProjectionReport:
    """Project x and report; elementary sets are exact (zero epsilon)."""
    if isinstance(constraint, Intersection):
        return constraint.report(x, tol)
    return ProjectionReport(constraint.project(x), cycles_used=1)


def _tidy(x):
    # coincident-center merge keeps RKHS expansions from growing every cycle
    return compact(x) if isinstance(x, RkhsElement) else x


def dykstra(
    sets: Sequence, x0: HilbertElement, tol: float = 1e-8, max_cycles: int = 10_000
) -> ProjectionReport:
    """Dykstra's cyclic projections with correction terms.

    One cycle visits the sets in list order; for set i the update is
    ``x <- P_i(x + q_i)``, ``q_i <- (x_old + q_i) - x``. Stops once a cycle
    moves the iterate by at most ``tol`` (reported as ``epsilon_estimate``, a
    heuristic surrogate for the distance to the true projection) or after
    ``max_cycles`` with ``converged=False``.
    """
    sets = list(sets)
    if not sets:
        raise ValueError("dykstra needs at least one set")
    if tol < 0 or max_cycles < 1:
        raise ValueError("need tol >= 0 and max_cycles >= 1")
    if isinstance(x0, GridFunction) and all(hasattr(s, "_project_values") for s in sets):
        return _dykstra_grid(sets, x0, tol, max_cycles)

    x = x0
    q = [None] * len(sets)
    displacements = []
    for cycle in range(1, max_cycles + 1):
        start = x
        for i, s in enumerate(sets):
            y = x if q[i] is None else _tidy(x + q[i])
            x = _tidy(s.project(y))
            q[i] = _tidy(y - x)
        d = norm(_tidy(x - start))
        displacements.append(d)
        if d <= tol:
            return ProjectionReport(x, cycle, d, d, True, tuple(displacements))
    return ProjectionReport(x, max_cycles, d, d, False, tuple(displacements))


def _dykstra_grid(sets, x0, tol, max_cycles):
    measure = x0.grid.measure
    x = x0.values.copy()
    q = np.zeros((len(sets), x.size))
    displacements = []
    for cycle in range(1, max_cycles + 1):
        start = x
        for i, s in enumerate(sets):
            y = x + q[i]
            x = s._project_values(y, measure)
            q[i] = y - x
        diff = x - start
        d = float(np.sqrt(max(np.dot(measure * diff, diff), 0.0)))
        displacements.append(d)
        if d <= tol:
            break
    point = GridFunction(x0.grid, x)
    return ProjectionReport(point, cycle, d, d, d <= tol, tuple(displacements))
