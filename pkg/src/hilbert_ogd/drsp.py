"""Distributionally robust stochastic programming over densities.

Problem: ``min_{x in X} max_{p in P} E_p[(x^T xi)^2]`` with xi supported on
the quarter disk ``C = {x^2 + y^2 <= 1, x, y >= 0}``. Densities are grid
functions on a quadrature grid of ``[0, 1]^2`` masked to C.

The optimization problem is reduced to decision problems by bisection on
the value ``b``. Each decision problem runs functional dual gradient ascent
on the density (online gradient descent on ``-g(x_t, .)`` against an
adaptive adversary that answers with a finite-dimensional oracle).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .engine import OgdConfig, ProjectionQualityError, run_online
from .hilbert import TOL_PSD, GridFunction, QuadratureGrid, norm
from .projections import Ball, Hyperplane, Intersection, NonnegativeCone, project

UNIFORM_MEAN = 4.0 / (3.0 * math.pi)


class OracleUndecided(RuntimeError):
    """The oracle's certificate gap did not close within its budget."""


class BracketError(RuntimeError):
    """Bisection verdicts contradict the caller's bracket."""


# -- quadrature -------------------------------------------------------------


def _circle_antiderivatives(x):
    """Antiderivatives of sqrt(1-x^2), x sqrt(1-x^2) and (1-x^2)/2."""
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    return (x * s + np.arcsin(np.clip(x, -1.0, 1.0))) / 2.0, -(s**3) / 3.0, (x - x**3 / 3.0) / 2.0


def _cut_cell(x0, x1, y0, y1):
    """Exact area and first moments of ``[x0, x1] x [y0, y1] ∩ unit disk`` (first quadrant)."""
    b1 = math.sqrt(max(1.0 - y1 * y1, 0.0))  # circle height equals y1
    b2 = math.sqrt(max(1.0 - y0 * y0, 0.0))  # circle height equals y0
    area = mx = my = 0.0
    # full-height part: x in [x0, min(x1, b1)]
    lo, hi = x0, min(x1, b1)
    if hi > lo:
        area += (hi - lo) * (y1 - y0)
        mx += (hi * hi - lo * lo) / 2.0 * (y1 - y0)
        my += (hi - lo) * (y1 * y1 - y0 * y0) / 2.0
    # arc part: height sqrt(1 - x^2) - y0 for x in [max(x0, b1), min(x1, b2)]
    lo, hi = max(x0, b1), min(x1, b2)
    if hi > lo:
        (a_hi, xm_hi, y2_hi), (a_lo, xm_lo, y2_lo) = (
            _circle_antiderivatives(hi),
            _circle_antiderivatives(lo),
        )
        area += (a_hi - a_lo) - y0 * (hi - lo)
        mx += (xm_hi - xm_lo) - y0 * (hi * hi - lo * lo) / 2.0
        my += (y2_hi - y2_lo) - y0 * y0 * (hi - lo) / 2.0
    return area, mx, my


def quarter_disk_grid(resolution: int = 64, rule: str = "cut_cell") -> QuadratureGrid:
    """Quadrature grid on ``[0, 1]^2`` masked to the quarter disk.

    ``midpoint``: cell-center nodes, weight = cell area, mask = center in C.
    ``cut_cell``: each cell meeting C gets weight = exact area of the cell
    inside C and node = centroid of that piece, so constants and linear
    functions integrate exactly over C. Cells missing C keep their center
    and full area but are masked out.
    """
    if resolution < 1:
        raise ValueError("grid resolution must be positive")
    if rule == "midpoint":
        return QuadratureGrid.box(
            [0.0, 0.0], [1.0, 1.0], resolution, lambda z: (z * z).sum(axis=1) <= 1.0
        )
    if rule != "cut_cell":
        raise ValueError(f"unknown quadrature rule {rule!r}")
    h = 1.0 / resolution
    n = resolution * resolution
    nodes = np.empty((n, 2))
    weights = np.full(n, h * h)
    mask = np.zeros(n, dtype=bool)
    k = 0
    for i in range(resolution):
        x0, x1 = i * h, (i + 1) * h
        for j in range(resolution):
            y0, y1 = j * h, (j + 1) * h
            nodes[k] = (x0 + h / 2, y0 + h / 2)
            if x1 * x1 + y1 * y1 <= 1.0:
                mask[k] = True
            elif x0 * x0 + y0 * y0 < 1.0:
                area, mx, my = _cut_cell(x0, x1, y0, y1)
                if area > 1e-14 * h * h:
                    weights[k], nodes[k], mask[k] = area, (mx / area, my / area), True
            k += 1
    return QuadratureGrid(nodes, weights, mask)


def density_moments(p: GridFunction):
    """``(E_p[xi], E_p[xi xi^T])`` by quadrature over in-domain nodes."""
    w = p.grid.measure * p.values
    pts = p.grid.nodes
    return pts.T @ w, (pts * w[:, None]).T @ pts


def dual_density_gradient(x, p: GridFunction) -> GridFunction:
    """Gradient in p of ``E_p[(x^T xi)^2]``: ``chi_C (x^T t)^2``."""
    x = np.asarray(x, dtype=float)
    return GridFunction(p.grid, (p.grid.nodes @ x) ** 2 * p.grid.mask)


def g_value(x, p: GridFunction, b: float) -> float:
    """``E_p[(x^T xi)^2] - b`` (p taken as normalized)."""
    _, M = density_moments(p)
    x = np.asarray(x, dtype=float)
    return float(x @ M @ x) - b


# -- uncertainty set ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class UncertaintySet:
    """Densities with mean ``b``, nonnegative, integrating to 1, and ``|p| <= radius``.

    ``radius`` defaults to sqrt(2), i.e. ``∫_C p^2 <= 2``.
    """

    grid: QuadratureGrid
    mean: tuple = (UNIFORM_MEAN, UNIFORM_MEAN)
    radius: float = math.sqrt(2.0)
    dykstra_tol: float = 1e-8
    max_cycles: int = 10_000

    def __post_init__(self):
        object.__setattr__(self, "mean", tuple(float(m) for m in self.mean))
        chi = self.grid.indicator()
        # t_i chi_C
        moment = [GridFunction(self.grid, self.grid.nodes[:, i] * chi.values) for i in (0, 1)]
        sets = (
            Hyperplane(moment[0], self.mean[0]),
            Hyperplane(moment[1], self.mean[1]),
            NonnegativeCone(),
            Hyperplane(chi, 1.0),
            Ball(self.radius),
        )
        object.__setattr__(self, "sets", sets)

    @classmethod
    def quarter_disk(cls, resolution=64, mean=None, rule="cut_cell", **kw):
        grid = quarter_disk_grid(resolution, rule)
        if mean is None:
            mean = tuple(density_moments(uniform_density(grid))[0])
        return cls(grid, mean, **kw)

    def constraint_set(self, tol=None) -> Intersection:
        return Intersection(self.sets, self.dykstra_tol if tol is None else tol, self.max_cycles)

    def violations(self, p: GridFunction) -> dict:
        """Distance-type violation of each of the five constraints."""
        return {f"P{i + 1}": s.violation(p) for i, s in enumerate(self.sets)}

    def contains(self, p: GridFunction, tol: float = 1e-6) -> bool:
        return all(v <= tol for v in self.violations(p).values())

    def uniform(self) -> GridFunction:
        return uniform_density(self.grid)

    def gradient_bound(self) -> float:
        """``max_{|x| <= 1} |chi (x^T t)^2| <= sqrt(∫_C |xi|^4)``."""
        r2 = (self.grid.nodes**2).sum(axis=1)
        return float(np.sqrt(np.dot(self.grid.measure, r2 * r2)))


def uniform_density(grid: QuadratureGrid) -> GridFunction:
    area = float(grid.measure.sum())
    return GridFunction(grid, grid.mask / area)


# -- decision oracles --------------------------------------------------------


@dataclass(frozen=True)
class OracleAnswer:
    """``x`` is None for an infeasibility verdict; bounds bracket ``min g``."""

    x: Optional[np.ndarray]
    upper: float
    lower: float

    @property
    def feasible(self) -> bool:
        return self.x is not None


def _check_psd(M):
    M = np.asarray(M, dtype=float)
    if M.shape != (2, 2) or not np.allclose(M, M.T, atol=1e-12):
        raise ValueError("M must be a symmetric 2x2 matrix")
    if np.linalg.eigvalsh(M).min() < -TOL_PSD:
        raise ValueError("M is not positive semidefinite")
    return (M + M.T) / 2.0


def quadratic_ball_oracle(M, b: float, delta: float) -> OracleAnswer:
    """Unit-ball decision set: ``min x^T M x - b`` is ``-b`` at the origin."""
    _check_psd(M)
    if -b <= delta:
        return OracleAnswer(np.zeros(2), -b, -b)
    return OracleAnswer(None, -b, -b)


@dataclass(frozen=True)
class AffineSlice:
    """``{x in R^2 : a^T x = r, |x| <= 1}``, a segment."""

    a: tuple
    r: float

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        if a.shape != (2,) or not np.linalg.norm(a) > 0:
            raise ValueError("slice normal must be a nonzero 2-vector")
        foot = self.r * a / (a @ a)
        if foot @ foot > 1.0:
            raise ValueError("slice misses the unit ball")
        object.__setattr__(self, "a", tuple(a))

    @property
    def foot(self) -> np.ndarray:
        a = np.asarray(self.a)
        return self.r * a / (a @ a)

    @property
    def direction(self) -> np.ndarray:
        a = np.asarray(self.a)
        return np.array([-a[1], a[0]]) / np.linalg.norm(a)

    @property
    def half_length(self) -> float:
        f = self.foot
        return math.sqrt(max(1.0 - f @ f, 0.0))

    def endpoints(self):
        f, d, s = self.foot, self.direction, self.half_length
        return f - s * d, f + s * d

    def point(self, s):
        return self.foot + np.multiply.outer(s, self.direction)

    def project(self, x):
        s = np.clip((np.asarray(x) - self.foot) @ self.direction, -self.half_length, self.half_length)
        return self.point(s)


def minimize_on_slice(M, slice_: AffineSlice, gap_tol: float = 1e-10, max_iter: int = 10_000):
    """Projected gradient descent for ``x^T M x`` on the slice.

    Returns ``(x, upper, lower)``: ``upper`` is the best value found and
    ``lower`` a certified lower bound from the linear minorant at the
    current point minimized over the segment's endpoints.
    """
    M = _check_psd(M)
    L = 2.0 * max(np.linalg.eigvalsh(M).max(), 1e-12)
    ends = slice_.endpoints()
    x = slice_.foot.copy()
    best_x, best = x, float(x @ M @ x)
    lower = -np.inf
    for _ in range(max_iter):
        fx = float(x @ M @ x)
        grad = 2.0 * M @ x
        lower = max(lower, min(fx + grad @ (e - x) for e in ends))
        if fx < best:
            best_x, best = x, fx
        if best - lower <= gap_tol:
            break
        x = slice_.project(x - grad / L)
    return best_x, best, lower


def affine_slice_oracle(M, b: float, delta: float, slice_: AffineSlice, max_iter=10_000):
    """Return x with value ``<= delta / 2``, or certify ``min > 0``."""
    x, upper, lower = minimize_on_slice(M, slice_, gap_tol=min(1e-10, delta / 4), max_iter=max_iter)
    if upper - b <= delta / 2:
        return OracleAnswer(x, upper - b, lower - b)
    if lower - b > 0:
        return OracleAnswer(None, upper - b, lower - b)
    raise OracleUndecided(
        f"certificate gap [{lower - b:.3g}, {upper - b:.3g}] straddles (0, delta/2]"
    )


@dataclass(frozen=True)
class BallOracle:
    def __call__(self, M, b, delta):
        return quadratic_ball_oracle(M, b, delta)

    def minimum(self, M) -> float:
        return 0.0


@dataclass(frozen=True)
class SliceOracle:
    slice: AffineSlice

    def __call__(self, M, b, delta):
        return affine_slice_oracle(M, b, delta, self.slice)

    def minimum(self, M) -> float:
        return minimize_on_slice(M, self.slice)[1]


# -- Algorithm: decision problem and bisection --------------------------------


@dataclass
class DrspInstance:
    uncertainty: UncertaintySet
    oracle: object = field(default_factory=BallOracle)
    delta: float = 0.05
    G: Optional[float] = None
    bracket: tuple = (0.0, 1.0)
    bracket_tol: float = 1e-2
    eps: float = 1e-6
    rounds: Optional[int] = None

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        lo, hi = self.bracket
        if lo > hi:
            raise ValueError("bracket must satisfy lo <= hi")
        if self.G is None:
            self.G = self.uncertainty.gradient_bound()

    def schedule(self) -> tuple[int, list]:
        """Horizon and noise schedule with ``RG/sqrt(T) + (2 sqrt(R eps) + eps) G <= delta``."""
        R, G, d, e = self.uncertainty.radius, self.G, self.delta, self.eps
        noise = (2.0 * math.sqrt(R * e) + e) * G
        if self.rounds is not None:
            T = int(self.rounds)
            if R * G / math.sqrt(T) + noise > d:
                raise ValueError(
                    f"{T} rounds with eps={e:g} cannot reach delta={d:g}; "
                    f"need T >= {math.ceil((R * G / (d - noise)) ** 2) if noise < d else 'inf'}"
                )
        else:
            if noise >= d:
                raise ValueError("projection noise alone exceeds delta; lower eps")
            T = max(1, math.ceil((R * G / (d - noise)) ** 2))
        return T, [e] * T


@dataclass(frozen=True)
class TraceRow:
    t: int
    g: float
    eps_est: float


@dataclass
class Decision:
    verdict: str
    b: float
    x_bar: Optional[np.ndarray]
    xs: list
    trace: list
    T: int
    step_size: float
    densities: list
    flagged: Optional[GridFunction] = None
    answer: Optional[OracleAnswer] = None

    @property
    def yes(self) -> bool:
        return self.verdict == "YES"

    @property
    def average_g(self) -> float:
        return float(np.mean([r.g for r in self.trace])) if self.trace else 0.0


class _Infeasible(Exception):
    def __init__(self, t, p, answer):
        self.t, self.p, self.answer = t, p, answer


@dataclass(frozen=True)
class _NegatedExpectation:
    """``-g(x, p)`` as a cost in p; gradient ``-chi (x^T t)^2``."""

    x: np.ndarray
    b: float

    def value(self, p):
        return -g_value(self.x, p, self.b)

    def gradient(self, p):
        return -1.0 * dual_density_gradient(self.x, p)


def decide_feasibility(instance: DrspInstance, b: float, p0: Optional[GridFunction] = None) -> Decision:
    """Decide ``∃ x: E_p[f(x, xi)] <= b for all p`` up to 2 delta.

    p_1 is (a projection of) ``p0``, the uniform density by default. Round
    t plays p_t, asks the oracle for x_t, and takes a noisy projected ascent
    step ``p_{t+1} ≈ P(p_t + eta chi (x_t^T t)^2)``.
    """
    uset = instance.uncertainty
    T, eps = instance.schedule()
    cset = uset.constraint_set(tol=instance.eps)
    if p0 is None:
        p0 = uset.uniform()
    first = project(cset, p0)
    if not first.converged:
        raise ProjectionQualityError("initial density projection did not converge", round_index=0)
    config = OgdConfig(
        R=uset.radius, G=instance.G, T=T, projection=cset, mode="noisy", eps=eps
    )
    xs, gvals, densities = [], [], []

    def adversary(t, p):
        _, M = density_moments(p)
        ans = instance.oracle(M, b, instance.delta)
        if not ans.feasible:
            raise _Infeasible(t, p, ans)
        xs.append(ans.x)
        gvals.append(g_value(ans.x, p, b))
        densities.append(p)
        return _NegatedExpectation(ans.x, b)

    try:
        run = run_online(adversary, config, first.point)
    except _Infeasible as no:
        ests = [first.epsilon_estimate] + [0.0] * (no.t - 1)
        trace = [TraceRow(t + 1, g, e) for t, (g, e) in enumerate(zip(gvals, ests))]
        return Decision(
            "NO", b, None, xs, trace, T, config.step_size, densities, no.p, no.answer
        )
    ests = [first.epsilon_estimate] + [r.eps_est for r in run.ledger.rows[:-1]]
    trace = [TraceRow(t + 1, g, e) for t, (g, e) in enumerate(zip(gvals, ests))]
    return Decision("YES", b, np.mean(xs, axis=0), xs, trace, T, run.step_size, densities)


@dataclass
class SearchResult:
    interval: tuple
    x_bar: Optional[np.ndarray]
    decisions: list

    @property
    def width(self) -> float:
        return self.interval[1] - self.interval[0]


def binary_search_optimize(instance: DrspInstance) -> SearchResult:
    """Bisect on b until the bracket is shorter than ``bracket_tol``.

    YES at b certifies value <= b + 2 delta, NO certifies value > b; the
    returned interval is ``[lo, hi + 2 delta]``.
    """
    lo, hi = map(float, instance.bracket)
    decisions, x_bar = [], None
    while hi - lo > instance.bracket_tol:
        mid = 0.5 * (lo + hi)
        d = decide_feasibility(instance, mid)
        decisions.append(d)
        if d.yes:
            hi, x_bar = mid, d.x_bar
        else:
            lo = mid
    if x_bar is None:
        d = decide_feasibility(instance, hi)
        decisions.append(d)
        if not d.yes:
            raise BracketError(f"NO at the bracket's upper end b={hi:g}; optimum lies above it")
        x_bar = d.x_bar
    return SearchResult((lo, hi + 2.0 * instance.delta), x_bar, decisions)


def worst_case_value(x, uset: UncertaintySet, b: float = 0.0, steps: int = 2000, tol=1e-9):
    """``max_p g(x, p)`` over the grid uncertainty set by projected gradient ascent.

    g is linear in p, so any fixed step converges to a maximizer; the value
    approaches the maximum from below.
    """
    v = dual_density_gradient(x, uset.uniform())
    nv = norm(v)
    if nv == 0.0:
        return -b, uset.uniform()
    cset = uset.constraint_set(tol=tol)
    p = cset.project(uset.uniform())
    step = uset.radius / nv
    best = g_value(x, p, b)
    for _ in range(steps):
        nxt = cset.project(p + step * v)
        moved = norm(nxt - p)
        p = nxt
        best = max(best, g_value(x, p, b))
        if moved <= tol:
            break
    return best, p


def write_trace(path, result: SearchResult) -> None:
    """Per-round rows of every decision call, then one final row."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "call", "b", "verdict", "t", "g", "eps_est",
                    "interval_lo", "interval_hi", "x1", "x2"])
        for i, d in enumerate(result.decisions, start=1):
            for r in d.trace:
                w.writerow(["round", i, repr(d.b), d.verdict, r.t, repr(r.g), repr(r.eps_est),
                            "", "", "", ""])
        x = result.x_bar if result.x_bar is not None else (float("nan"),) * 2
        w.writerow(["final", "", "", "", "", "", "", repr(result.interval[0]),
                    repr(result.interval[1]), repr(float(x[0])), repr(float(x[1]))])
