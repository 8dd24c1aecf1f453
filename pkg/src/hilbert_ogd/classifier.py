"""Online classifier selection in an RKHS with squared loss.

Feasible set: ``{f : <f, g_i> = a_i for all i} ∩ {|f| <= R}``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .engine import OgdConfig, OnlineRun, run_online, run_online_calibrated
from .hilbert import RkhsElement, KernelSpec, compact, evaluate, gram, inner
from .projections import Ball, Hyperplane, Intersection


@dataclass(frozen=True)
class Sample:
    x: np.ndarray
    y: float

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        if not np.all(np.isfinite(x)) or not np.isfinite(self.y):
            raise ValueError("sample coordinates and label must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", float(self.y))


@dataclass(frozen=True)
class ClassifierConstraints:
    radius: float
    hyperplanes: tuple = ()
    dykstra_tol: float = 1e-10
    max_cycles: int = 10_000

    def __post_init__(self):
        object.__setattr__(self, "hyperplanes", tuple(self.hyperplanes))
        for g, _ in self.hyperplanes:
            if not inner(g, g) > 0:
                raise ValueError("constraint functions g_i must be nonzero")

    def constraint_set(self):
        ball = Ball(self.radius)
        if not self.hyperplanes:
            return ball
        planes = [Hyperplane(g, a) for g, a in self.hyperplanes]
        return Intersection(tuple(planes) + (ball,), self.dykstra_tol, self.max_cycles)


def squared_loss(f: RkhsElement, s: Sample) -> float:
    r = evaluate(f, s.x) - s.y
    return r * r


def squared_loss_gradient(f: RkhsElement, s: Sample) -> RkhsElement:
    """``2 (f(x) - y) k(., x)`` by the reproducing property."""
    return RkhsElement.section(f.kernel, s.x, 2.0 * (evaluate(f, s.x) - s.y))


@dataclass(frozen=True)
class SquaredLoss:
    sample: Sample

    def value(self, f):
        return squared_loss(f, self.sample)

    def gradient(self, f):
        return squared_loss_gradient(f, self.sample)


def gradient_bound(kernel: KernelSpec, samples: Sequence[Sample], radius: float) -> float:
    """A priori G for squared loss over the R-ball.

    ``|f(x)| <= R sqrt(k(x, x))`` on the ball, so
    ``|grad l| = 2 |f(x) - y| sqrt(k(x, x)) <= 2 (R sqrt(k) + |y|) sqrt(k)``.
    """
    xs = np.array([s.x for s in samples])
    ys = np.abs([s.y for s in samples])
    kd = np.sqrt(kernel.diag(xs))
    return float(np.max(2.0 * (radius * kd + ys) * kd))


class InfeasibleError(ValueError):
    """The constraint set is empty."""


@dataclass
class HindsightOptimum:
    f: RkhsElement
    costs: np.ndarray

    @property
    def total(self) -> float:
        return float(self.costs.sum())


def _trust_region_ls(A, r, rho):
    """argmin |A z - r|^2 subject to |z| <= rho (A, r real, rho >= 0)."""
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    keep = s > s.max(initial=0.0) * 1e-12
    U, s, Vt = U[:, keep], s[keep], Vt[keep]
    c = U.T @ r
    if s.size == 0:
        return np.zeros(A.shape[1])
    z_ls = Vt.T @ (c / s)
    if np.linalg.norm(z_ls) <= rho:
        return z_ls
    if rho == 0:
        return np.zeros(A.shape[1])

    # |z(lam)| is decreasing in lam; z(lam) stays in range(A^T) so no hard case
    def excess(lam):
        return np.linalg.norm(s * c / (s * s + lam)) - rho

    hi = 1.0
    while excess(hi) > 0:
        hi *= 2.0
    lam = brentq(excess, 0.0, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
    z = Vt.T @ (s * c / (s * s + lam))
    nz = np.linalg.norm(z)
    return z if nz <= rho else z * (rho / nz)


def hindsight_optimum(
    samples: Sequence[Sample], constraints: ClassifierConstraints, kernel: KernelSpec
) -> HindsightOptimum:
    """Best fixed f in the feasible set for the summed squared losses.

    Losses and constraints only see f through inner products with
    ``span{k(., x_t)} ∪ span{g_i}``, and projecting onto that span only
    shrinks the norm, so the minimizer lies in the span. In an orthonormal
    coordinate system for the span the problem is least squares with linear
    equalities and a Euclidean ball, solved exactly (null-space reduction
    plus a trust-region secular equation).
    """
    xs = np.array([s.x for s in samples])
    ys = np.array([s.y for s in samples])
    parts = [xs] + [g.centers for g, _ in constraints.hyperplanes]
    basis = np.unique(np.vstack(parts), axis=0)
    K = np.array(gram(kernel, basis, basis))
    lam, V = np.linalg.eigh(K)
    keep = lam > max(lam.max(initial=0.0), 1.0) * 1e-12
    lam, V = lam[keep], V[:, keep]
    # feature matrix: f(z_j) = (Phi w)_j with |f| = |w|, beta = V lam^{-1/2} w
    to_beta = V / np.sqrt(lam)

    def features(points):
        return np.array(gram(kernel, points, basis)) @ to_beta

    A = features(xs)
    if constraints.hyperplanes:
        C = np.array([g.coefficients @ features(g.centers) for g, _ in constraints.hyperplanes])
        a = np.array([float(av) for _, av in constraints.hyperplanes])
        w0, *_ = np.linalg.lstsq(C, a, rcond=None)
        if np.linalg.norm(C @ w0 - a) > 1e-9 * max(1.0, np.linalg.norm(a)):
            raise InfeasibleError("linear constraints are inconsistent on the span")
        _, sc, Vc = np.linalg.svd(C)
        rank = int(np.sum(sc > sc.max(initial=0.0) * 1e-12))
        N = Vc[rank:].T
    else:
        w0 = np.zeros(A.shape[1])
        N = np.eye(A.shape[1])
    slack = constraints.radius**2 - w0 @ w0
    if slack < -1e-12:
        raise InfeasibleError("the hyperplanes miss the ball")
    rho = np.sqrt(max(slack, 0.0))
    z = _trust_region_ls(A @ N, ys - A @ w0, rho) if N.shape[1] else np.zeros(0)
    w = w0 + N @ z
    f = compact(RkhsElement(kernel, basis, to_beta @ w))
    preds = A @ w
    return HindsightOptimum(f, (preds - ys) ** 2)


@dataclass
class SelectionResult:
    run: OnlineRun
    optimum: Optional[HindsightOptimum]
    config: OgdConfig

    @property
    def ledger(self):
        return self.run.ledger

    @property
    def regret(self) -> float:
        return self.run.ledger.regret(self.optimum.costs)

    @property
    def normalized_regret(self) -> float:
        """Average loss of the played classifiers minus the best fixed average loss."""
        return self.regret / self.config.T


def run_selection(
    samples: Sequence[Sample],
    constraints: ClassifierConstraints,
    kernel: KernelSpec = KernelSpec(),
    config: Optional[OgdConfig] = None,
    with_optimum: bool = True,
    calibrate: bool = False,
    **config_kw,
) -> SelectionResult:
    """Drive online functional gradient descent over the sample stream.

    Without an explicit config one is built with ``T = len(samples)`` and
    the a priori gradient bound; extra keywords go to ``OgdConfig``. With
    ``calibrate`` the step size is tuned to the realized gradient bound
    (see ``run_online_calibrated``).
    """
    samples = list(samples)
    if not samples:
        raise ValueError("empty sample stream")
    if config is None:
        config_kw.setdefault("prune_tol", 1e-12)
        config = OgdConfig(
            R=constraints.radius,
            G=config_kw.pop("G", None) or gradient_bound(kernel, samples, constraints.radius),
            T=len(samples),
            projection=constraints.constraint_set(),
            **config_kw,
        )
    zero = RkhsElement.zero(kernel, samples[0].x.size)
    losses = [SquaredLoss(s) for s in samples]
    if calibrate:
        run, config, _ = run_online_calibrated(losses, config, like=zero)
    else:
        run = run_online(losses, config, like=zero)
    opt = hindsight_optimum(samples, constraints, kernel) if with_optimum else None
    return SelectionResult(run, opt, config)


def synthetic_samples(n: int, dim: int = 2, rng=None, noise: float = 0.1) -> list:
    """Points uniform in [-1, 1]^dim labelled by sign(x_1 x_2) plus gaussian noise."""
    rng = np.random.default_rng(rng)
    xs = rng.uniform(-1.0, 1.0, size=(n, dim))
    base = np.sign(xs[:, 0] * (xs[:, 1] if dim > 1 else 1.0))
    ys = base + noise * rng.standard_normal(n)
    return [Sample(x, y) for x, y in zip(xs, ys)]


def read_samples(path) -> list:
    """CSV with columns x1..xn, y; a header row is skipped if present."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                vals = [float(c) for c in row]
            except ValueError:
                if rows:
                    raise
                continue
            rows.append(vals)
    if not rows:
        raise ValueError(f"no samples in {path}")
    return [Sample(r[:-1], r[-1]) for r in rows]


def read_constraints(path, kernel: KernelSpec) -> list:
    """CSV rows ``(center..., a)``: each is the constraint ``f(center) = a``."""
    out = []
    for s in read_samples(path):
        out.append((RkhsElement.section(kernel, s.x), s.y))
    return out
