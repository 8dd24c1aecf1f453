"""Mean-variance risk minimization over a finite probability space.

Random variables are grid functions on a ``QuadratureGrid.discrete`` grid,
so ``<X, Y> = E[XY]``. The objective is ``rho(X) = E X + c |X - E X|^2``
over ``{X : E[X Y_i] = a_i} ∩ {|X| <= R}``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .engine import (
    AveragedResult,
    OgdConfig,
    average_gap_bound,
    run_offline_average,
    run_online_calibrated,
)
from .hilbert import GridFunction, QuadratureGrid
from .projections import Ball, Hyperplane, Intersection


@dataclass(frozen=True, eq=False)
class DiscreteProbabilitySpace:
    probabilities: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float).ravel()
        if p.size == 0 or not np.all(p > 0):
            raise ValueError("outcome probabilities must be positive")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        object.__setattr__(self, "probabilities", p)
        object.__setattr__(self, "grid", QuadratureGrid.discrete(p))

    @property
    def size(self) -> int:
        return self.probabilities.size

    def variable(self, values) -> GridFunction:
        return GridFunction(self.grid, values)

    def expectation(self, X: GridFunction) -> float:
        return float(np.dot(self.probabilities, X.values))


def _mean(X: GridFunction) -> float:
    return float(np.dot(X.grid.measure, X.values))


def risk_value(X: GridFunction, c: float) -> float:
    if c < 0:
        raise ValueError("risk aversion c must be nonnegative")
    m = _mean(X)
    d = X.values - m
    return m + c * float(np.dot(X.grid.measure * d, d))


def risk_gradient(X: GridFunction, c: float) -> GridFunction:
    """``1 + 2c X - 2c E X``."""
    if c < 0:
        raise ValueError("risk aversion c must be nonnegative")
    return GridFunction(X.grid, 1.0 + 2.0 * c * (X.values - _mean(X)))


@dataclass(frozen=True)
class MeanVariance:
    c: float

    def value(self, X):
        return risk_value(X, self.c)

    def gradient(self, X):
        return risk_gradient(X, self.c)


@dataclass(frozen=True)
class RiskConstraints:
    """``E[X Y_i] = a_i`` for each moment pair, plus ``|X| <= radius``."""

    radius: float
    moments: tuple = ()
    dykstra_tol: float = 1e-10
    max_cycles: int = 10_000

    def __post_init__(self):
        object.__setattr__(self, "moments", tuple(self.moments))

    def constraint_set(self):
        ball = Ball(self.radius)
        if not self.moments:
            return ball
        planes = tuple(Hyperplane(Y, a) for Y, a in self.moments)
        return Intersection(planes + (ball,), self.dykstra_tol, self.max_cycles)


def risk_gradient_bound(c: float, radius: float) -> float:
    """``|1 + 2c (X - E X)| <= 1 + 2c |X|`` on a probability space."""
    return 1.0 + 2.0 * c * radius


@dataclass
class RiskResult:
    averaged: AveragedResult
    config: OgdConfig

    @property
    def x_bar(self) -> GridFunction:
        return self.averaged.x_bar

    @property
    def value(self) -> float:
        return self.averaged.value

    @property
    def bound(self) -> float:
        return self.averaged.bound

    @property
    def ledger(self):
        return self.averaged.run.ledger


def run_risk_minimization(
    space: DiscreteProbabilitySpace,
    constraints: RiskConstraints,
    c: float,
    T: int,
    G: Optional[float] = None,
    calibrate: bool = False,
    **config_kw,
) -> RiskResult:
    """Functional gradient descent with Dykstra projection; returns the averaged iterate."""
    if c < 0:
        raise ValueError("risk aversion c must be nonnegative")
    for Y, _ in constraints.moments:
        if not Y.grid.compatible(space.grid):
            raise ValueError("moment function lives on a different probability space")
    # perturbed iterates may sit up to max(eps) outside the ball
    slack = max(config_kw.get("eps") or (0.0,))
    config = OgdConfig(
        R=constraints.radius,
        G=G or risk_gradient_bound(c, constraints.radius + slack),
        T=T,
        projection=constraints.constraint_set(),
        **config_kw,
    )
    cost = MeanVariance(c)
    zero = space.variable(np.zeros(space.size))
    if calibrate:
        run, config, _ = run_online_calibrated([cost] * T, config, like=zero)
        x_bar = run.average()
        averaged = AveragedResult(x_bar, cost.value(x_bar), average_gap_bound(config), run)
    else:
        averaged = run_offline_average(cost, config, like=zero)
    return RiskResult(averaged, config)


def read_probabilities(path) -> np.ndarray:
    vals = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            for c in row:
                if c.strip():
                    vals.append(float(c))
    return np.array(vals)


def read_moments(path, space: DiscreteProbabilitySpace) -> list:
    """CSV rows ``(Y_1..Y_k, a)``: the constraint ``E[X Y] = a``."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or all(not c.strip() for c in row):
                continue
            vals = [float(c) for c in row]
            if len(vals) != space.size + 1:
                raise ValueError(
                    f"moment row needs {space.size} outcome values plus a level, got {len(vals)}"
                )
            out.append((space.variable(vals[:-1]), vals[-1]))
    return out
