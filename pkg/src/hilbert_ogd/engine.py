"""Online functional gradient descent with regret accounting.

The loop is ``x_{t+1} = P_K(x_t - eta * grad f_t(x_t))``. In noisy mode the
projection only has to land within ``eps_t`` of the exact one; the step size
and regret bound then pick up the noise terms.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Protocol, Sequence

import numpy as np

from .hilbert import (
    TOL_NUM,
    GridFunction,
    HilbertElement,
    RkhsElement,
    compact,
    norm,
    scale,
    zeros_like,
)
from .projections import project

TOL_FEAS = 1e-7


class CostOracle(Protocol):
    def value(self, x: HilbertElement) -> float: ...

    def gradient(self, x: HilbertElement) -> HilbertElement: ...


@dataclass(frozen=True)
class FunctionCost:
    """Adapter turning two callables into a CostOracle."""

    value_fn: Callable
    gradient_fn: Callable

    def value(self, x):
        return float(self.value_fn(x))

    def gradient(self, x):
        return self.gradient_fn(x)


class GradientBoundError(RuntimeError):
    """A gradient norm exceeded the declared bound G."""


class ProjectionQualityError(RuntimeError):
    """A projection missed its accuracy budget."""

    def __init__(self, message, round_index=None):
        super().__init__(message)
        self.round_index = round_index


def _validate(R, G, T):
    if not (R > 0 and G > 0):
        raise ValueError("R and G must be positive")
    if int(T) != T or T < 1:
        raise ValueError("T must be a positive integer")


def step_size_exact(R: float, G: float, T: int) -> float:
    _validate(R, G, T)
    return R / (G * math.sqrt(T))


def noise_averages(eps: Sequence[float]) -> tuple[float, float]:
    """Mean and mean-of-squares of a noise schedule."""
    e = np.asarray(eps, dtype=float)
    if e.size == 0:
        return 0.0, 0.0
    if np.any(e < 0):
        raise ValueError("noise schedule must be nonnegative")
    return float(e.mean()), float((e * e).mean())


def step_size_noisy(R: float, G: float, T: int, eps: Sequence[float]) -> float:
    _validate(R, G, T)
    eps_bar, ups_bar = noise_averages(eps)
    return math.sqrt(R * R / T + 4.0 * R * eps_bar + ups_bar) / G


def bound_value(R: float, G: float, T: int, eps: Optional[Sequence[float]] = None) -> float:
    """Cumulative regret bound: ``RG sqrt(T)`` plus ``(2 sqrt(R eps_bar) + sqrt(ups_bar)) G T``."""
    _validate(R, G, T)
    base = R * G * math.sqrt(T)
    if eps is None:
        return base
    eps_bar, ups_bar = noise_averages(eps)
    return base + (2.0 * math.sqrt(R * eps_bar) + math.sqrt(ups_bar)) * G * T


@dataclass
class OgdConfig:
    """Run parameters.

    ``eps`` is the declared per-round projection-error schedule (noisy mode
    only). ``perturb`` turns on fault injection: after each projection the
    iterate is pushed by exactly ``eps_t`` minus the projection's own error
    estimate, in a seeded random direction.
    """

    R: float
    G: float
    T: int
    projection: object
    mode: str = "exact"
    eps: Optional[Sequence[float]] = None
    perturb: bool = False
    seed: int = 0
    prune_tol: float = 0.0
    enforce_G: bool = True

    def __post_init__(self):
        _validate(self.R, self.G, self.T)
        if self.mode not in ("exact", "noisy"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "noisy":
            eps = np.zeros(self.T) if self.eps is None else np.asarray(self.eps, dtype=float)
            if eps.shape != (self.T,):
                raise ValueError("noise schedule needs one entry per round")
            if np.any(eps < 0):
                raise ValueError("noise schedule must be nonnegative")
            self.eps = tuple(float(e) for e in eps)
        elif self.perturb:
            raise ValueError("fault injection requires noisy mode")

    @property
    def step_size(self) -> float:
        if self.mode == "noisy":
            return step_size_noisy(self.R, self.G, self.T, self.eps)
        return step_size_exact(self.R, self.G, self.T)


def regret_bound(config: OgdConfig) -> float:
    return bound_value(config.R, config.G, config.T, config.eps if config.mode == "noisy" else None)


def average_gap_bound(config: OgdConfig) -> float:
    """Bound on ``f(mean x_t) - f(x*)`` for a fixed cost: the regret bound over T."""
    return regret_bound(config) / config.T


@dataclass
class LedgerRow:
    t: int
    cost: float
    grad_norm: float
    eps_est: float


@dataclass
class RegretLedger:
    rows: list = field(default_factory=list)
    bound: float = 0.0

    @property
    def costs(self) -> np.ndarray:
        return np.array([r.cost for r in self.rows])

    @property
    def cumulative_cost(self) -> float:
        return float(self.costs.sum())

    @property
    def max_grad_norm(self) -> float:
        return max((r.grad_norm for r in self.rows), default=0.0)

    def regret(self, comparator_costs) -> float:
        """Cumulative cost minus the comparator's per-round costs summed."""
        return self.cumulative_cost - float(np.sum(comparator_costs))

    def to_csv(self, path, comparator_costs=None) -> None:
        cum = np.cumsum(self.costs)
        comp = None if comparator_costs is None else np.cumsum(comparator_costs)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "cost", "cum_cost", "cum_regret", "bound", "grad_norm", "eps_est"])
            for i, r in enumerate(self.rows):
                reg = "" if comp is None else repr(float(cum[i] - comp[i]))
                w.writerow(
                    [r.t, repr(r.cost), repr(float(cum[i])), reg, repr(self.bound),
                     repr(r.grad_norm), repr(r.eps_est)]
                )


@dataclass
class OnlineRun:
    ledger: RegretLedger
    iterates: list
    step_size: float

    def average(self) -> HilbertElement:
        return average_iterates(self.iterates)


def average_iterates(iterates) -> HilbertElement:
    acc = zeros_like(iterates[0])
    for x in iterates:
        acc = acc + x
    return compact(scale(1.0 / len(iterates), acc))


def _random_direction(x, g, rng):
    """Unit-norm random element in the span of x's and g's representations."""
    if isinstance(x, GridFunction):
        v = GridFunction(x.grid, rng.standard_normal(x.grid.size) * x.grid.mask)
    else:
        centers = np.unique(np.vstack([x.centers, g.centers]), axis=0)
        if centers.shape[0] == 0:
            return None
        v = RkhsElement(x.kernel, centers, rng.standard_normal(centers.shape[0]))
    nv = norm(v)
    if nv == 0.0:
        return None
    return scale(1.0 / nv, v)


def initial_point(projection, like: HilbertElement) -> HilbertElement:
    """The projection of the zero element of ``like``'s space onto the feasible set."""
    return project(projection, zeros_like(like)).point


def _run(costs, config: OgdConfig, x1, use_subgradient=False) -> OnlineRun:
    """Shared loop.

    ``costs`` is a sequence of T oracles or a callable ``(t, x_t) -> oracle``
    (an adaptive adversary that sees the played point before revealing f_t).
    """
    T = config.T
    adaptive = callable(costs) and not hasattr(costs, "__len__")
    if not adaptive and len(costs) != T:
        raise ValueError(f"expected {T} cost functions, got {len(costs)}")

    check = project(config.projection, x1)
    if norm(compact(check.point - x1)) > max(TOL_FEAS, check.epsilon_estimate):
        raise ValueError("x1 is not in the feasible set")

    step = config.step_size
    noisy = config.mode == "noisy"
    rng = np.random.default_rng(config.seed)
    ledger = RegretLedger(bound=regret_bound(config))
    iterates = [x1]
    x = x1
    for t in range(1, T + 1):
        f = costs(t, x) if adaptive else costs[t - 1]
        grad = getattr(f, "subgradient", f.gradient) if use_subgradient else f.gradient
        g = grad(x)
        gn = norm(g)
        if config.enforce_G and gn > config.G * (1 + TOL_NUM):
            raise GradientBoundError(f"round {t}: gradient norm {gn:.6g} exceeds G={config.G:.6g}")
        cost = f.value(x)
        eps_est = 0.0
        if t < T:
            target = x - step * g if gn > 0 else x
            budget = config.eps[t - 1] if noisy else None
            rep = project(config.projection, target)
            if not rep.converged:
                if not noisy or rep.epsilon_estimate > budget:
                    raise ProjectionQualityError(
                        f"round {t}: projection did not converge "
                        f"(displacement {rep.epsilon_estimate:.3g})",
                        round_index=t,
                    )
            eps_est = rep.epsilon_estimate
            if noisy and eps_est > budget + TOL_NUM:
                raise ProjectionQualityError(
                    f"round {t}: projection error estimate {eps_est:.3g} exceeds eps_t={budget:.3g}",
                    round_index=t,
                )
            nxt = rep.point
            if noisy and config.perturb and budget > eps_est:
                d = _random_direction(nxt, g, rng)
                if d is not None:
                    nxt = nxt + (budget - eps_est) * d
                    eps_est = budget
            x = compact(nxt, config.prune_tol)
            iterates.append(x)
        ledger.rows.append(LedgerRow(t, cost, gn, eps_est))
    return OnlineRun(ledger, iterates, step)


def run_online(costs, config: OgdConfig, x1: HilbertElement = None, like=None) -> OnlineRun:
    """Online functional gradient descent over ``config.T`` rounds.

    ``x1`` defaults to the projection of zero onto the feasible set; pass
    ``like`` (any element of the space) when x1 is omitted.
    """
    if x1 is None:
        x1 = initial_point(config.projection, like)
    return _run(costs, config, x1)


def run_online_subgradient(costs, config: OgdConfig, x1=None, like=None) -> OnlineRun:
    """Same loop, consuming ``cost.subgradient`` when the oracle provides one."""
    if x1 is None:
        x1 = initial_point(config.projection, like)
    return _run(costs, config, x1, use_subgradient=True)


@dataclass
class AveragedResult:
    x_bar: HilbertElement
    value: float
    bound: float
    run: OnlineRun

    def gap(self, comparator_value: float) -> float:
        return self.value - comparator_value


def run_offline_average(cost, config: OgdConfig, x1=None, like=None) -> AveragedResult:
    """Functional gradient descent on one fixed cost; returns the averaged iterate."""
    run = run_online([cost] * config.T, config, x1, like)
    x_bar = run.average()
    return AveragedResult(x_bar, cost.value(x_bar), average_gap_bound(config), run)


def run_online_calibrated(costs, config: OgdConfig, x1=None, like=None, max_iter: int = 50):
    """Rerun until the step size's G equals the realized max gradient norm.

    The regret bound is stated for ``G = max_t |grad f_t(x_t)|``, which
    depends on the trajectory and hence on the step size. Starting from
    ``config.G`` we set G to the realized maximum and rerun until the two
    agree to ``1e-9`` relative. If that fixed point is not reached within
    ``max_iter`` runs, the final run uses the largest G observed, for which
    the bound holds with that (declared) G instead.

    Returns ``(run, config_used, converged)``. ``costs`` must be a sequence
    (adaptive adversaries would see different points on each rerun).
    """
    if x1 is None:
        x1 = initial_point(config.projection, like)
    G = config.G
    seen = [G]
    for _ in range(max_iter):
        cfg = replace(config, G=G, enforce_G=False)
        run = _run(costs, cfg, x1)
        realized = run.ledger.max_grad_norm
        if realized == 0.0:
            return run, cfg, True
        if realized <= G <= realized * (1 + 1e-9):
            return run, replace(cfg, enforce_G=True), True
        G = realized
        seen.append(G)
    cfg = replace(config, G=max(seen))
    return _run(costs, cfg, x1), cfg, False
