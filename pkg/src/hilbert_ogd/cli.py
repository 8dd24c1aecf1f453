"""Command-line front end: ``hilbert-ogd {classifier,risk,drsp,project}``.

Parameters come from (lowest to highest precedence) built-in defaults, an
INI-style ``--config`` file (one section per subcommand plus an optional
``[run]`` section for ``seed``/``out``), and command-line flags.

Output schemas
--------------
classifier, risk: ledger CSV with columns
    t, cost, cum_cost, cum_regret, bound, grad_norm, eps_est
    (cum_regret is blank when no comparator is known)
drsp: CSV with columns
    kind, call, b, verdict, t, g, eps_est, interval_lo, interval_hi, x1, x2
    one ``round`` row per round of every decision call, then one ``final`` row
Each run also writes ``<out>.summary.txt`` (key = value lines).

Exit codes: 0 ok, 2 config error, 3 infeasible / NO, 4 projection-quality
abort, 5 oracle undecided. Failures print one ``error=<kind> message=...``
line on stderr.

Seeding: the root ``--seed`` s feeds stream k through
``SeedSequence([s, k])``; k = 0 synthesizes data, k = 1 drives fault
injection.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import classifier as clf
from . import drsp
from . import risk
from .engine import GradientBoundError, ProjectionQualityError
from .hilbert import GridFunction, KernelSpec, QuadratureGrid
from .projections import Ball, Hyperplane, NonnegativeCone, dykstra

log = logging.getLogger("hilbert_ogd")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_PROJECTION, EXIT_UNDECIDED = 0, 2, 3, 4, 5


class ConfigError(ValueError):
    pass


def derive_seed(root: int, stream: int) -> int:
    return int(np.random.SeedSequence([root, stream]).generate_state(1)[0])


def _floats(text):
    return tuple(float(v) for v in str(text).split(",") if v.strip())


# name -> (converter, default, help)
PARAMS = {
    "classifier": {
        "data": (str, None, "CSV of samples, columns x1..xn,y"),
        "synthetic": (int, 64, "number of synthetic samples when --data is absent"),
        "dim": (int, 2, "dimension of synthetic samples"),
        "kernel": (str, "gaussian", "gaussian | polynomial | linear"),
        "bandwidth": (float, 1.0, "gaussian bandwidth"),
        "degree": (int, 2, "polynomial degree"),
        "offset": (float, 1.0, "polynomial offset"),
        "radius": (float, 1.0, "ball radius R"),
        "constraints": (str, None, "CSV rows (center..., a) meaning f(center) = a"),
        "rounds": (int, None, "horizon T (default: all samples)"),
        "eps": (float, 0.0, "injected projection error per round (noisy mode when > 0)"),
    },
    "risk": {
        "probs": (str, None, "CSV of outcome probabilities"),
        "outcomes": (int, 4, "uniform outcome count when --probs is absent"),
        "c": (float, 1.0, "variance weight c >= 0"),
        "radius": (float, 2.0, "ball radius R"),
        "moments": (str, None, "CSV rows (Y_1..Y_k, a) meaning E[XY] = a"),
        "rounds": (int, 100, "horizon T"),
        "eps": (float, 0.0, "injected projection error per round (noisy mode when > 0)"),
    },
    "drsp": {
        "grid_res": (int, 64, "grid cells per axis on [0, 1]^2"),
        "b": (_floats, None, "density mean b1,b2 (default: uniform-density mean)"),
        "radius": (float, math.sqrt(2.0), "L2 radius of the density ball"),
        "delta": (float, 0.05, "decision accuracy delta"),
        "bracket": (_floats, (0.0, 1.0), "lo,hi bracket for the optimal value"),
        "bracket_tol": (float, 1e-2, "stop bisecting below this bracket width"),
        "oracle": (str, "ball", "ball | slice"),
        "slice": (_floats, (1.0, 1.0, 1.0), "a1,a2,r for the slice decision set"),
        "rounds": (int, None, "horizon T (default: smallest T meeting delta)"),
        "eps": (float, 1e-6, "per-round projection tolerance"),
    },
    "project": {
        "sets": (str, None, "set file: lines 'ball,R' | 'hyperplane,eta,u...' | 'nonneg'"),
        "point": (str, None, "CSV with the point's coordinates"),
        "weights": (str, None, "CSV of quadrature weights (default all ones)"),
        "tol": (float, 1e-8, "Dykstra displacement tolerance"),
        "max_cycles": (int, 10_000, "Dykstra cycle budget"),
    },
}


@dataclass
class ExperimentConfig:
    application: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    out: str = None


def _read_config(path):
    if path is None:
        return None
    if not os.path.exists(path):
        raise ConfigError(f"config file {path} not found")
    cp = configparser.ConfigParser()
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"bad config file: {exc}") from exc
    return cp


def build_config(args) -> ExperimentConfig:
    app = args.command
    cp = _read_config(getattr(args, "config", None))
    section = cp[app] if cp is not None and cp.has_section(app) else {}
    runsec = cp["run"] if cp is not None and cp.has_section("run") else {}
    params = {}
    for name, (conv, default, _) in PARAMS[app].items():
        flag = getattr(args, name, None)
        key = name.replace("_", "-")
        raw = section.get(key, section.get(name)) if section else None
        try:
            if flag is not None:
                params[name] = flag
            elif raw is not None:
                params[name] = conv(raw)
            else:
                params[name] = default
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from exc
    seed = args.seed if getattr(args, "seed", None) is not None else int(runsec.get("seed", 0))
    out = args.out if getattr(args, "out", None) is not None else runsec.get("out")
    return ExperimentConfig(app, params, seed, out)


def _require_file(path, what):
    if path is None:
        raise ConfigError(f"{what} is required")
    if not os.path.exists(path):
        raise ConfigError(f"{what} {path} not found")


def _write_summary(out, items):
    with open(out + ".summary.txt", "w") as fh:
        for k, v in items:
            fh.write(f"{k} = {v}\n")


def _validated_samples(p, seed):
    if p["data"] is not None:
        _require_file(p["data"], "sample file")
        try:
            samples = clf.read_samples(p["data"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    else:
        if p["synthetic"] < 1:
            raise ConfigError("synthetic sample count must be positive")
        samples = clf.synthetic_samples(p["synthetic"], p["dim"], derive_seed(seed, 0))
    if p["rounds"] is not None:
        if not 1 <= p["rounds"] <= len(samples):
            raise ConfigError(f"rounds must be in [1, {len(samples)}]")
        samples = samples[: p["rounds"]]
    return samples


def run_classifier(cfg: ExperimentConfig) -> int:
    p = cfg.params
    if p["radius"] <= 0 or p["eps"] < 0:
        raise ConfigError("radius must be positive and eps nonnegative")
    try:
        kernel = KernelSpec(p["kernel"], p["bandwidth"], p["degree"], p["offset"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    samples = _validated_samples(p, cfg.seed)
    planes = ()
    if p["constraints"] is not None:
        _require_file(p["constraints"], "constraint file")
        planes = clf.read_constraints(p["constraints"], kernel)
    constraints = clf.ClassifierConstraints(p["radius"], planes)
    kw = {}
    if p["eps"] > 0:
        kw = dict(mode="noisy", eps=[p["eps"]] * len(samples), perturb=True,
                  seed=derive_seed(cfg.seed, 1))
    result = clf.run_selection(samples, constraints, kernel, **kw)
    opt = result.optimum
    result.ledger.to_csv(cfg.out, opt.costs)
    _write_summary(cfg.out, [
        ("application", "classifier"),
        ("T", result.config.T),
        ("R", result.config.R),
        ("G", result.config.G),
        ("step_size", result.run.step_size),
        ("cumulative_cost", result.ledger.cumulative_cost),
        ("comparator_cost", opt.total),
        ("regret", result.regret),
        ("normalized_regret", result.normalized_regret),
        ("regret_bound", result.ledger.bound),
        ("max_grad_norm", result.ledger.max_grad_norm),
    ])
    return EXIT_OK


def run_risk(cfg: ExperimentConfig) -> int:
    p = cfg.params
    if p["c"] < 0 or p["radius"] <= 0 or p["rounds"] < 1 or p["eps"] < 0:
        raise ConfigError("need c >= 0, radius > 0, rounds >= 1, eps >= 0")
    if p["probs"] is not None:
        _require_file(p["probs"], "probability file")
        probs = risk.read_probabilities(p["probs"])
    else:
        if p["outcomes"] < 1:
            raise ConfigError("outcome count must be positive")
        probs = np.full(p["outcomes"], 1.0 / p["outcomes"])
    try:
        space = risk.DiscreteProbabilitySpace(probs)
        moments = ()
        if p["moments"] is not None:
            _require_file(p["moments"], "moment file")
            moments = risk.read_moments(p["moments"], space)
        constraints = risk.RiskConstraints(p["radius"], moments)
        constraints.constraint_set()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    kw = {}
    if p["eps"] > 0:
        kw = dict(mode="noisy", eps=[p["eps"]] * p["rounds"], perturb=True,
                  seed=derive_seed(cfg.seed, 1))
    result = risk.run_risk_minimization(space, constraints, p["c"], p["rounds"], **kw)
    result.ledger.to_csv(cfg.out)
    _write_summary(cfg.out, [
        ("application", "risk"),
        ("T", p["rounds"]),
        ("R", result.config.R),
        ("G", result.config.G),
        ("step_size", result.averaged.run.step_size),
        ("risk_of_average", result.value),
        ("gap_bound", result.bound),
        ("x_bar", ",".join(repr(float(v)) for v in result.x_bar.values)),
        ("max_grad_norm", result.ledger.max_grad_norm),
    ])
    return EXIT_OK


def run_drsp(cfg: ExperimentConfig) -> int:
    p = cfg.params
    if p["grid_res"] < 1:
        raise ConfigError("grid-res must be positive")
    if len(p["bracket"]) != 2:
        raise ConfigError("bracket needs lo,hi")
    try:
        uset = drsp.UncertaintySet.quarter_disk(
            p["grid_res"], mean=p["b"], radius=p["radius"]
        )
        if p["b"] is not None and len(p["b"]) != 2:
            raise ConfigError("b needs two components")
        if p["oracle"] == "ball":
            oracle = drsp.BallOracle()
        elif p["oracle"] == "slice":
            if len(p["slice"]) != 3:
                raise ConfigError("slice needs a1,a2,r")
            oracle = drsp.SliceOracle(drsp.AffineSlice(p["slice"][:2], p["slice"][2]))
        else:
            raise ConfigError(f"unknown oracle {p['oracle']!r}")
        instance = drsp.DrspInstance(
            uset, oracle, p["delta"], bracket=tuple(p["bracket"]),
            bracket_tol=p["bracket_tol"], eps=p["eps"], rounds=p["rounds"],
        )
        T, _ = instance.schedule()
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    log.info("drsp: T=%d rounds per decision, G=%.6g", T, instance.G)
    result = drsp.binary_search_optimize(instance)
    drsp.write_trace(cfg.out, result)
    _write_summary(cfg.out, [
        ("application", "drsp"),
        ("T", T),
        ("G", instance.G),
        ("decision_calls", len(result.decisions)),
        ("verdicts", ",".join(d.verdict for d in result.decisions)),
        ("interval_lo", result.interval[0]),
        ("interval_hi", result.interval[1]),
        ("x_bar", ",".join(repr(float(v)) for v in result.x_bar)),
    ])
    return EXIT_OK


def _read_sets(path, dim, grid):
    sets = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = [s.strip() for s in line.split(",")]
            kind = parts[0].lower()
            try:
                if kind == "ball" and len(parts) == 2:
                    sets.append(Ball(float(parts[1])))
                elif kind == "hyperplane" and len(parts) == dim + 2:
                    u = GridFunction(grid, [float(v) for v in parts[2:]])
                    sets.append(Hyperplane(u, float(parts[1])))
                elif kind == "nonneg" and len(parts) == 1:
                    sets.append(NonnegativeCone())
                else:
                    raise ValueError(f"cannot parse {line!r}")
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from exc
    if not sets:
        raise ConfigError(f"no sets in {path}")
    return sets


def run_project(cfg: ExperimentConfig) -> int:
    p = cfg.params
    _require_file(p["point"], "point file")
    _require_file(p["sets"], "set file")
    try:
        point = np.loadtxt(p["point"], delimiter=",", ndmin=1).ravel()
        weights = np.ones(point.size)
        if p["weights"] is not None:
            _require_file(p["weights"], "weight file")
            weights = np.loadtxt(p["weights"], delimiter=",", ndmin=1).ravel()
        grid = QuadratureGrid(np.arange(point.size, dtype=float), weights)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    sets = _read_sets(p["sets"], point.size, grid)
    if p["tol"] < 0 or p["max_cycles"] < 1:
        raise ConfigError("need tol >= 0 and max-cycles >= 1")
    rep = dykstra(sets, GridFunction(grid, point), p["tol"], p["max_cycles"])
    out = sys.stdout
    out.write("point," + ",".join(repr(float(v)) for v in rep.point.values) + "\n")
    out.write(f"cycles_used,{rep.cycles_used}\n")
    out.write(f"converged,{int(rep.converged)}\n")
    out.write(f"epsilon_estimate,{rep.epsilon_estimate!r}\n")
    out.write("cycle,displacement\n")
    for i, d in enumerate(rep.displacements, 1):
        out.write(f"{i},{d!r}\n")
    if not rep.converged:
        raise ProjectionQualityError(
            f"dykstra did not converge in {rep.cycles_used} cycles "
            f"(last displacement {rep.epsilon_estimate:.3g})"
        )
    return EXIT_OK


RUNNERS = {"classifier": run_classifier, "risk": run_risk, "drsp": run_drsp, "project": run_project}


class _Parser(argparse.ArgumentParser):
    """Usage errors follow the one-line ``error=config`` convention."""

    def error(self, message):
        self.exit(EXIT_CONFIG, f"error=config message={self.prog}: {message}\n")


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="INI config file")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="root seed")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output CSV path")
    common.add_argument("--verbose", action="store_true", default=argparse.SUPPRESS)
    parser = _Parser(
        prog="hilbert-ogd",
        description="Online functional gradient descent experiments.",
        epilog=__doc__.split("Output schemas", 1)[1].join(["Output schemas", ""]),
        formatter_class=argparse.RawDescriptionHelpFormatter,
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, params in PARAMS.items():
        sp = sub.add_parser(name, parents=[common], help=f"run the {name} application")
        for pname, (conv, default, help_) in params.items():
            sp.add_argument("--" + pname.replace("_", "-"), dest=pname, type=conv,
                            default=None,
                            help=help_ if "default" in help_ else f"{help_} (default: {default})")
    return parser


def _fail(code, kind, message):
    sys.stderr.write(f"error={kind} message={message}\n")
    return code


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = build_config(args)
        if cfg.application != "project" and not cfg.out:
            raise ConfigError("--out is required")
        return RUNNERS[cfg.application](cfg)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", exc)
    except (clf.InfeasibleError, drsp.BracketError) as exc:
        return _fail(EXIT_INFEASIBLE, "infeasible", exc)
    except ProjectionQualityError as exc:
        return _fail(EXIT_PROJECTION, "projection_quality", exc)
    except drsp.OracleUndecided as exc:
        return _fail(EXIT_UNDECIDED, "oracle_undecided", exc)
    except GradientBoundError as exc:
        return _fail(EXIT_CONFIG, "gradient_bound", exc)


if __name__ == "__main__":
    sys.exit(main())
