"""Acceptance gate: nine criteria, one PASS/FAIL line each.

Run with pytest (lines appear in the terminal summary) or directly with
``python tests/test_acceptance.py``.
"""

import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

from hilbert_ogd.classifier import (  # noqa: E402
    ClassifierConstraints,
    Sample,
    run_selection,
    squared_loss,
    squared_loss_gradient,
    synthetic_samples,
)
from hilbert_ogd.drsp import (  # noqa: E402
    UNIFORM_MEAN,
    AffineSlice,
    BallOracle,
    DrspInstance,
    SliceOracle,
    UncertaintySet,
    binary_search_optimize,
    decide_feasibility,
    density_moments,
    dual_density_gradient,
    g_value,
    worst_case_value,
)
from hilbert_ogd.engine import bound_value  # noqa: E402
from hilbert_ogd.hilbert import (  # noqa: E402
    GridFunction,
    KernelSpec,
    QuadratureGrid,
    RkhsElement,
    compact,
    inner,
    norm,
)
from hilbert_ogd.projections import (  # noqa: E402
    Ball,
    Hyperplane,
    Intersection,
    NonnegativeCone,
    dykstra,
)
from hilbert_ogd.risk import (  # noqa: E402
    DiscreteProbabilitySpace,
    RiskConstraints,
    risk_gradient,
    risk_value,
    run_risk_minimization,
)
from oracles import (  # noqa: E402
    brute_force_projection,
    central_difference,
    cvxpy_worst_case,
    risk_optimum,
    slice_exact_min,
)

RESULTS = {}


def report(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    RESULTS[n] = line
    print(line)
    assert ok, line


def _classifier_instances(rng, count_per_T=8):
    for T in (16, 64, 256):
        for _ in range(count_per_T):
            samples = synthetic_samples(T, 2, rng, noise=0.2)
            kernel = KernelSpec("gaussian", float(rng.uniform(0.3, 2.0)))
            yield samples, kernel, float(rng.uniform(0.5, 3.0))


def test_criterion_1_regret_bound():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst, n, bad = 0.0, 0, 0
    for samples, kernel, R in _classifier_instances(rng):
        res = run_selection(samples, ClassifierConstraints(R), kernel, calibrate=True)
        G = res.ledger.max_grad_norm
        bound = R * G * math.sqrt(res.config.T)
        bad += res.regret > bound
        worst = max(worst, res.regret / bound)
        n += 1
    elapsed = time.perf_counter() - start
    report(1, bad == 0 and n >= 20 and elapsed < 60,
           f"{n} instances, {bad} violations, max regret/(R G_realized sqrt T) = {worst:.3f}, "
           f"{elapsed:.1f}s")


def test_criterion_2_averaged_bound():
    rng = np.random.default_rng(202)
    start = time.perf_counter()
    worst, n, bad = -np.inf, 0, 0
    for _ in range(24):
        k = int(rng.integers(2, 5))
        p = rng.dirichlet(np.ones(k))
        p[-1] = 1.0 - p[:-1].sum()
        space = DiscreteProbabilitySpace(p)
        c, R, T = float(rng.uniform(0, 3)), float(rng.uniform(0.5, 3)), int(rng.choice([16, 64, 256]))
        moments = []
        if rng.random() < 0.5:
            Y = rng.normal(size=k)
            a = float(rng.uniform(-0.6, 0.6)) * R * math.sqrt(p @ (Y * Y))
            moments = [(Y, a)]
        cons = RiskConstraints(R, [(space.variable(Y), a) for Y, a in moments])
        res = run_risk_minimization(space, cons, c, T, calibrate=True)
        _, best = risk_optimum(p, c, R, moments)
        G = res.ledger.max_grad_norm
        gap, bound = res.value - best, R * G / math.sqrt(T)
        bad += gap > bound
        worst = max(worst, gap / bound)
        n += 1
    elapsed = time.perf_counter() - start
    report(2, bad == 0 and elapsed < 60,
           f"{n} instances, {bad} violations, max gap/(R G_realized / sqrt T) = {worst:.3f}, "
           f"{elapsed:.1f}s")


def test_criterion_3_noisy_bound():
    rng = np.random.default_rng(303)
    start = time.perf_counter()
    worst, n, bad = 0.0, 0, 0
    for i, (samples, kernel, R) in enumerate(_classifier_instances(rng)):
        eps = (1e-3, 1e-2)[i % 2]
        T = len(samples)
        res = run_selection(samples, ClassifierConstraints(R), kernel, calibrate=True,
                            mode="noisy", eps=[eps] * T, perturb=True, seed=i)
        est = [r.eps_est for r in res.ledger.rows[:-1]]
        assert all(abs(e - eps) <= 1e-12 for e in est)
        bound = bound_value(R, res.ledger.max_grad_norm, T, [eps] * T)
        bad += res.regret > bound
        worst = max(worst, res.regret / bound)
        n += 1
    elapsed = time.perf_counter() - start
    report(3, bad == 0 and n >= 20,
           f"{n} instances (eps in 1e-3, 1e-2), {bad} violations, max regret/bound = {worst:.3f}, "
           f"{elapsed:.1f}s")


def _nonexpansive_cases(rng):
    kern = KernelSpec("gaussian", 0.8)
    pool = rng.normal(size=(6, 2))

    def rk():
        idx = rng.choice(6, size=3, replace=False)
        return RkhsElement(kern, pool[idx], rng.normal(size=3))

    grid = QuadratureGrid(np.arange(5.0), rng.uniform(0.2, 1.0, 5))

    def gf(scale=2.0):
        return GridFunction(grid, rng.normal(size=5) * scale)

    u = gf(1.0)
    variants = {
        "ball": (Ball(1.0), rk),
        "ball-grid": (Ball(1.0), gf),
        "hyperplane": (Hyperplane(rk(), 0.4), rk),
        "hyperplane-grid": (Hyperplane(u, 0.3), gf),
        "nonneg": (NonnegativeCone(), gf),
        "dykstra": (Intersection((Hyperplane(u, 0.3), NonnegativeCone(), Ball(2.0)), tol=1e-13), gf),
    }
    return variants


def test_criterion_4_nonexpansive():
    rng = np.random.default_rng(404)
    variants = _nonexpansive_cases(rng)
    names = list(variants)
    n, bad, worst = 0, 0, -np.inf
    for i in range(1000):
        s, draw = variants[names[i % len(names)]]
        x, y = draw(), draw()
        xhat = s.project(y)
        lhs = norm(compact(s.project(x) - xhat))
        rhs = norm(compact(x - xhat))
        bad += lhs > rhs + 1e-9
        worst = max(worst, lhs - rhs)
        n += 1
    report(4, bad == 0, f"{n} triples over {', '.join(names)}; {bad} violations, "
           f"max |P x - xh| - |x - xh| = {worst:.2e}")


def test_criterion_5_dykstra_vs_brute_force():
    rng = np.random.default_rng(505)
    n, worst, unconverged = 0, 0.0, 0
    for _ in range(12):
        dim = int(rng.integers(2, 7))
        w = rng.uniform(0.2, 2.0, dim)
        grid = QuadratureGrid(np.arange(float(dim)), w)
        R = float(rng.uniform(1.0, 3.0))
        nonneg = bool(rng.integers(2))
        planes = []
        for _ in range(int(rng.integers(1, min(3, dim)))):
            u = rng.normal(size=dim)
            z = np.abs(rng.normal(size=dim))
            z *= 0.5 * R / math.sqrt((z * z * w).sum())
            planes.append((u, float((w * u * z).sum())))
        x = rng.normal(size=dim) * 2.0
        sets = [Hyperplane(GridFunction(grid, u), e) for u, e in planes]
        sets += ([NonnegativeCone()] if nonneg else []) + [Ball(R)]
        rep = dykstra(sets, GridFunction(grid, x), tol=1e-13, max_cycles=10_000)
        unconverged += not rep.converged
        ref = brute_force_projection(x, w, R, planes, nonneg)
        d = rep.point.values - ref
        worst = max(worst, math.sqrt((d * d * w).sum()))
        n += 1
    report(5, worst <= 1e-6, f"{n} instances (dim 2..6), max weighted distance to brute force "
           f"= {worst:.2e}, {unconverged} hit max_cycles")


def _rel(fd, an):
    return abs(fd - an) / max(abs(an), 1e-12)


def test_criterion_6_finite_differences():
    rng = np.random.default_rng(606)
    kern = KernelSpec("gaussian", 1.0)
    errs = {"squared loss": [], "mean-variance": [], "dual g(., p)": []}
    for _ in range(100):
        f = RkhsElement(kern, rng.normal(size=(4, 2)), rng.normal(size=4))
        d = RkhsElement(kern, rng.normal(size=(3, 2)), rng.normal(size=3))
        s = Sample(rng.normal(size=2), rng.choice([-1.0, 1.0]))
        fd = central_difference(lambda h: squared_loss(f + h * d, s))
        errs["squared loss"].append(_rel(fd, inner(squared_loss_gradient(f, s), d)))
    space = DiscreteProbabilitySpace([0.1, 0.2, 0.3, 0.4])
    for _ in range(100):
        X, D = space.variable(rng.normal(size=4)), space.variable(rng.normal(size=4))
        c = float(rng.uniform(0, 3))
        fd = central_difference(lambda h: risk_value(X + h * D, c))
        errs["mean-variance"].append(_rel(fd, inner(risk_gradient(X, c), D)))
    us = UncertaintySet.quarter_disk(16)
    for _ in range(100):
        x = rng.uniform(-1, 1, 2)
        p = GridFunction(us.grid, rng.uniform(0, 2, us.grid.size))
        D = GridFunction(us.grid, rng.normal(size=us.grid.size))
        fd = central_difference(lambda h: g_value(x, p + h * D, 0.2))
        errs["dual g(., p)"].append(_rel(fd, inner(dual_density_gradient(x, p), D)))
    worst = {k: max(v) for k, v in errs.items()}
    report(6, all(v <= 1e-5 for v in worst.values()),
           "max relative error " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
           + " (100 points each)")


def test_criterion_7_drsp_guarantee():
    rng = np.random.default_rng(707)
    us = UncertaintySet.quarter_disk(16)
    start = time.perf_counter()
    yes = no = bad = 0
    worst_yes = -np.inf
    for _ in range(14):
        ang = rng.uniform(0, math.pi / 2)
        a = np.array([math.cos(ang), math.sin(ang)]) * rng.uniform(0.5, 2.0)
        r = float(rng.uniform(0.2, 0.9)) * np.linalg.norm(a)
        sl = AffineSlice(tuple(a), r)
        b = float(rng.uniform(0.0, 0.5))
        inst = DrspInstance(us, SliceOracle(sl), delta=0.05)
        d = decide_feasibility(inst, b)
        if d.yes:
            yes += 1
            wc, _ = worst_case_value(d.x_bar, us, b, steps=10 * d.T, tol=1e-12)
            ref = cvxpy_worst_case(d.x_bar, us.grid.nodes, us.grid.measure, us.mean, us.radius) - b
            worst_yes = max(worst_yes, wc, ref)
            bad += max(wc, ref) > 2 * inst.delta + 1e-3
        else:
            no += 1
            p = d.flagged
            _, M = density_moments(p)
            exact = slice_exact_min(M, a, r) - b
            member = us.contains(p, tol=1e-5)
            bad += not (d.answer.lower > 0 and exact > 0 and member)
    elapsed = time.perf_counter() - start
    report(7, bad == 0 and yes + no >= 10 and elapsed < 300,
           f"{yes} YES (max worst-case g = {worst_yes:.4f} <= 2 delta + 1e-3), {no} NO "
           f"(certificates confirmed), {bad} violations, {elapsed:.1f}s")


def test_criterion_8_quarter_disk():
    us = UncertaintySet.quarter_disk(64, mean=(UNIFORM_MEAN, UNIFORM_MEAN))
    viol = us.violations(us.uniform())
    inst = DrspInstance(us, BallOracle(), delta=0.05, bracket=(0.0, 1.0), bracket_tol=1e-2)
    res = binary_search_optimize(inst)
    lo, hi = res.interval
    ok = lo <= 0.0 <= hi and res.width <= inst.bracket_tol + 2 * inst.delta and max(viol.values()) <= 1e-6
    report(8, ok, f"interval [{lo:.4g}, {hi:.4g}] width {res.width:.4g} <= {inst.bracket_tol + 0.1:.4g}; "
           f"uniform density max violation {max(viol.values()):.1e} at resolution 64")


def _cli(args, cwd):
    return subprocess.run([sys.executable, "-m", "hilbert_ogd.cli", *map(str, args)],
                          cwd=cwd, capture_output=True)


def test_criterion_9_determinism(tmp_path):
    (tmp_path / "sets.csv").write_text("ball,1\nhyperplane,1.2,1,1\nnonneg\n")
    (tmp_path / "x.csv").write_text("0.5,-0.3\n")
    runs = {
        "classifier": ["classifier", "--synthetic", 40, "--eps", 1e-3, "--seed", 9],
        "risk": ["risk", "--rounds", 60, "--eps", 1e-3, "--seed", 9],
        "drsp": ["drsp", "--grid-res", 12, "--oracle", "slice", "--slice", "1,1,1", "--seed", 9],
    }
    same = []
    for name, args in runs.items():
        blobs = []
        for k in range(2):
            out = tmp_path / f"{name}{k}.csv"
            proc = _cli(args + ["--out", out], tmp_path)
            assert proc.returncode == 0, proc.stderr
            blobs.append(out.read_bytes() + Path(str(out) + ".summary.txt").read_bytes())
        same.append((name, blobs[0] == blobs[1]))
    outs = [_cli(["project", "--sets", "sets.csv", "--point", "x.csv"], tmp_path).stdout
            for _ in range(2)]
    same.append(("project", outs[0] == outs[1]))
    report(9, all(s for _, s in same),
           "byte-identical repeats: " + ", ".join(f"{n} {'yes' if s else 'NO'}" for n, s in same))


if __name__ == "__main__":
    import tempfile

    failures = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                if "tmp_path" in fn.__code__.co_varnames[: fn.__code__.co_argcount]:
                    with tempfile.TemporaryDirectory() as d:
                        fn(Path(d))
                else:
                    fn()
            except AssertionError:
                failures += 1
    sys.exit(1 if failures else 0)
