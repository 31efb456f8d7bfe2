"""Acceptance criteria 1-9, each at its stated tolerance.

Every test records a one-line verdict that is printed in the pytest terminal
summary. The long sweeps (criteria 2, 3, 4, 6) take minutes each; run just
this file with ``pytest tests/test_acceptance.py -v``.

Ackley experiments use one simulation constant family, F=0.5, CR=0.3, E=0.5,
picked on a noiseless dimension pre-sweep. A stagnation give-up
(``threshold=1e-9``) stops runs that have collapsed onto a side maximum.
"""

import dataclasses
import math
import sys

import numpy as np
import pytest

from lilde.bench import (
    Variant,
    linear_r2,
    loglog_slope,
    success_check,
    sweep_dimensions,
    sweep_noise,
    sweep_popsize,
)
from lilde.engine import (
    Decision,
    OptimizerConfig,
    ParameterSpace,
    check_termination,
    elite_indices,
    evaluate_population,
    init_population,
    run,
    step,
)
from lilde.errors import ConfigurationError, EvaluationError, EvaluationTimeout, ProtocolError
from lilde.objectives import AckleyMax, Noisy, SimulatedExperiment, ackley_max
from lilde.protocol import session

pytestmark = pytest.mark.acceptance

FAMILY = OptimizerConfig(F=0.5, CR=0.3, E=0.5, N=15, lifetime=10, threshold=1e-9)
REFERENCE = [sys.executable, "-m", "lilde.reference_evaluator"]


# -- 1 -------------------------------------------------------------------------

def longhand_ackley_max(*axes):
    grids = np.meshgrid(*axes, indexing="ij")
    d = len(grids)
    sq = sum(g ** 2 for g in grids)
    cs = sum(np.cos(2 * math.pi * g) for g in grids)
    return 28 - (-20 * np.exp(-0.2 * np.sqrt(sq / d)) - np.exp(cs / d) + 20 + math.e)


def strict_maxima(Z):
    """Interior grid points strictly above all 3^d - 1 neighbours."""
    d = Z.ndim
    core = tuple(slice(1, -1) for _ in range(d))
    mask = np.ones(Z[core].shape, dtype=bool)
    for offset in np.ndindex(*(3,) * d):
        if all(o == 1 for o in offset):
            continue
        shifted = tuple(slice(o, Z.shape[i] - 2 + o) for i, o in enumerate(offset))
        mask &= Z[core] > Z[shifted]
    return np.argwhere(mask) + 1


def test_criterion_1_ackley_structure(verdict):
    axis = np.linspace(-1.5, 1.5, 2001)
    found = {}
    gaps = {}
    global_ok = True
    for d in (1, 2):
        Z = longhand_ackley_max(*(axis,) * d)
        # the package surface and the longhand oracle must agree on the grid
        pts = np.stack(np.meshgrid(*(axis,) * d, indexing="ij"), -1).reshape(-1, d)
        assert np.allclose(ackley_max(pts), Z.ravel(), rtol=0, atol=1e-12)
        peaks = strict_maxima(Z)
        values = np.array([Z[tuple(p)] for p in peaks])
        top = int(np.argmax(values))
        global_ok &= bool(np.allclose(axis[peaks[top]], 0.0) and values[top] == pytest.approx(28.0))
        found[d] = len(peaks)
        gaps[d] = np.sort(1 - np.delete(values, top) / 28.0)
    counts_ok = found == {1: 3, 2: 9}
    gap_ok = all(np.all(np.abs(g - 0.13) <= 0.01) for g in gaps.values())
    ok = verdict(1, "Ackley structure", counts_ok and global_ok and gap_ok,
                 f"maxima d1={found[1]} d2={found[2]}, global at origin={global_ok}, "
                 f"gaps d1={np.round(gaps[1], 4).tolist()} d2={np.round(gaps[2], 4).tolist()}")
    assert ok


# -- 2 -------------------------------------------------------------------------

def test_criterion_2_dimension_scaling(verdict):
    dims = list(range(1, 11))
    results = sweep_dimensions(dims, 50, FAMILY, population_sizes=(6, 8, 10, 12, 15),
                               budget=100_000, seed=20_000, min_success=0.9)
    means = [r.mean_evals for r in results]
    rates = [r.success_rate for r in results]
    slope = loglog_slope(dims, means)
    ok = (all(r.runs == 50 for r in results) and min(rates) >= 0.9 and slope <= 1.5
          and means[0] == min(means))
    verdict(2, "dimension scaling", ok,
            f"slope={slope:.3f}, min success={min(rates):.2f}, "
            f"N={[r.extra['N'] for r in results]}, means={[round(m) for m in means]}")
    assert ok


# -- 3 -------------------------------------------------------------------------

def test_criterion_3_noise_robustness(verdict):
    variants = (Variant("lilde-10", 10), Variant("de", None))
    out = sweep_noise([0.05], 20, FAMILY, variants, dimension=10, budget=2_000_000,
                      seed=30_000)
    lilde, de = out["lilde-10"][0], out["de"][0]
    ok = lilde.success_rate >= 0.8 and de.success_rate <= 0.2
    verdict(3, "noise robustness", ok,
            f"LILDE(10) success={lilde.success_rate:.2f} mean={lilde.mean_evals:.0f}; "
            f"unlimited DE success={de.success_rate:.2f} mean={de.mean_evals:.0f}")
    assert ok


# -- 4 -------------------------------------------------------------------------

def test_criterion_4_noise_scaling(verdict):
    sigmas = [0.0, 0.01, 0.05, 0.10, 0.25]
    variants = (Variant("lilde-10", 10),
                Variant("de-resampled", None, (1, 2, 4, 8, 16, 32, 64, 128, 256)))
    out = sweep_noise(sigmas, 10, FAMILY, variants, dimension=10, budget=2_000_000,
                      seed=40_000, min_success=0.8)
    lilde = np.array([r.mean_evals for r in out["lilde-10"]])
    resampled = np.array([r.mean_evals for r in out["de-resampled"]])
    ks = [r.extra["k"] for r in out["de-resampled"]]
    complete = bool(np.all(np.isfinite(lilde)) and np.all(np.isfinite(resampled)))
    r2 = linear_r2(sigmas, lilde) if complete else float("nan")
    exponent = loglog_slope(sigmas[1:], resampled[1:]) if complete else float("nan")
    faster = complete and bool(resampled[-1] - resampled[0] > lilde[-1] - lilde[0])
    ok = complete and r2 >= 0.9 and exponent >= 1.5 and faster
    verdict(4, "noise scaling law", ok,
            f"LILDE means={np.round(lilde).tolist()} "
            f"success={[r.success_rate for r in out['lilde-10']]} R2={r2:.3f}; "
            f"resampled means={np.round(resampled).tolist()} k={ks} exponent={exponent:.2f}")
    assert ok


# -- 5 -------------------------------------------------------------------------

def test_criterion_5_refresh_overhead(verdict):
    worst = 0.0
    shares = []
    for sigma in (0.0, 0.05, 0.10):
        for seed in range(8):
            base = AckleyMax(10)
            obj = Noisy(base, sigma, np.random.default_rng(1000 + seed)) if sigma else base
            cfg = dataclasses.replace(FAMILY, threshold=0.005 if sigma == 0 else 0.0,
                                      max_evaluations=30_000, seed=seed)
            trace = run(base.space, cfg, obj)
            share = trace.refresh_evaluations / trace.evaluations
            shares.append(share)
            worst = max(worst, share)
    ok = worst <= 0.12
    verdict(5, "refresh overhead", ok,
            f"max refresh share={worst:.4f}, mean={np.mean(shares):.4f} over {len(shares)} runs")
    assert ok


# -- 6 -------------------------------------------------------------------------

def test_criterion_6_population_size(verdict):
    cfg = dataclasses.replace(FAMILY, lifetime=10)
    with pytest.raises(ConfigurationError):
        sweep_popsize([4], 5, 1, cfg)
    sizes = [6, 10, 15, 25, 50]
    results = sweep_popsize(sizes, 5, 50, cfg, budget=100_000, seed=60_000)
    means = {r.variable: r.mean_evals for r in results}
    best_n = min(means, key=means.get)
    band = [means[n] for n in sizes if 6 <= n <= 15]
    spread = (max(band) - min(band)) / min(band)
    ok = 6 <= best_n <= 15 and spread <= 0.5
    verdict(6, "population-size sensitivity", ok,
            f"argmin N={best_n}, band spread={spread:.2f}, "
            f"means={ {n: round(m) for n, m in means.items()} }, "
            f"success={ {r.variable: r.success_rate for r in results} }")
    assert ok


# -- 7 -------------------------------------------------------------------------

def first_crossing(ratios, level):
    below = np.flatnonzero(np.asarray(ratios) < level)
    return int(below[0]) if below.size else None


def test_criterion_7_simulated_experiment(verdict):
    base = SimulatedExperiment()
    hits = 0
    ordered = 0
    floors = []
    for seed in range(20):
        obj = Noisy(base, 0.05, np.random.default_rng(7000 + seed))
        cfg = OptimizerConfig(F=0.9, CR=0.9, E=0.5, N=84, lifetime=10, threshold=0.005,
                              max_evaluations=100_000, seed=seed)
        trace = run(base.space, cfg, obj)
        hits += success_check(trace.best.x, base.optimum, base.space, 0.05)
        ratios = [g.ratio for g in trace.generations]
        floors.append(min(ratios))
        marks = [first_crossing(ratios, level) for level in (0.05, 0.02, 0.005)]
        ordered += None not in marks and marks[0] <= marks[1] <= marks[2]
    ok = hits >= 16 and ordered == 20
    verdict(7, "simulated 21-parameter run", ok,
            f"within 5% in {hits}/20 runs; 5%/2%/0.5% crossed in order in {ordered}/20; "
            f"lowest std/mean per run {min(floors):.4f}..{max(floors):.4f}")
    assert ok


# -- 8 -------------------------------------------------------------------------

class CountingObjective:
    def __init__(self, centre):
        self.centre = centre
        self.calls = 0

    def batch(self, X, pool=None):
        self.calls += len(X)
        return -np.sum((X - self.centre) ** 2, axis=1) + np.sin(5 * X).sum(axis=1)


def test_criterion_8_invariants(verdict):
    rng = np.random.default_rng(8)
    failures = []
    for case in range(150):
        d = int(rng.integers(1, 6))
        lower = rng.uniform(-10, 10, d)
        space = ParameterSpace(lower, lower + rng.uniform(0.01, 5, d))
        E = float(rng.choice([0.5, 0.75, 1.0]))
        cfg = OptimizerConfig(F=float(rng.uniform(0.05, 1)), CR=float(rng.uniform(0.05, 1)),
                              E=E, N=int(rng.integers(6, 17)),
                              lifetime=[None, 1, 2, 5][case % 4], threshold=0.0,
                              seed=int(rng.integers(2 ** 32)))
        traces = []
        for _ in range(2):
            obj = CountingObjective((space.lower + space.upper) / 2)
            opt_rng = np.random.default_rng(cfg.seed)
            pop = init_population(space, cfg, opt_rng)
            evals = evaluate_population(pop, obj)
            best = pop.fitness.max()
            batches = []
            history = []
            for _ in range(10):
                elite = set(elite_indices(pop, cfg.E).tolist())
                stale = int(np.sum(pop.age >= cfg.lifetime)) if cfg.lifetime else 0
                parent_x = pop.X.copy()
                pop, stats = step(pop, cfg, obj, opt_rng, space=space, evaluations=evals,
                                  on_trials=batches.append)
                b = batches[-1]
                checks = {
                    "bounds": bool(np.all((pop.X >= space.lower) & (pop.X <= space.upper))
                                   and np.all((b.trials >= space.lower) & (b.trials <= space.upper))),
                    "monotone best": stats.best >= best,
                    "elite parents": all({j, k, l} <= elite and len({j, k, l}) == 3
                                         for j, k, l in b.parents),
                    "forced index": bool(np.all(b.mask[np.arange(cfg.N), b.forced])),
                    "mask provenance": bool(np.array_equal(
                        b.trials, np.where(b.mask, b.mutants, parent_x))),
                    "accounting": stats.evaluations == evals + cfg.N + stale == obj.calls,
                }
                for name, passed in checks.items():
                    if not passed:
                        failures.append((case, name))
                best, evals = stats.best, stats.evaluations
                history.append((pop.X.tobytes(), pop.fitness.tobytes(), pop.age.tobytes()))
            traces.append(history)
        if traces[0] != traces[1]:
            failures.append((case, "determinism"))

    arithmetic = (check_termination([10, 10, 10], 0.05) is Decision.TERMINATE
                  and check_termination([10, 20], 0.05) is Decision.CONTINUE
                  and check_termination([10, 20], 0.34) is Decision.TERMINATE
                  and check_termination([1e-12, -1e-12], 0.05, 1e-6) is Decision.GUARD)
    if not arithmetic:
        failures.append((None, "termination arithmetic"))
    ok = not failures
    verdict(8, "invariant suite", ok,
            f"150 random configurations x 10 generations; failures={failures[:5]}")
    assert ok


# -- 9 -------------------------------------------------------------------------

def test_criterion_9_protocol(verdict):
    rng = np.random.default_rng(9)
    X = rng.uniform(-1.5, 1.5, (10_000, 2))
    with session(REFERENCE, 2, timeout=10) as s:
        remote = np.array([s.evaluate(x) for x in X])
    exact = remote.tobytes() == ackley_max(X).tobytes()
    mismatches = int(np.sum(remote != ackley_max(X)))

    def raised(command, expected, timeout=10.0, retries=1):
        try:
            with session(command, 1, timeout=timeout, retries=retries) as s:
                s.evaluate([0.0])
        except expected:
            return True
        except EvaluationError:
            return False
        return False

    garbage = [sys.executable, "-c",
               "import sys\nfor l in sys.stdin: print('READY' if l.startswith('INIT') "
               "else 'NONSENSE', flush=True)"]
    paths = {
        "malformed": raised(garbage, ProtocolError),
        "fault": raised(REFERENCE + ["--fault-every", "1"], EvaluationError),
        "timeout": raised(REFERENCE + ["--delay", "0.5"], EvaluationTimeout, timeout=0.01,
                          retries=0),
    }
    ok = exact and all(paths.values())
    verdict(9, "protocol", ok,
            f"10000 vectors, bit mismatches={mismatches}; error paths={paths}")
    assert ok
