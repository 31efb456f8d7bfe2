"""Repeated seeded runs and the sweeps built on them.

A trial runs the optimizer until the best member of a generation is within
``fraction`` of the parameter range of the known optimum in every component
("success"), until the optimizer's own ratio test stops it, or until the
budget is spent. Evaluations-to-success is counted at the end of the
generation in which success is first observed.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .engine import (BudgetExhausted, Decision, OptimizerConfig, Optimizer, ParameterSpace,
                     check_termination, elite_count, evaluation_cost)
from .errors import ConfigurationError
from .objectives import AckleyMax, Noisy, Resampled, SimulatedExperiment

CSV_HEADER = ["variable", "mean_evals", "std_evals", "success_rate", "runs"]

PRESWEEP_N = (6, 8, 10, 12, 15)


@dataclass
class Problem:
    """A search box, its known maximizer, and a recipe for the objective.

    ``factory(rng)`` builds a fresh objective for one trial; ``rng`` feeds
    any simulated measurement noise.
    """

    name: str
    space: ParameterSpace
    optimum: np.ndarray
    factory: Callable[[np.random.Generator], object]


def ackley_problem(dimension, sigma=0.0, resample=1) -> Problem:
    base = AckleyMax(dimension)

    def factory(rng):
        obj = base
        if sigma > 0:
            obj = Noisy(obj, sigma, rng)
        if resample > 1:
            obj = Resampled(obj, resample)
        return obj

    name = f"ackley{dimension}" + (f"-noise{sigma:g}" if sigma else "") + (
        f"-k{resample}" if resample > 1 else "")
    return Problem(name, base.space, base.optimum, factory)


def simulated_problem(sigma=0.05, **kwargs) -> Problem:
    base = SimulatedExperiment(**kwargs)

    def factory(rng):
        return Noisy(base, sigma, rng) if sigma > 0 else base

    return Problem(f"simulated{base.dimension}-noise{sigma:g}", base.space, base.optimum, factory)


def success_check(best, optimum, space: ParameterSpace, fraction) -> bool:
    best = np.asarray(best, dtype=float)
    optimum = np.asarray(optimum, dtype=float)
    return bool(np.all(np.abs(best - optimum) <= fraction * space.width))


@dataclass
class TrialOutcome:
    seed: int
    converged: bool
    evaluations: int
    generations: int
    best_x: list
    fractions: list
    refresh_evaluations: int = 0

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass
class SweepResult:
    variable: float
    mean_evals: float
    std_evals: float
    success_rate: float
    runs: int
    label: str = ""
    extra: dict = field(default_factory=dict)
    trials: list = field(default_factory=list)

    def row(self):
        return [self.variable, self.mean_evals, self.std_evals, self.success_rate, self.runs]


def aggregate(variable, trials: Sequence[TrialOutcome], label="", extra=None) -> SweepResult:
    """Mean and population std of evaluations over the converged trials.

    Both are NaN when nothing converged.
    """
    evals = np.array([t.evaluations for t in trials if t.converged], dtype=float)
    mean = float(evals.mean()) if evals.size else math.nan
    std = float(evals.std()) if evals.size else math.nan
    rate = float(np.mean([t.converged for t in trials])) if trials else math.nan
    return SweepResult(variable, mean, std, rate, len(trials), label, dict(extra or {}),
                       list(trials))


def _split_seed(seed):
    engine_ss, noise_ss = np.random.SeedSequence(seed).spawn(2)
    return int(engine_ss.generate_state(1)[0]), np.random.default_rng(noise_ss)


def run_until_success(problem: Problem, config: OptimizerConfig, budget: int, seed: int,
                      fraction: float = 0.05) -> TrialOutcome:
    """One seeded optimization, stopped at first success.

    ``budget`` counts evaluations including the initial generation. A budget
    too small for the initial generation yields zero evaluations.
    """
    engine_seed, noise_rng = _split_seed(seed)
    objective = problem.factory(noise_rng)
    cost = evaluation_cost(objective)
    if budget < config.N * cost:
        return TrialOutcome(seed, False, 0, 0, [], [], 0)
    config = dataclasses.replace(config, seed=engine_seed, max_evaluations=int(budget))
    opt = Optimizer(problem.space, config, objective)
    stats = opt.start()
    converged = False
    while True:
        if success_check(stats.best_x, problem.optimum, problem.space, fraction):
            converged = True
            break
        if config.threshold > 0 and check_termination(
                stats, config.threshold, config.mean_guard) is Decision.TERMINATE:
            break
        try:
            stats = opt.step()
        except BudgetExhausted:
            break
    fractions = np.abs(stats.best_x - problem.optimum) / problem.space.width
    return TrialOutcome(
        seed=int(seed), converged=converged, evaluations=stats.evaluations,
        generations=stats.generation, best_x=stats.best_x.tolist(),
        fractions=fractions.tolist(), refresh_evaluations=opt.trace.refresh_evaluations)


def run_trials(problem, config, budget, seeds, fraction=0.05):
    return [run_until_success(problem, config, budget, s, fraction) for s in seeds]


class _Seeds:
    """Hands out consecutive seeds so no two trials of a sweep share one."""

    def __init__(self, start):
        self.next = int(start)

    def take(self, count):
        seeds = list(range(self.next, self.next + count))
        self.next += count
        return seeds


def _pick_best(candidates, min_success):
    """Lowest mean evaluations among candidates meeting ``min_success``.

    Falls back to the highest success rate when none qualifies.
    """
    good = [c for c in candidates if c.success_rate >= min_success]
    if good:
        return min(good, key=lambda c: c.mean_evals)
    return max(candidates, key=lambda c: (c.success_rate, -np.nan_to_num(c.mean_evals, nan=np.inf)))


def sweep_dimensions(dimensions, runs, config: OptimizerConfig, *, population_sizes=PRESWEEP_N,
                     budget=100_000, seed=0, fraction=0.05, min_success=0.9,
                     progress=None) -> list:
    """Noiseless Ackley for each dimension, keeping the best population size.

    Every size in ``population_sizes`` is run ``runs`` times; the reported
    result is the size with the fewest mean evaluations among those reaching
    ``min_success``.
    """
    seeds = _Seeds(seed)
    results = []
    for d in dimensions:
        problem = ackley_problem(d)
        candidates = []
        for n in population_sizes:
            if elite_count(config.E, n) < 3:
                continue
            cfg = dataclasses.replace(config, N=n)
            trials = run_trials(problem, cfg, budget, seeds.take(runs), fraction)
            candidates.append(aggregate(d, trials, extra={"N": n}))
        if not candidates:
            raise ConfigurationError(f"no population size in {population_sizes} is valid "
                                     f"for E={config.E}", field="E")
        best = _pick_best(candidates, min_success)
        best.extra["candidates"] = [
            {"N": c.extra["N"], "mean_evals": c.mean_evals, "success_rate": c.success_rate}
            for c in candidates]
        results.append(best)
        if progress:
            progress(results)
    return results


@dataclass(frozen=True)
class Variant:
    """One algorithm in a noise comparison.

    ``resample`` is a fixed count, or a tuple of counts to choose from per
    noise level (the cheapest one reaching ``min_success`` wins).
    """

    name: str
    lifetime: Optional[int]
    resample: object = 1


DEFAULT_VARIANTS = (
    Variant("lilde-5", 5),
    Variant("lilde-10", 10),
    Variant("lilde-20", 20),
    Variant("de", None),
    Variant("de-resampled", None, (1, 2, 4, 8, 16, 32, 64, 128, 256)),
)


def sweep_noise(sigmas, runs, config: OptimizerConfig, variants=DEFAULT_VARIANTS, *,
                dimension=10, budget=2_000_000, seed=0, fraction=0.05, min_success=0.8,
                progress=None) -> dict:
    """Evaluations-to-success against noise level, per algorithm variant."""
    seeds = _Seeds(seed)
    out = {v.name: [] for v in variants}
    for sigma in sigmas:
        for v in variants:
            cfg = dataclasses.replace(config, lifetime=v.lifetime)
            counts = v.resample if isinstance(v.resample, (tuple, list)) else (v.resample,)
            candidates = []
            for i, k in enumerate(counts):
                problem = ackley_problem(dimension, sigma, k)
                # a candidate that can no longer reach min_success is abandoned,
                # except the last one, which is the fallback and always complete
                allowed = runs - math.ceil(min_success * runs - 1e-9)
                can_abort = len(counts) > 1 and i < len(counts) - 1
                trials = []
                for s in seeds.take(runs):
                    trials.append(run_until_success(problem, cfg, budget, s, fraction))
                    if can_abort and sum(not t.converged for t in trials) > allowed:
                        break
                result = aggregate(sigma, trials, label=v.name, extra={"k": k})
                if len(trials) < runs:
                    result.extra["aborted"] = True
                candidates.append(result)
                if len(counts) > 1 and result.success_rate >= min_success:
                    # larger k only multiplies the cost once the noise is tamed
                    break
            complete = [c for c in candidates if not c.extra.get("aborted")]
            best = _pick_best(complete, min_success)
            if len(counts) > 1:
                best.extra["candidates"] = [
                    {"k": c.extra["k"], "mean_evals": c.mean_evals,
                     "success_rate": c.success_rate, "runs": c.runs} for c in candidates]
            out[v.name].append(best)
            if progress:
                progress(out)
    return out


def sweep_popsize(population_sizes, dimension, runs, config: OptimizerConfig, *,
                  budget=100_000, seed=0, fraction=0.05, progress=None) -> list:
    """Noiseless Ackley at fixed dimension for each population size."""
    for n in population_sizes:
        if elite_count(config.E, n) < 3:
            raise ConfigurationError(
                f"N={n} gives elite size ceil({config.E}*{n})={elite_count(config.E, n)} < 3",
                field="N")
    seeds = _Seeds(seed)
    problem = ackley_problem(dimension)
    results = []
    for n in population_sizes:
        cfg = dataclasses.replace(config, N=n)
        trials = run_trials(problem, cfg, budget, seeds.take(runs), fraction)
        results.append(aggregate(n, trials))
        if progress:
            progress(results)
    return results


def loglog_slope(x, y):
    """Least-squares slope of log(y) against log(x)."""
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def linear_r2(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    total = np.sum((y - y.mean()) ** 2)
    return float(1.0 - np.sum(resid ** 2) / total) if total > 0 else 1.0


# -- files --------------------------------------------------------------------

def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_results(results, path, meta=None, complete=True):
    """Write ``path`` as CSV plus a JSON sidecar next to it.

    ``results`` is a list of :class:`SweepResult`, or a dict of such lists
    keyed by algorithm name; the latter adds a leading ``algorithm`` column.
    Floats are written in shortest round-trip form, so the CSV can be
    compared exactly against aggregates recomputed from the sidecar.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    grouped = isinstance(results, dict)
    rows = []
    if grouped:
        for name, series in results.items():
            rows.extend((name, r) for r in series)
    else:
        rows = [(None, r) for r in results]

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow((["algorithm"] if grouped else []) + CSV_HEADER)
        for name, r in rows:
            writer.writerow(([name] if grouped else []) + [_fmt(v) for v in r.row()])

    sidecar = {
        "complete": bool(complete),
        "meta": meta or {},
        "grouped": grouped,
        "results": [
            {"algorithm": name, "variable": r.variable, "label": r.label,
             "mean_evals": r.mean_evals, "std_evals": r.std_evals,
             "success_rate": r.success_rate, "runs": r.runs, "extra": r.extra,
             "trials": [t.to_dict() for t in r.trials]}
            for name, r in rows
        ],
    }
    sidecar_path = path.with_suffix(".json")
    tmp = sidecar_path.with_suffix(".json.tmp")
    tmp.write_text(json.dumps(sidecar, indent=1, allow_nan=True), encoding="utf-8")
    tmp.replace(sidecar_path)
    return path, sidecar_path


def load_results(sidecar_path):
    """Read a sidecar back; returns ``(results, meta, complete)``.

    ``results`` mirrors what was passed to :func:`write_results`, with the
    aggregates recomputed from the stored trials.
    """
    data = json.loads(Path(sidecar_path).read_text(encoding="utf-8"))
    grouped = data.get("grouped", False)
    out = {} if grouped else []
    for entry in data["results"]:
        trials = [TrialOutcome.from_dict(t) for t in entry["trials"]]
        r = aggregate(entry["variable"], trials, entry.get("label", ""), entry.get("extra"))
        if grouped:
            out.setdefault(entry["algorithm"], []).append(r)
        else:
            out.append(r)
    return out, data.get("meta", {}), data.get("complete", False)


def config_provenance(config: OptimizerConfig) -> dict:
    return {f.name: getattr(config, f.name) for f in dataclasses.fields(config)}
