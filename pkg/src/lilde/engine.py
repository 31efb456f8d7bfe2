"""Differential Evolution with limited individual lifetime (LILDE).

The engine maximizes. A generation is held as three parallel arrays
(vectors, measured fitness, age) so one generation costs a handful of numpy
calls regardless of population size; :class:`Individual` is only a view for
callers that want one member at a time.

Random draws for a step happen in a fixed order before any evaluation:
parent picks for every target, then the forced crossover indices, then the
crossover uniforms. Evaluators that fan out over threads therefore cannot
change the trajectory.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import BudgetExhausted, ConfigurationError

UNLIMITED = None
"""Lifetime sentinel: individuals never expire (plain DE)."""


@dataclass(frozen=True)
class ParameterSpace:
    """Box of admissible parameter vectors, ``lower[n] <= x[n] <= upper[n]``."""

    lower: np.ndarray
    upper: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.ndim != 1 or lower.shape != upper.shape:
            raise ConfigurationError("lower and upper bounds must be 1-d of equal length",
                                     field="bounds")
        if lower.size < 1:
            raise ConfigurationError("parameter space needs at least one dimension",
                                     field="bounds")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise ConfigurationError("bounds must be finite", field="bounds")
        bad = np.flatnonzero(lower >= upper)
        if bad.size:
            n = int(bad[0])
            label = self.names[n] if n < len(self.names) else f"component {n}"
            raise ConfigurationError(
                f"bounds of {label}: lower {lower[n]!r} must be < upper {upper[n]!r}",
                field=f"bounds[{n}]")
        names = tuple(self.names)
        if names and len(names) != lower.size:
            raise ConfigurationError("one name per component required", field="names")
        lower.flags.writeable = False
        upper.flags.writeable = False
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "names", names)

    @classmethod
    def cube(cls, dimension, low, high):
        return cls(np.full(dimension, float(low)), np.full(dimension, float(high)))

    @property
    def dimension(self) -> int:
        return self.lower.size

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def clip(self, x):
        """Place every out-of-box component on the violated boundary."""
        return np.minimum(np.maximum(x, self.lower), self.upper)

    def contains(self, x) -> bool:
        x = np.asarray(x)
        return bool(np.all((x >= self.lower) & (x <= self.upper)))


@dataclass(frozen=True)
class OptimizerConfig:
    """DE constants and run controls.

    Attributes
    ----------
    F : float
        Amplification constant applied to the difference vector, in (0, 1].
    CR : float
        Crossover probability, in (0, 1].
    E : float
        Elite fraction; mutation parents come from the best ``ceil(E*N)``.
    N : int
        Population size.
    lifetime : int or None
        Generations a measurement stays valid before the individual is
        re-evaluated. ``None`` disables expiry (plain DE).
    threshold : float
        Termination threshold on std/|mean| of the generation's fitness.
    mean_guard : float
        The ratio test is skipped while ``|mean| < mean_guard``.
    max_evaluations : int
        Evaluation budget for a whole run, initial generation included.
    seed : int
        Seed of the run's random generator.
    """

    F: float = 0.9
    CR: float = 0.9
    E: float = 0.5
    N: int = 20
    lifetime: Optional[int] = 10
    threshold: float = 0.005
    mean_guard: float = 1e-9
    max_evaluations: int = 1_000_000
    seed: int = 0

    def __post_init__(self):
        for name in ("F", "CR", "E"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and 0.0 < value <= 1.0):
                raise ConfigurationError(f"{name}={value!r} is outside (0, 1]", field=name)
        if isinstance(self.N, bool) or not isinstance(self.N, (int, np.integer)) or self.N < 4:
            raise ConfigurationError(f"N={self.N!r} must be an integer >= 4", field="N")
        if self.elite_size < 3:
            raise ConfigurationError(
                f"elite size ceil(E*N)=ceil({self.E}*{self.N})={self.elite_size} is below 3",
                field="E")
        if self.lifetime is not None and (
                isinstance(self.lifetime, bool) or not isinstance(self.lifetime, (int, np.integer))
                or self.lifetime < 1):
            raise ConfigurationError(
                f"lifetime={self.lifetime!r} must be an integer >= 1 or unlimited",
                field="lifetime")
        if not (self.threshold >= 0.0):
            raise ConfigurationError(f"threshold={self.threshold!r} must be >= 0",
                                     field="threshold")
        if not (self.mean_guard >= 0.0):
            raise ConfigurationError(f"mean_guard={self.mean_guard!r} must be >= 0",
                                     field="mean_guard")
        if (isinstance(self.max_evaluations, bool)
                or not isinstance(self.max_evaluations, (int, np.integer))
                or self.max_evaluations < 1):
            raise ConfigurationError(
                f"max_evaluations={self.max_evaluations!r} must be a positive integer",
                field="max_evaluations")

    @property
    def elite_size(self) -> int:
        return elite_count(self.E, self.N)


def elite_count(E, N):
    # guard against E*N landing a hair above an integer
    return int(math.ceil(round(E * N, 9)))


@dataclass
class Individual:
    x: np.ndarray
    fitness: float
    age: int = 0


@dataclass
class Population:
    """One generation: ``X`` is (N, d), ``fitness`` and ``age`` are (N,)."""

    X: np.ndarray
    fitness: np.ndarray
    age: np.ndarray
    generation: int = 0

    def __len__(self):
        return self.X.shape[0]

    def __getitem__(self, i) -> Individual:
        return Individual(self.X[i].copy(), float(self.fitness[i]), int(self.age[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def evaluated(self) -> bool:
        return not np.any(np.isnan(self.fitness))

    def copy(self) -> "Population":
        return Population(self.X.copy(), self.fitness.copy(), self.age.copy(), self.generation)

    def best_index(self) -> int:
        # np.argmax returns the first maximum, i.e. ties go to the lower index
        return int(np.argmax(self.fitness))


@dataclass(frozen=True)
class GenerationStats:
    generation: int
    best: float
    mean: float
    std: float
    evaluations: int
    best_x: np.ndarray
    refreshed: int = 0

    @property
    def ratio(self) -> float:
        """std/|mean|; infinite when the mean is exactly zero."""
        return self.std / abs(self.mean) if self.mean != 0 else math.inf


class Termination(str, enum.Enum):
    THRESHOLD = "threshold-met"
    BUDGET = "budget-exhausted"


class Decision(str, enum.Enum):
    TERMINATE = "terminate"
    CONTINUE = "continue"
    GUARD = "inapplicable-guard"


@dataclass
class OptimizationTrace:
    generations: list = field(default_factory=list)
    best: Optional[Individual] = None
    reason: Optional[Termination] = None
    refresh_evaluations: int = 0

    @property
    def evaluations(self) -> int:
        return self.generations[-1].evaluations if self.generations else 0


@dataclass
class TrialBatch:
    """Everything drawn to build one trial population.

    ``parents[i]`` holds the population indices (j, k, l) used for target i,
    ``mask[i, n]`` is True where the trial took component n from the mutant.
    """

    parents: np.ndarray
    forced: np.ndarray
    mask: np.ndarray
    mutants: np.ndarray
    trials: np.ndarray


# -- evaluation plumbing ----------------------------------------------------

def _evaluate(objective, X, pool=None) -> np.ndarray:
    batch = getattr(objective, "batch", None)
    if batch is not None:
        values = batch(X, pool=pool)
    else:
        values = [objective(x) for x in X]
    return np.asarray(values, dtype=float).reshape(len(X))


def evaluation_cost(objective) -> int:
    """Budget units charged per logical call of ``objective``."""
    return int(getattr(objective, "cost", 1))


# -- operations -------------------------------------------------------------

def init_population(space: ParameterSpace, config: OptimizerConfig, rng) -> Population:
    """Draw ``config.N`` vectors uniformly from the box; fitness left as NaN."""
    if not isinstance(config, OptimizerConfig):
        raise ConfigurationError("config must be an OptimizerConfig")
    X = space.lower + space.width * rng.random((config.N, space.dimension))
    # the affine map can round past the upper bound by an ulp
    X = space.clip(X)
    return Population(X, np.full(config.N, np.nan), np.zeros(config.N, dtype=int), 0)


def elite_indices(population, E) -> np.ndarray:
    """Indices of the best ``ceil(E*N)`` members, best first.

    ``population`` may be a :class:`Population` or a bare fitness sequence.
    Equal fitness ranks the lower index first.
    """
    fitness = population.fitness if isinstance(population, Population) else population
    fitness = np.asarray(fitness, dtype=float)
    if np.isnan(fitness).any():
        raise ValueError("elite ranking needs every member evaluated")
    size = elite_count(E, fitness.size)
    if size < 3:
        raise ConfigurationError(f"elite size {size} is below 3", field="E")
    order = np.argsort(-fitness, kind="stable")
    return order[:size]


def difference_mutant(xj, xk, xl, F, space: Optional[ParameterSpace] = None):
    """``xj + F*(xk - xl)``, clamped to ``space`` when one is given."""
    v = np.asarray(xj, dtype=float) + F * (np.asarray(xk, dtype=float) - np.asarray(xl, dtype=float))
    return space.clip(v) if space is not None else v


def pick_parents(elite, count, rng) -> np.ndarray:
    """``count`` rows of three distinct members of ``elite``, uniform over triples."""
    elite = np.asarray(elite)
    if elite.size < 3:
        raise ConfigurationError(f"elite of size {elite.size} cannot supply three parents",
                                 field="E")
    # the first three columns of a random permutation per row
    picks = np.argsort(rng.random((count, elite.size)), axis=1)[:, :3]
    return elite[picks]


def mutate(population: Population, elite, F, space: ParameterSpace, rng) -> np.ndarray:
    """One mutant vector built from three distinct elite members."""
    j, k, l = pick_parents(elite, 1, rng)[0]
    X = population.X
    return difference_mutant(X[j], X[k], X[l], F, space)


def crossover_mask(count, dimension, CR, rng):
    """Per-row forced index and the mask of components taken from the mutant."""
    forced = rng.integers(0, dimension, size=count)
    # 1 - U[0,1) is uniform on (0,1]
    draws = 1.0 - rng.random((count, dimension))
    mask = draws <= CR
    mask[np.arange(count), forced] = True
    return forced, mask


def recombine(parent, mutant, CR, rng) -> np.ndarray:
    parent = np.asarray(parent, dtype=float)
    mutant = np.asarray(mutant, dtype=float)
    if parent.shape != mutant.shape or parent.ndim != 1:
        raise ValueError(f"parent {parent.shape} and mutant {mutant.shape} differ in shape")
    _, mask = crossover_mask(1, parent.size, CR, rng)
    return np.where(mask[0], mutant, parent)


def breed(population: Population, elite, config: OptimizerConfig,
          space: ParameterSpace, rng) -> TrialBatch:
    """Mutation and recombination for every member of ``population``."""
    X = population.X
    count, dimension = X.shape
    parents = pick_parents(elite, count, rng)
    mutants = space.clip(X[parents[:, 0]] + config.F * (X[parents[:, 1]] - X[parents[:, 2]]))
    forced, mask = crossover_mask(count, dimension, config.CR, rng)
    trials = np.where(mask, mutants, X)
    return TrialBatch(parents, forced, mask, mutants, trials)


def select(parent: Individual, trial: Individual) -> Individual:
    """Greedy survivor choice; a tie keeps the fresher trial."""
    return trial if trial.fitness >= parent.fitness else parent


def expired(population: Population, lifetime) -> np.ndarray:
    if lifetime is UNLIMITED:
        return np.zeros(0, dtype=int)
    return np.flatnonzero(population.age >= lifetime)


def refresh_expired(population: Population, lifetime, objective, pool=None):
    """Re-measure members whose age reached ``lifetime``.

    The new measurement replaces the stored one. Returns the updated
    population and the number of budget units spent.
    """
    stale = expired(population, lifetime)
    if stale.size == 0:
        return population, 0
    population = population.copy()
    population.fitness[stale] = _evaluate(objective, population.X[stale], pool)
    population.age[stale] = 0
    return population, int(stale.size) * evaluation_cost(objective)


def generation_stats(population: Population, evaluations: int, refreshed: int = 0) -> GenerationStats:
    f = population.fitness
    b = population.best_index()
    mean = f.sum() / f.size
    dev = f - mean
    return GenerationStats(
        generation=population.generation,
        best=float(f[b]),
        mean=float(mean),
        std=float(np.sqrt(dev @ dev / f.size)),  # population std (ddof=0)
        evaluations=int(evaluations),
        best_x=population.X[b].copy(),
        refreshed=int(refreshed),
    )


def check_termination(stats, threshold, mean_guard=1e-9) -> Decision:
    """Ratio test std/|mean| < threshold, skipped for near-zero means.

    ``stats`` is a :class:`GenerationStats` or a sequence of fitness values.
    """
    if not isinstance(stats, GenerationStats):
        values = np.asarray(stats, dtype=float)
        mean, std = float(values.mean()), float(values.std())
    else:
        mean, std = stats.mean, stats.std
    if abs(mean) < mean_guard or mean == 0.0:
        return Decision.GUARD
    return Decision.TERMINATE if std / abs(mean) < threshold else Decision.CONTINUE


def evaluate_population(population: Population, objective, pool=None) -> int:
    """Measure every member in place; returns budget units spent."""
    population.fitness[:] = _evaluate(objective, population.X, pool)
    population.age[:] = 0
    return len(population) * evaluation_cost(objective)


def step(population: Population, config: OptimizerConfig, objective, rng, *,
         space: ParameterSpace, evaluations: int = 0, pool=None,
         on_trials: Optional[Callable[[TrialBatch], None]] = None):
    """Advance one generation.

    Order: refresh expired members, rank the elite, build and evaluate the
    trial population, pairwise selection, ageing. ``evaluations`` is the
    running total before the step; the returned stats carry the new total.
    Raises :class:`BudgetExhausted` before spending anything if the whole
    generation does not fit in the remaining budget.
    """
    cost = evaluation_cost(objective)
    stale = expired(population, config.lifetime)
    needed = (stale.size + len(population)) * cost
    remaining = config.max_evaluations - evaluations
    if needed > remaining:
        raise BudgetExhausted(needed, remaining)

    population, refreshed = refresh_expired(population, config.lifetime, objective, pool)
    elite = elite_indices(population, config.E)
    batch = breed(population, elite, config, space, rng)
    if on_trials is not None:
        on_trials(batch)
    trial_fitness = _evaluate(objective, batch.trials, pool)

    wins = trial_fitness >= population.fitness
    X = np.where(wins[:, None], batch.trials, population.X)
    fitness = np.where(wins, trial_fitness, population.fitness)
    age = np.where(wins, 0, population.age + 1)
    new = Population(X, fitness, age, population.generation + 1)
    total = evaluations + refreshed + len(population) * cost
    return new, generation_stats(new, total, refreshed)


class Optimizer:
    """Stateful driver around :func:`init_population` and :func:`step`.

    Useful when the caller wants to look at every generation (success checks,
    live progress); :func:`run` is the one-call version.
    """

    def __init__(self, space: ParameterSpace, config: OptimizerConfig, objective,
                 pool=None, on_trials=None):
        if space.dimension < 1:
            raise ConfigurationError("empty parameter space")
        self.space = space
        self.config = config
        self.objective = objective
        self.pool = pool
        self.on_trials = on_trials
        self.rng = np.random.default_rng(config.seed)
        self.population: Optional[Population] = None
        self.trace = OptimizationTrace()

    @property
    def evaluations(self) -> int:
        return self.trace.evaluations

    def start(self) -> GenerationStats:
        cost = evaluation_cost(self.objective)
        if self.config.N * cost > self.config.max_evaluations:
            raise ConfigurationError(
                f"budget of {self.config.max_evaluations} evaluations cannot cover the "
                f"initial generation ({self.config.N * cost})", field="max_evaluations")
        population = init_population(self.space, self.config, self.rng)
        spent = evaluate_population(population, self.objective, self.pool)
        self.population = population
        stats = generation_stats(population, spent)
        self.trace.generations.append(stats)
        return stats

    def step(self) -> GenerationStats:
        if self.population is None:
            return self.start()
        self.population, stats = step(
            self.population, self.config, self.objective, self.rng,
            space=self.space, evaluations=self.evaluations, pool=self.pool,
            on_trials=self.on_trials)
        self.trace.generations.append(stats)
        self.trace.refresh_evaluations += stats.refreshed * evaluation_cost(self.objective)
        return stats

    def should_stop(self, stats: GenerationStats) -> bool:
        return check_termination(stats, self.config.threshold,
                                 self.config.mean_guard) is Decision.TERMINATE

    def finish(self, reason: Termination) -> OptimizationTrace:
        self.trace.reason = reason
        self.trace.best = self.population[self.population.best_index()]
        return self.trace


def run(space: ParameterSpace, config: OptimizerConfig, objective, *, pool=None,
        callback: Optional[Callable[[GenerationStats], None]] = None) -> OptimizationTrace:
    """Optimize until the ratio test fires or the budget runs out.

    The answer is the best measured member of the last full generation.
    """
    opt = Optimizer(space, config, objective, pool=pool)
    stats = opt.start()
    while True:
        if callback is not None:
            callback(stats)
        if opt.should_stop(stats):
            return opt.finish(Termination.THRESHOLD)
        try:
            stats = opt.step()
        except BudgetExhausted:
            return opt.finish(Termination.BUDGET)

