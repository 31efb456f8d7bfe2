"""Objective functions and the wrappers used to make them noisy or drifting.

Every objective works on single vectors (``f(x)``) and on stacked rows
(``f.batch(X)``). Wrappers draw all of their randomness for a batch before the
wrapped objective is called, so handing the rows to a thread pool does not
change any value.
"""

from __future__ import annotations

import numpy as np

from .engine import ParameterSpace
from .errors import DomainError

ACKLEY_PEAK = 28.0
ACKLEY_HALF_WIDTH = 1.5


class Objective:
    """Base for objectives.

    Subclasses implement :meth:`evaluate` for one vector, :meth:`batch` for
    stacked rows, or both.

    Attributes
    ----------
    dimension : int or None
        Expected vector length, ``None`` if any length is accepted.
    cost : int
        Budget units one logical call consumes.
    serial : bool
        True when calls must not overlap; ``pool`` is then ignored.
    space, optimum
        Natural search box and known maximizer, where there is one.
    """

    dimension = None
    cost = 1
    serial = False
    space = None
    optimum = None

    def evaluate(self, x) -> float:
        return float(self.batch(np.asarray(x, dtype=float)[None, :])[0])

    def batch(self, X, pool=None) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if pool is None or self.serial or len(X) < 2:
            return np.array([self.evaluate(x) for x in X], dtype=float)
        return np.fromiter(pool.map(self.evaluate, X), dtype=float, count=len(X))

    def __call__(self, x) -> float:
        return self.evaluate(np.asarray(x, dtype=float))


class FunctionObjective(Objective):
    """Adapts a plain callable ``f(x) -> float``."""

    def __init__(self, func, dimension=None, space=None, optimum=None, serial=False):
        self.func = func
        self.dimension = dimension
        self.space = space
        self.optimum = None if optimum is None else np.asarray(optimum, dtype=float)
        self.serial = serial

    def evaluate(self, x):
        return float(self.func(x))


def as_objective(obj):
    return obj if isinstance(obj, Objective) else FunctionObjective(obj)


def ackley(X):
    """Classic Ackley function (a=20, b=0.2, c=2*pi), minimum 0 at the origin.

    Accepts one vector or rows of vectors.
    """
    X = np.asarray(X, dtype=float)
    d = X.shape[-1]
    r = np.sqrt(np.sum(X * X, axis=-1) / d)
    c = np.sum(np.cos(2.0 * np.pi * X), axis=-1) / d
    return -20.0 * np.exp(-0.2 * r) - np.exp(c) + 20.0 + np.e


def ackley_max(x, half_width=ACKLEY_HALF_WIDTH):
    """``28 - ackley(x)`` on the box ``[-half_width, half_width]^d``.

    The peak value 28 sits at the origin; inside the default box each axis has
    ripples at about -1, 0 and +1, which gives 3**d local maxima.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] < 1:
        raise DomainError("ackley_max needs at least one component")
    # written so that NaN also fails the test
    if not np.abs(x).max() <= half_width:
        raise DomainError(f"point outside [-{half_width}, {half_width}]^d")
    return ACKLEY_PEAK - ackley(x)


class AckleyMax(Objective):
    """:func:`ackley_max` with its peak moved to ``center``.

    ``half_width`` bounds ``x - center``; widen it when the optimum moves
    around inside the search box (drift experiments).
    """

    def __init__(self, dimension, center=None, half_width=ACKLEY_HALF_WIDTH):
        self.dimension = int(dimension)
        self.center = np.zeros(self.dimension) if center is None else np.asarray(center, dtype=float)
        self.half_width = float(half_width)
        self.space = ParameterSpace.cube(self.dimension, -ACKLEY_HALF_WIDTH, ACKLEY_HALF_WIDTH)
        self.optimum = self.center.copy()

    def batch(self, X, pool=None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dimension:
            raise DomainError(f"expected {self.dimension} components, got {X.shape[1]}")
        return np.atleast_1d(ackley_max(X - self.center, self.half_width))

    def evaluate(self, x):
        return float(self.batch(x)[0])


class Noisy(Objective):
    """Multiplicative shot-to-shot noise: ``f(x) * (1 + sigma * g)``, g ~ N(0, 1).

    Values are not clipped, so the wrapper stays unbiased even when a draw
    pushes a value below zero.
    """

    def __init__(self, base, sigma, rng):
        if sigma < 0:
            raise ValueError(f"noise fraction must be >= 0, got {sigma}")
        self.base = as_objective(base)
        self.sigma = float(sigma)
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.dimension = self.base.dimension
        self.cost = self.base.cost
        self.serial = self.base.serial
        self.space = self.base.space
        self.optimum = self.base.optimum

    def batch(self, X, pool=None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.sigma == 0.0:
            return self.base.batch(X, pool=pool)
        g = self.rng.standard_normal(len(X))
        return self.base.batch(X, pool=pool) * (1.0 + self.sigma * g)

    def evaluate(self, x):
        return float(self.batch(x)[0])


class Drifting(Objective):
    """The landscape translates by ``velocity`` per evaluation.

    Evaluation number t (counting from 0) returns ``base(x - t*velocity)``,
    so the maximizer after t evaluations is ``base.optimum + t*velocity``.
    """

    def __init__(self, base, velocity):
        self.base = as_objective(base)
        self.velocity = np.asarray(velocity, dtype=float)
        if self.base.dimension is not None and self.velocity.size != self.base.dimension:
            raise ValueError("velocity must have one entry per component")
        self.count = 0
        self.dimension = self.base.dimension
        self.cost = self.base.cost
        self.serial = self.base.serial
        self.space = self.base.space

    @property
    def optimum(self):
        if self.base.optimum is None:
            return None
        return self.base.optimum + self.count * self.velocity

    def batch(self, X, pool=None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        t = self.count + np.arange(len(X))
        self.count += len(X)
        return self.base.batch(X - t[:, None] * self.velocity, pool=pool)

    def evaluate(self, x):
        return float(self.batch(x)[0])


class Resampled(Objective):
    """Average of ``k`` independent evaluations; charges ``k`` budget units."""

    def __init__(self, base, k):
        if int(k) != k or k < 1:
            raise ValueError(f"resample count must be an integer >= 1, got {k}")
        self.base = as_objective(base)
        self.k = int(k)
        self.dimension = self.base.dimension
        self.cost = self.base.cost * self.k
        self.serial = self.base.serial
        self.space = self.base.space
        self.optimum = self.base.optimum

    def batch(self, X, pool=None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.k == 1:
            return self.base.batch(X, pool=pool)
        values = self.base.batch(np.repeat(X, self.k, axis=0), pool=pool)
        return values.reshape(len(X), self.k).mean(axis=1)

    def evaluate(self, x):
        return float(self.batch(x)[0])


class Negated(Objective):
    """Turns a function to minimize into one the engine can maximize."""

    def __init__(self, base):
        self.base = as_objective(base)
        self.dimension = self.base.dimension
        self.cost = self.base.cost
        self.serial = self.base.serial
        self.space = self.base.space
        self.optimum = self.base.optimum

    def batch(self, X, pool=None):
        return -self.base.batch(X, pool=pool)

    def evaluate(self, x):
        return float(self.batch(x)[0])


def with_noise(base, sigma, rng):
    return Noisy(base, sigma, rng)


def with_drift(base, velocity):
    return Drifting(base, velocity)


def with_resampling(base, k):
    return Resampled(base, k)


class SimulatedExperiment(Objective):
    """Stand-in for a lab apparatus with correlated knobs.

    ``scale * exp(-|M (x - x_opt) / width|^2)``: a single bump whose axes are
    tilted by the fixed mixing matrix ``M`` so that no knob can be tuned on
    its own. ``M = sharpness * (I + coupling * S)`` with ``S`` a symmetric,
    zero-diagonal matrix of unit spectral norm, which keeps the singular
    values of ``M`` inside ``sharpness * [1 - coupling, 1 + coupling]``.
    Everything is drawn from ``seed``, so the landscape is fixed per seed.
    """

    def __init__(self, dimension=21, lower=0.0, upper=1.0, scale=1e6,
                 sharpness=6.0, coupling=0.5, seed=1012):
        if not 0.0 <= coupling < 1.0:
            raise ValueError("coupling must lie in [0, 1)")
        self.dimension = int(dimension)
        self.space = ParameterSpace(np.broadcast_to(np.asarray(lower, dtype=float), (self.dimension,)),
                                    np.broadcast_to(np.asarray(upper, dtype=float), (self.dimension,)))
        self.scale = float(scale)
        rng = np.random.default_rng(seed)
        self.optimum = self.space.lower + self.space.width * rng.uniform(0.3, 0.7, self.dimension)
        S = rng.standard_normal((self.dimension, self.dimension))
        S = S + S.T
        np.fill_diagonal(S, 0.0)
        norm = np.abs(np.linalg.eigvalsh(S)).max() if self.dimension > 1 else 1.0
        self.mixing = sharpness * (np.eye(self.dimension) + coupling * S / norm)

    def batch(self, X, pool=None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dimension:
            raise DomainError(f"expected {self.dimension} components, got {X.shape[1]}")
        if not np.all((X >= self.space.lower) & (X <= self.space.upper)):
            raise DomainError("point outside the experiment's parameter box")
        z = ((X - self.optimum) / self.space.width) @ self.mixing.T
        return self.scale * np.exp(-np.einsum("ij,ij->i", z, z))

    def evaluate(self, x):
        return float(self.batch(x)[0])


def simulated_experiment(x, **kwargs):
    return SimulatedExperiment(len(x), **kwargs).evaluate(x)
