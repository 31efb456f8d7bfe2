"""JSON run configuration.

A config file is a single JSON object. Every key is optional except where
noted; unknown keys anywhere are rejected so that typos do not silently fall
back to defaults.

.. code-block:: json

    {
      "objective": {"name": "ackley", "dimension": 2, "noise": 0.0,
                    "resample": 1, "drift": null},
      "space": {"names": ["x0", "x1"], "lower": [-1.5, -1.5], "upper": [1.5, 1.5]},
      "F": 0.9, "CR": 0.9, "E": 0.5, "N": 20, "lifetime": 10,
      "threshold": 0.005, "mean_guard": 1e-9, "budget": 1000000, "seed": 0,
      "output": {"dir": "runs/ackley2", "trace": "trace.csv", "report": "report.json"},
      "bench": {"runs": 50}
    }

``objective.name`` is ``ackley`` or ``simulated``; an external evaluator is
selected with ``objective.command`` instead (a string or argument list
speaking the line protocol), in which case ``space`` is required.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .engine import OptimizerConfig, ParameterSpace
from .errors import ConfigurationError
from .objectives import ACKLEY_HALF_WIDTH, AckleyMax, Drifting, Noisy, Resampled, SimulatedExperiment

BUILTIN = ("ackley", "simulated")

OBJECTIVE_KEYS = {"name", "command", "dimension", "noise", "resample", "drift", "timeout",
                  "landscape_seed", "sharpness", "coupling", "scale"}
SPACE_KEYS = {"names", "lower", "upper"}
OUTPUT_KEYS = {"dir", "trace", "report", "results"}
BENCH_KEYS = {"runs", "budget", "fraction", "min_success", "dimensions", "dimension",
              "population_sizes", "sigmas", "variants"}
VARIANT_KEYS = {"name", "lifetime", "resample"}
ENGINE_KEYS = {"F", "CR", "E", "N", "lifetime", "threshold", "mean_guard", "budget", "seed"}
TOP_KEYS = ENGINE_KEYS | {"objective", "space", "output", "bench"}


@dataclass
class ObjectiveSpec:
    name: Optional[str] = "ackley"
    command: object = None
    dimension: Optional[int] = None
    noise: float = 0.0
    resample: int = 1
    drift: Optional[list] = None
    timeout: float = 60.0
    landscape_seed: int = 1012
    sharpness: float = 6.0
    coupling: float = 0.5
    scale: float = 1e6

    @property
    def external(self):
        return self.command is not None


@dataclass
class BenchSpec:
    runs: Optional[int] = None
    budget: Optional[int] = None
    fraction: float = 0.05
    min_success: Optional[float] = None
    dimensions: list = field(default_factory=lambda: list(range(1, 11)))
    dimension: Optional[int] = None
    population_sizes: Optional[list] = None
    sigmas: list = field(default_factory=lambda: [0.0, 0.01, 0.05, 0.10, 0.25])
    variants: Optional[list] = None


@dataclass
class RunConfig:
    objective: ObjectiveSpec
    space: ParameterSpace
    optimizer: OptimizerConfig
    output_dir: Optional[str] = None
    trace_name: str = "trace.csv"
    report_name: str = "report.json"
    results_name: Optional[str] = None
    bench: BenchSpec = field(default_factory=BenchSpec)
    source: Optional[str] = None

    @property
    def cost(self) -> int:
        """Budget units per logical evaluation."""
        return self.objective.resample

    @property
    def generation_cost(self) -> int:
        """Evaluations charged for one generation without refreshes."""
        return self.optimizer.N * self.cost

    def with_seed(self, seed):
        return dataclasses.replace(self, optimizer=dataclasses.replace(self.optimizer, seed=seed))


def _check_keys(data, allowed, where):
    if not isinstance(data, dict):
        raise ConfigurationError(f"{where or 'config'} must be a JSON object", field=where or None)
    unknown = sorted(set(data) - allowed)
    if unknown:
        prefix = f"{where}." if where else ""
        raise ConfigurationError(
            f"unknown key {prefix}{unknown[0]} (allowed: {', '.join(sorted(allowed))})",
            field=prefix + unknown[0])


def _number(data, key, where, kind=float, allow_none=False):
    value = data[key]
    name = f"{where}.{key}" if where else key
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"{name} must be a number, got {value!r}", field=name)
    if kind is int:
        if float(value) != int(value):
            raise ConfigurationError(f"{name} must be an integer, got {value!r}", field=name)
        return int(value)
    return float(value)


def _vector(value, name):
    if not isinstance(value, list) or not value or any(
            isinstance(v, bool) or not isinstance(v, (int, float)) for v in value):
        raise ConfigurationError(f"{name} must be a non-empty list of numbers", field=name)
    return [float(v) for v in value]


def _parse_objective(data) -> ObjectiveSpec:
    _check_keys(data, OBJECTIVE_KEYS, "objective")
    spec = ObjectiveSpec()
    if "command" in data:
        cmd = data["command"]
        if not (isinstance(cmd, str) and cmd.strip()) and not (
                isinstance(cmd, list) and cmd and all(isinstance(c, str) for c in cmd)):
            raise ConfigurationError("objective.command must be a string or list of strings",
                                     field="objective.command")
        spec.command = cmd
        spec.name = None
        if "name" in data:
            raise ConfigurationError("give either objective.name or objective.command, not both",
                                     field="objective.name")
    elif "name" in data:
        if data["name"] not in BUILTIN:
            raise ConfigurationError(
                f"objective.name must be one of {', '.join(BUILTIN)}, got {data['name']!r}",
                field="objective.name")
        spec.name = data["name"]
    for key in ("dimension", "resample", "landscape_seed"):
        if key in data:
            setattr(spec, key, _number(data, key, "objective", int))
    for key in ("noise", "timeout", "sharpness", "coupling", "scale"):
        if key in data:
            setattr(spec, key, _number(data, key, "objective"))
    if spec.dimension is not None and spec.dimension < 1:
        raise ConfigurationError("objective.dimension must be >= 1", field="objective.dimension")
    if not spec.noise >= 0 or not math.isfinite(spec.noise):
        raise ConfigurationError(f"objective.noise must be >= 0, got {spec.noise}",
                                 field="objective.noise")
    if spec.resample < 1:
        raise ConfigurationError(f"objective.resample must be >= 1, got {spec.resample}",
                                 field="objective.resample")
    if not spec.timeout > 0:
        raise ConfigurationError("objective.timeout must be > 0", field="objective.timeout")
    if not 0 <= spec.coupling < 1:
        raise ConfigurationError("objective.coupling must lie in [0, 1)", field="objective.coupling")
    if data.get("drift") is not None:
        spec.drift = _vector(data["drift"], "objective.drift")
    if spec.external and (spec.noise or spec.drift):
        bad = "objective.noise" if spec.noise else "objective.drift"
        raise ConfigurationError(f"{bad} applies to built-in objectives only", field=bad)
    if spec.drift is not None and spec.name != "ackley":
        raise ConfigurationError("objective.drift is supported for ackley only",
                                 field="objective.drift")
    return spec


def _default_space(spec: ObjectiveSpec) -> ParameterSpace:
    if spec.name == "ackley":
        return ParameterSpace.cube(spec.dimension or 2, -ACKLEY_HALF_WIDTH, ACKLEY_HALF_WIDTH)
    return ParameterSpace.cube(spec.dimension or 21, 0.0, 1.0)


def _parse_space(data, spec: ObjectiveSpec) -> ParameterSpace:
    if data is None:
        if spec.external:
            raise ConfigurationError("space is required for an external objective", field="space")
        return _default_space(spec)
    _check_keys(data, SPACE_KEYS, "space")
    for key in ("lower", "upper"):
        if key not in data:
            raise ConfigurationError(f"space.{key} is required", field=f"space.{key}")
    lower = _vector(data["lower"], "space.lower")
    upper = _vector(data["upper"], "space.upper")
    names = data.get("names", [])
    if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
        raise ConfigurationError("space.names must be a list of strings", field="space.names")
    if len(lower) != len(upper) or (names and len(names) != len(lower)):
        raise ConfigurationError("space.lower, space.upper and space.names differ in length",
                                 field="space")
    return ParameterSpace(lower, upper, names=tuple(names))


def _check_space_fits(space: ParameterSpace, spec: ObjectiveSpec):
    if spec.dimension is not None and spec.dimension != space.dimension:
        raise ConfigurationError(
            f"objective.dimension={spec.dimension} but space has {space.dimension} components",
            field="objective.dimension")
    if spec.drift is not None and len(spec.drift) != space.dimension:
        raise ConfigurationError(f"objective.drift needs {space.dimension} components",
                                 field="objective.drift")
    if spec.external:
        return
    if spec.name == "ackley" and spec.drift is not None:
        return  # the drifting landscape is evaluated outside its home box
    box = _default_space(dataclasses.replace(spec, dimension=space.dimension))
    outside = np.flatnonzero((space.lower < box.lower) | (space.upper > box.upper))
    if outside.size:
        n = int(outside[0])
        label = space.names[n] if space.names else f"component {n}"
        raise ConfigurationError(
            f"space bounds for {label} leave the {spec.name} domain "
            f"[{box.lower[n]:g}, {box.upper[n]:g}]", field=f"space[{n}]")


def _parse_bench(data) -> BenchSpec:
    bench = BenchSpec()
    if data is None:
        return bench
    _check_keys(data, BENCH_KEYS, "bench")
    for key in ("runs", "budget", "dimension"):
        if key in data:
            setattr(bench, key, _number(data, key, "bench", int))
            if getattr(bench, key) < 1:
                raise ConfigurationError(f"bench.{key} must be >= 1", field=f"bench.{key}")
    for key in ("fraction", "min_success"):
        if key in data:
            setattr(bench, key, _number(data, key, "bench"))
    if not bench.fraction >= 0:
        raise ConfigurationError("bench.fraction must be >= 0", field="bench.fraction")
    if bench.min_success is not None and not 0 <= bench.min_success <= 1:
        raise ConfigurationError("bench.min_success must lie in [0, 1]", field="bench.min_success")
    for key in ("dimensions", "population_sizes"):
        if key in data:
            values = _vector(data[key], f"bench.{key}")
            if any(v != int(v) or v < 1 for v in values):
                raise ConfigurationError(f"bench.{key} must hold positive integers",
                                         field=f"bench.{key}")
            setattr(bench, key, [int(v) for v in values])
    if "sigmas" in data:
        bench.sigmas = _vector(data["sigmas"], "bench.sigmas")
        if any(not s >= 0 for s in bench.sigmas):
            raise ConfigurationError("bench.sigmas must be >= 0", field="bench.sigmas")
    if "variants" in data:
        from .bench import Variant

        if not isinstance(data["variants"], list) or not data["variants"]:
            raise ConfigurationError("bench.variants must be a non-empty list",
                                     field="bench.variants")
        variants = []
        for i, v in enumerate(data["variants"]):
            where = f"bench.variants[{i}]"
            _check_keys(v, VARIANT_KEYS, where)
            if not isinstance(v.get("name"), str):
                raise ConfigurationError(f"{where}.name is required", field=f"{where}.name")
            lifetime = _number(v, "lifetime", where, int, allow_none=True) if "lifetime" in v else None
            if lifetime is not None and lifetime < 1:
                raise ConfigurationError(f"{where}.lifetime must be >= 1 or null",
                                         field=f"{where}.lifetime")
            resample = v.get("resample", 1)
            counts = resample if isinstance(resample, list) else [resample]
            if not counts or any(isinstance(k, bool) or not isinstance(k, int) or k < 1
                                 for k in counts):
                raise ConfigurationError(f"{where}.resample must be an integer >= 1 or a list",
                                         field=f"{where}.resample")
            variants.append(Variant(v["name"], lifetime,
                                    tuple(resample) if isinstance(resample, list) else resample))
        bench.variants = variants
    return bench


def parse_config(data, source=None) -> RunConfig:
    _check_keys(data, TOP_KEYS, "")
    spec = _parse_objective(data.get("objective", {}))
    space = _parse_space(data.get("space"), spec)
    _check_space_fits(space, spec)

    engine = {}
    for key in ENGINE_KEYS:
        if key not in data:
            continue
        if key in ("N", "seed", "budget"):
            engine[key] = _number(data, key, "", int)
        elif key == "lifetime":
            engine[key] = _number(data, key, "", int, allow_none=True)
        else:
            engine[key] = _number(data, key, "")
    if "budget" in engine:
        engine["max_evaluations"] = engine.pop("budget")
    optimizer = OptimizerConfig(**engine)
    if optimizer.max_evaluations < optimizer.N * spec.resample:
        raise ConfigurationError(
            f"budget={optimizer.max_evaluations} cannot pay for the initial generation "
            f"(N * resample = {optimizer.N * spec.resample})", field="budget")

    out = data.get("output", {})
    _check_keys(out, OUTPUT_KEYS, "output")
    for key, value in out.items():
        if not isinstance(value, str) or not value:
            raise ConfigurationError(f"output.{key} must be a non-empty string",
                                     field=f"output.{key}")
    return RunConfig(
        objective=spec, space=space, optimizer=optimizer,
        output_dir=out.get("dir"), trace_name=out.get("trace", "trace.csv"),
        report_name=out.get("report", "report.json"), results_name=out.get("results"),
        bench=_parse_bench(data.get("bench")), source=source)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc.strerror or exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(
            f"{path}:{exc.lineno}:{exc.colno}: invalid JSON ({exc.msg})") from exc
    return parse_config(data, source=str(path))


def build_objective(config: RunConfig, noise_rng=None, workers=1):
    """Instantiate the configured objective. Returns ``(objective, closer)``."""
    spec = config.objective
    d = config.space.dimension
    if spec.external:
        from .protocol import Session, SessionPool

        if workers > 1:
            obj = SessionPool(spec.command, d, size=workers, timeout=spec.timeout)
        else:
            obj = Session(spec.command, d, timeout=spec.timeout)
        wrapped = Resampled(obj, spec.resample) if spec.resample > 1 else obj
        return wrapped, obj.close
    if spec.name == "ackley":
        obj = AckleyMax(d, half_width=math.inf if spec.drift is not None else ACKLEY_HALF_WIDTH)
    else:
        obj = SimulatedExperiment(d, lower=0.0, upper=1.0, scale=spec.scale,
                                  sharpness=spec.sharpness, coupling=spec.coupling,
                                  seed=spec.landscape_seed)
    if spec.drift is not None:
        obj = Drifting(obj, spec.drift)
    if spec.noise > 0:
        obj = Noisy(obj, spec.noise, noise_rng if noise_rng is not None else np.random.default_rng())
    if spec.resample > 1:
        obj = Resampled(obj, spec.resample)
    return obj, None
