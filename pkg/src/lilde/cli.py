"""Command-line entry point: ``lilde optimize|bench|validate <config.json>``.

Progress goes to stdout, one line per generation or sweep point; data goes
to files only. The output directory is ``--out``, else ``output.dir`` from
the config, else ``$LILDE_OUTPUT_DIR``, else ``./lilde-output``.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .bench import (DEFAULT_VARIANTS, PRESWEEP_N, _split_seed, config_provenance,
                    sweep_dimensions, sweep_noise, sweep_popsize, write_results)
from .config import RunConfig, build_objective, load_config
from .engine import BudgetExhausted, Optimizer, Termination, elite_count
from .errors import ConfigurationError, EvaluationError

OUTPUT_ENV = "LILDE_OUTPUT_DIR"
DEFAULT_OUTPUT = "lilde-output"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_BUDGET = 2
EXIT_INTERRUPTED = 130

TRACE_HEADER = ["generation", "best", "mean", "std", "cum_evals"]


def output_dir(flag, config: RunConfig) -> Path:
    chosen = flag or config.output_dir or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT
    return Path(chosen)


def _error(message):
    print(f"error: {message}", file=sys.stderr)
    return EXIT_ERROR


def _write_json(path: Path, data):
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(data, indent=1), encoding="utf-8")
    tmp.replace(path)


def cmd_optimize(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    if args.workers < 1:
        raise ConfigurationError("--workers must be >= 1", field="workers")
    out = output_dir(args.out, config)
    out.mkdir(parents=True, exist_ok=True)

    engine_seed, noise_rng = _split_seed(config.optimizer.seed)
    opt_config = config.optimizer.__class__(**{**config_provenance(config.optimizer),
                                               "seed": engine_seed})
    objective, closer = build_objective(config, noise_rng, workers=args.workers)
    pool = None
    if args.workers > 1 and not config.objective.external:
        pool = ThreadPoolExecutor(args.workers)

    trace_path = out / config.trace_name
    report_path = out / config.report_name
    names = list(config.space.names) or [f"x{n}" for n in range(config.space.dimension)]
    reason = "error"
    message = None
    opt = Optimizer(config.space, opt_config, objective, pool=pool)
    try:
        with open(trace_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRACE_HEADER)

            def record(stats):
                writer.writerow([stats.generation, repr(stats.best), repr(stats.mean),
                                 repr(stats.std), stats.evaluations])
                fh.flush()
                print(f"gen {stats.generation:5d}  best {stats.best:.6g}  mean {stats.mean:.6g}  "
                      f"std/mean {stats.ratio:.3g}  evals {stats.evaluations}", flush=True)

            stats = opt.start()
            while True:
                record(stats)
                if opt.should_stop(stats):
                    trace = opt.finish(Termination.THRESHOLD)
                    break
                try:
                    stats = opt.step()
                except BudgetExhausted:
                    trace = opt.finish(Termination.BUDGET)
                    break
        reason = trace.reason.value
    except EvaluationError as exc:
        message = str(exc)
    finally:
        if pool is not None:
            pool.shutdown()
        if closer is not None:
            closer()

    report = {
        "reason": reason,
        "generations": len(opt.trace.generations) - 1 if opt.trace.generations else 0,
        "evaluations": opt.trace.evaluations,
        "refresh_evaluations": opt.trace.refresh_evaluations,
        "seed": config.optimizer.seed,
        "config": {**config_provenance(config.optimizer), "source": config.source},
    }
    if reason != "error":
        best = trace.best
        report.update({"best_x": dict(zip(names, best.x.tolist())),
                       "best_vector": best.x.tolist(), "best_fitness": best.fitness})
    else:
        report["error"] = message
    _write_json(report_path, report)

    if reason == "error":
        return _error(message)
    print(f"done: {reason} after {report['evaluations']} evaluations; "
          f"report {report_path}", flush=True)
    return EXIT_OK if reason == Termination.THRESHOLD.value else EXIT_BUDGET


def cmd_bench(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    if config.objective.external or config.objective.name != "ackley":
        print("note: bench sweeps use the built-in ackley objective; "
              "the objective section is ignored", file=sys.stderr)
    b = config.bench
    out = output_dir(args.out, config)
    path = out / (config.results_name or f"{args.kind}.csv")
    meta = {"kind": args.kind, "seed": config.optimizer.seed, "source": config.source,
            "constants": config_provenance(config.optimizer)}
    common = dict(seed=config.optimizer.seed, fraction=b.fraction)

    def progress(partial):
        write_results(partial, path, meta, complete=False)
        if isinstance(partial, dict):
            # variants are filled in order, so the newest point is on the
            # last of the longest series
            longest = max(len(rs) for rs in partial.values())
            name = [n for n, rs in partial.items() if len(rs) == longest][-1]
            r = partial[name][-1]
            label = f"{name} sigma={r.variable:g}"
        else:
            r = partial[-1]
            label = f"{args.kind} {r.variable:g}"
        print(f"{label}: mean_evals {r.mean_evals:.6g}  std {r.std_evals:.6g}  "
              f"success {r.success_rate:.2f}  runs {r.runs}", flush=True)

    if args.kind == "noise":
        empty = {v.name: [] for v in (b.variants or DEFAULT_VARIANTS)}
    else:
        empty = []
    write_results(empty, path, meta, complete=False)
    try:
        if args.kind == "dims":
            results = sweep_dimensions(
                b.dimensions, b.runs or 50, config.optimizer,
                population_sizes=b.population_sizes or PRESWEEP_N, budget=b.budget or 100_000,
                min_success=0.9 if b.min_success is None else b.min_success,
                progress=progress, **common)
        elif args.kind == "noise":
            results = sweep_noise(
                b.sigmas, b.runs or 20, config.optimizer, b.variants or DEFAULT_VARIANTS,
                dimension=b.dimension or 10, budget=b.budget or 2_000_000,
                min_success=0.8 if b.min_success is None else b.min_success,
                progress=progress, **common)
        else:
            results = sweep_popsize(
                b.population_sizes or [6, 8, 10, 12, 15, 25, 50], b.dimension or 5,
                b.runs or 50, config.optimizer, budget=b.budget or 100_000,
                progress=progress, **common)
    except KeyboardInterrupt:
        print(f"interrupted; partial results in {path.with_suffix('.json')}", file=sys.stderr)
        return EXIT_INTERRUPTED
    write_results(results, path, meta, complete=True)
    print(f"done: {path}", flush=True)
    return EXIT_OK


def cmd_validate(args) -> int:
    config = load_config(args.config)
    opt = config.optimizer
    spec = config.objective
    objective = "external " + repr(spec.command) if spec.external else spec.name
    print(f"objective: {objective}, dimension {config.space.dimension}")
    print(f"elite size: ceil({opt.E:g} * {opt.N}) = {elite_count(opt.E, opt.N)}")
    print(f"evaluations per generation: {config.generation_cost} "
          f"(+{config.cost} per refreshed member)")
    print(f"budget: {opt.max_evaluations} evaluations, "
          f"at most {(opt.max_evaluations - config.generation_cost) // config.generation_cost} "
          f"generations after the initial one")
    print("ok")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="lilde", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", help="run one optimization")
    p.add_argument("config")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1,
                   help="parallel evaluations (1 = serial, the default)")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("bench", help="run a benchmark sweep")
    p.add_argument("kind", choices=["dims", "noise", "popsize"])
    p.add_argument("config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("validate", help="check a config without evaluating anything")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        where = f" [{exc.field}]" if getattr(exc, "field", None) else ""
        return _error(f"invalid configuration{where}: {exc}")
    except OSError as exc:
        return _error(str(exc))


if __name__ == "__main__":
    sys.exit(main())
