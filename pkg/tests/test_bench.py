import csv
import dataclasses
import json
import math

import numpy as np
import pytest

from lilde.bench import (
    CSV_HEADER,
    Problem,
    TrialOutcome,
    Variant,
    ackley_problem,
    aggregate,
    linear_r2,
    load_results,
    loglog_slope,
    run_until_success,
    success_check,
    sweep_dimensions,
    sweep_noise,
    sweep_popsize,
    write_results,
)
from lilde.engine import OptimizerConfig, ParameterSpace
from lilde.errors import ConfigurationError
from lilde.objectives import FunctionObjective

CFG = OptimizerConfig(F=0.5, CR=0.3, E=0.5, N=10, lifetime=10, threshold=1e-9)
BOX1 = ParameterSpace([-1.5], [1.5])


def test_success_exact_optimum():
    for fraction in (0.0, 0.05, 1.0):
        assert success_check([0.3, 0.1], [0.3, 0.1], ParameterSpace.cube(2, 0, 1), fraction)


@pytest.mark.parametrize("best,expected", [(0.14, True), (0.15, True), (0.16, False),
                                           (-0.16, False)])
def test_success_threshold_arithmetic(best, expected):
    assert success_check([best], [0.0], BOX1, 0.05) is expected


def test_success_is_conjunction():
    space = ParameterSpace.cube(3, -1.5, 1.5)
    assert not success_check([0.0, 0.0, 0.2], np.zeros(3), space, 0.05)


def test_success_monotone_in_fraction():
    rng = np.random.default_rng(0)
    space = ParameterSpace.cube(4, -1.5, 1.5)
    for _ in range(500):
        best = rng.uniform(-0.2, 0.2, 4)
        if success_check(best, np.zeros(4), space, 0.02):
            assert success_check(best, np.zeros(4), space, 0.05)


def test_trivial_problem_converges():
    problem = Problem("parabola", BOX1, np.array([0.4]),
                      lambda rng: FunctionObjective(lambda x: -float((x[0] - 0.4) ** 2)))
    out = run_until_success(problem, dataclasses.replace(CFG, N=6), 5_000, seed=1)
    assert out.converged
    assert out.evaluations <= 5_000
    assert abs(out.best_x[0] - 0.4) <= 0.15
    assert all(f >= 0 for f in out.fractions)


def test_budget_for_no_generation():
    problem = ackley_problem(3)
    out = run_until_success(problem, CFG, 9, seed=0)
    assert not out.converged
    assert out.evaluations == 0 and out.generations == 0


def test_budget_for_initial_generation_only():
    problem = ackley_problem(3)
    # pick a seed whose initial population does not already succeed
    for seed in range(50):
        out = run_until_success(problem, CFG, CFG.N, seed)
        if not out.converged:
            break
    assert out.evaluations == CFG.N
    assert out.generations == 0


def test_same_seed_same_outcome():
    problem = ackley_problem(4, sigma=0.05)
    a = run_until_success(problem, CFG, 20_000, seed=7)
    b = run_until_success(problem, CFG, 20_000, seed=7)
    assert a == b


def test_noise_charges_resample_budget():
    problem = ackley_problem(2, sigma=0.05, resample=4)
    out = run_until_success(problem, CFG, 400, seed=3)
    assert out.evaluations % 4 == 0
    assert out.evaluations <= 400


def test_aggregate_uses_converged_runs():
    trials = [TrialOutcome(i, c, e, 1, [0.0], [0.0]) for i, (c, e) in
              enumerate([(True, 100), (True, 300), (False, 5000)])]
    r = aggregate(2, trials)
    assert (r.mean_evals, r.std_evals, r.runs) == (200.0, 100.0, 3)
    assert r.success_rate == pytest.approx(2 / 3)


def test_aggregate_nothing_converged():
    r = aggregate(1, [TrialOutcome(0, False, 10, 1, [], [])])
    assert math.isnan(r.mean_evals) and r.success_rate == 0.0


def test_sweep_dimensions_small():
    results = sweep_dimensions([1, 2, 3], 6, CFG, population_sizes=(6, 10), budget=20_000)
    assert [r.variable for r in results] == [1, 2, 3]
    assert all(r.runs == 6 for r in results)
    assert results[0].mean_evals == min(r.mean_evals for r in results)
    assert {c["N"] for c in results[0].extra["candidates"]} == {6, 10}
    seeds = [t.seed for r in results for t in r.trials]
    assert len(seeds) == len(set(seeds))


def test_sweep_popsize_rejects_small_elite():
    with pytest.raises(ConfigurationError) as info:
        sweep_popsize([4, 6, 10], 5, 2, CFG)
    assert info.value.field == "N"


def test_sweep_popsize_small():
    results = sweep_popsize([6, 10], 2, 4, CFG, budget=10_000)
    assert [r.variable for r in results] == [6, 10]


def test_sweep_noise_variants_and_k_search():
    variants = (Variant("lilde-10", 10), Variant("de-resampled", None, (1, 4)))
    out = sweep_noise([0.0, 0.05], 3, CFG, variants, dimension=2, budget=20_000)
    assert set(out) == {"lilde-10", "de-resampled"}
    assert all(len(v) == 2 for v in out.values())
    for r in out["de-resampled"]:
        assert r.runs == 3
        assert r.extra["k"] in (1, 4)


def test_sweep_noise_aborted_candidate_not_reported():
    # k=1 with a budget below one generation never converges and is dropped
    # after the first failure; k=2 likewise, but as the last candidate it runs fully
    variants = (Variant("de-resampled", None, (1, 2)),)
    out = sweep_noise([0.0], 4, CFG, variants, dimension=2, budget=5, min_success=1.0)
    r = out["de-resampled"][0]
    assert r.runs == 4 and r.extra["k"] == 2
    assert r.extra["candidates"][0]["runs"] == 1


def test_loglog_slope_and_r2():
    x = np.arange(1, 11)
    assert loglog_slope(x, 3 * x ** 1.5) == pytest.approx(1.5)
    assert linear_r2(x, 2 * x + 1) == pytest.approx(1.0)
    assert linear_r2(x, np.exp(x)) < 0.9


# -- files --------------------------------------------------------------------

def _results():
    trials = [TrialOutcome(i, i % 3 != 0, 100 + 7 * i, 5 + i, [0.1 * i], [0.01 * i], i)
              for i in range(6)]
    return [aggregate(1, trials[:3]), aggregate(2, trials[3:])]


def test_empty_results_header_only(tmp_path):
    csv_path, sidecar = write_results([], tmp_path / "empty.csv")
    assert csv_path.read_text() == ",".join(CSV_HEADER) + "\n"
    assert json.loads(sidecar.read_text())["results"] == []


def test_sidecar_round_trip_matches_csv(tmp_path):
    results = _results()
    csv_path, sidecar = write_results(results, tmp_path / "r.csv",
                                      meta={"seed": 0, "constants": {"F": 0.5}})
    loaded, meta, complete = load_results(sidecar)
    assert complete and meta["seed"] == 0
    rows = list(csv.reader(csv_path.open()))
    assert rows[0] == CSV_HEADER
    for row, orig, back in zip(rows[1:], results, loaded):
        assert [float(v) for v in row] == orig.row() == back.row()
        assert back.trials == orig.trials


def test_grouped_results_have_algorithm_column(tmp_path):
    results = {"lilde-10": _results(), "de": _results()[:1]}
    csv_path, sidecar = write_results(results, tmp_path / "noise.csv")
    rows = list(csv.reader(csv_path.open()))
    assert rows[0] == ["algorithm"] + CSV_HEADER
    assert [r[0] for r in rows[1:]] == ["lilde-10", "lilde-10", "de"]
    loaded, _, _ = load_results(sidecar)
    assert {k: [r.row() for r in v] for k, v in loaded.items()} == \
        {k: [r.row() for r in v] for k, v in results.items()}


def test_csv_dot_decimal_under_other_locale(tmp_path, monkeypatch):
    import locale

    for name in ("de_DE.UTF-8", "fr_FR.UTF-8"):
        try:
            locale.setlocale(locale.LC_NUMERIC, name)
            break
        except locale.Error:
            continue
    try:
        csv_path, _ = write_results(_results(), tmp_path / "r.csv")
    finally:
        locale.setlocale(locale.LC_NUMERIC, "C")
    text = csv_path.read_text()
    assert "," not in text.splitlines()[1].replace(",", "", 4)
    assert "." in text.splitlines()[1]


def test_sidecar_seeds_reproduce_trials(tmp_path):
    problem = ackley_problem(2)
    results = sweep_popsize([6], 2, 3, CFG, budget=5_000)
    _, sidecar = write_results(results, tmp_path / "p.csv")
    loaded, _, _ = load_results(sidecar)
    for t in loaded[0].trials:
        again = run_until_success(problem, dataclasses.replace(CFG, N=6), 5_000, t.seed)
        assert again == t
