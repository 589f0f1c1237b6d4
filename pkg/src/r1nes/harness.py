"""Experiment harness: campaign configs, seeded parallel cells, aggregation.

A campaign is a grid of cells (algorithm, function, dimension), each holding
`trials` sequential runs. Cells are independent: every run's seed derives
from (base_seed, algorithm, function, dimension, trial), the problem
transform derives from (base_seed, function, dimension), so any cell can be
executed anywhere, in any order, and the numbers come out the same.

Output layout (under the campaign's output directory):
    campaign.json           normalized config echo
    manifests/suite_d<D>.json   benchmark transforms actually used
    records/<algo>__<fn>__d<D>.jsonl   one JSON line per run (no timing)
    done/<algo>__<fn>__d<D>.json       resume marker: cell digest + timing
    summary.csv             per-cell aggregates (no timing columns)
    timing.csv              per-cell wall-clock medians
    plots/evals_vs_dim_<fn>.csv        (x, y, series) = (dim, median evals, algo)
    plots/timing_vs_dim.csv            (dim, median update s/eval, algo)

Determinism contract: everything except timing.csv, done/, and
plots/timing_vs_dim.csv is a pure function of the config file; re-running a
campaign with the same config and base seed reproduces those files byte for
byte. Wall-clock numbers are quarantined in the three timing locations so
the rest can be compared bytewise. Suppressed cells (premature-convergence
fraction >= 0.9) stay in summary.csv with suppressed=true but are omitted
from plot data.

Resume: a cell is skipped when its done-marker digest matches the current
config; interrupting a campaign mid-flight leaves finished cells intact
because records are written to a temp file and atomically renamed before
the marker appears.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import baselines, benchmarks, optimizer
from .errors import (
    ConfigError,
    CovarianceError,
    DegenerateDirectionError,
    EvaluationError,
)
from .optimizer import OptimizerConfig, RunRecord

__all__ = [
    "Campaign",
    "CellSummary",
    "TimingTable",
    "load_campaign",
    "run_campaign",
    "summarize_directory",
    "timing_probe",
    "derive_run_seed",
    "derive_transform_seed",
]

WORKERS_ENV = "R1NES_WORKERS"
SUPPRESSED_THRESHOLD = 0.9
TRACE_POINT_CAP = 1024

_RUNNERS = {
    "r1nes": optimizer.run,
    "snes": baselines.run_snes,
    "xnes": baselines.run_xnes,
}

_CAMPAIGN_KEYS = {
    "algorithms",
    "functions",
    "dimensions",
    "trials",
    "budget_multiplier",
    "base_seed",
    "output_dir",
    "force_xnes",
}


@dataclass(frozen=True)
class Campaign:
    """A validated experiment grid; see load_campaign for the file format."""

    algorithms: tuple[str, ...]
    functions: tuple[str, ...]
    dimensions: tuple[int, ...]
    trials: int
    budget_multiplier: int
    base_seed: int
    output_dir: str
    force_xnes: bool = False

    def budget(self, d: int) -> int:
        return self.budget_multiplier * d

    def cells(self) -> list[tuple[str, str, int]]:
        return [
            (algo, fn, d)
            for algo in self.algorithms
            for fn in self.functions
            for d in self.dimensions
        ]

    def as_dict(self) -> dict:
        return {
            "algorithms": list(self.algorithms),
            "functions": list(self.functions),
            "dimensions": list(self.dimensions),
            "trials": self.trials,
            "budget_multiplier": self.budget_multiplier,
            "base_seed": self.base_seed,
            "output_dir": self.output_dir,
            "force_xnes": self.force_xnes,
        }


@dataclass(frozen=True)
class CellSummary:
    """Aggregates over one cell's runs."""

    algorithm: str
    function: str
    dimension: int
    trials: int
    successes: int
    median_evaluations_to_target: Optional[float]
    premature_fraction: float
    median_wall_per_evaluation: Optional[float]

    @property
    def suppressed(self) -> bool:
        return self.premature_fraction >= SUPPRESSED_THRESHOLD


def _name_key(name: str) -> int:
    """Stable 32-bit key for a name, used as a seed-derivation component."""
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:4], "big")


def derive_run_seed(base_seed: int, algorithm: str, function: str, d: int, trial: int) -> int:
    """Distinct-per-cell-and-trial run seed (uint64)."""
    ss = np.random.SeedSequence(
        base_seed, spawn_key=(_name_key(algorithm), _name_key(function), d, trial)
    )
    return int(ss.generate_state(1, np.uint64)[0])


def derive_transform_seed(base_seed: int, function: str, d: int) -> int:
    """Transform seed shared by every algorithm attacking the same
    (function, dimension) cell column, so they face the same landscape."""
    ss = np.random.SeedSequence(base_seed, spawn_key=(_name_key("transform"), _name_key(function), d))
    return int(ss.generate_state(1, np.uint64)[0])


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


def campaign_from_dict(doc: dict, source: str = "<config>") -> Campaign:
    unknown = set(doc) - _CAMPAIGN_KEYS
    _require(not unknown, f"{source}: unknown config field(s): {', '.join(sorted(unknown))}")
    missing = {"algorithms", "functions", "dimensions", "base_seed", "output_dir"} - set(doc)
    _require(not missing, f"{source}: missing config field(s): {', '.join(sorted(missing))}")

    algorithms = doc["algorithms"]
    _require(
        isinstance(algorithms, list) and algorithms,
        f"{source}: algorithms must be a non-empty list",
    )
    for a in algorithms:
        _require(a in _RUNNERS, f"{source}: unknown algorithm {a!r} (choose from {sorted(_RUNNERS)})")
    functions = doc["functions"]
    _require(isinstance(functions, list) and functions, f"{source}: functions must be a non-empty list")
    for fn in functions:
        _require(
            fn in benchmarks.FUNCTION_NAMES,
            f"{source}: unknown function {fn!r} (see benchmarks.FUNCTION_NAMES)",
        )
    dimensions = doc["dimensions"]
    _require(isinstance(dimensions, list) and dimensions, f"{source}: dimensions must be a non-empty list")
    for d in dimensions:
        _require(isinstance(d, int) and d >= 2, f"{source}: dimensions must be integers >= 2, got {d!r}")
    trials = doc.get("trials", 20)
    _require(isinstance(trials, int) and trials >= 1, f"{source}: trials must be a positive integer")
    budget_multiplier = doc.get("budget_multiplier", 10_000)
    _require(
        isinstance(budget_multiplier, int) and budget_multiplier >= 1,
        f"{source}: budget_multiplier must be a positive integer",
    )
    base_seed = doc["base_seed"]
    _require(isinstance(base_seed, int) and base_seed >= 0, f"{source}: base_seed must be a non-negative integer")
    output_dir = doc["output_dir"]
    _require(isinstance(output_dir, str) and output_dir, f"{source}: output_dir must be a non-empty string")
    force_xnes = doc.get("force_xnes", False)
    _require(isinstance(force_xnes, bool), f"{source}: force_xnes must be a boolean")

    if "xnes" in algorithms and not force_xnes:
        too_big = [d for d in dimensions if d > baselines.XNES_MAX_DIMENSION]
        _require(
            not too_big,
            f"{source}: xnes cells at dimension(s) {too_big} exceed "
            f"{baselines.XNES_MAX_DIMENSION} (cubic cost); set force_xnes to run them",
        )

    campaign = Campaign(
        algorithms=tuple(algorithms),
        functions=tuple(functions),
        dimensions=tuple(dimensions),
        trials=trials,
        budget_multiplier=budget_multiplier,
        base_seed=base_seed,
        output_dir=output_dir,
        force_xnes=force_xnes,
    )
    seeds = [
        derive_run_seed(base_seed, a, f, d, t)
        for (a, f, d) in campaign.cells()
        for t in range(trials)
    ]
    _require(len(seeds) == len(set(seeds)), f"{source}: derived run seeds collided; change base_seed")
    return campaign


def load_campaign(path: str | Path) -> Campaign:
    """Parse and validate a campaign config file (JSON, Campaign fields)."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: line {err.lineno} column {err.colno}: {err.msg}") from err
    _require(isinstance(doc, dict), f"{path}: config must be a JSON object")
    return campaign_from_dict(doc, source=str(path))


def _cell_stem(algo: str, fn: str, d: int) -> str:
    return f"{algo}__{fn}__d{d}"


def _cell_digest(campaign: Campaign, algo: str, fn: str, d: int) -> str:
    ident = json.dumps(
        {
            "algorithm": algo,
            "function": fn,
            "dimension": d,
            "trials": campaign.trials,
            "budget": campaign.budget(d),
            "base_seed": campaign.base_seed,
            "transform_seed": derive_transform_seed(campaign.base_seed, fn, d),
        },
        sort_keys=True,
    )
    return hashlib.sha256(ident.encode()).hexdigest()[:16]


def _thin_indices(count: int, cap: int = TRACE_POINT_CAP) -> np.ndarray:
    if count <= cap:
        return np.arange(count)
    stride = -(-count // cap)
    idx = np.arange(0, count, stride)
    if idx[-1] != count - 1:
        idx = np.append(idx, count - 1)
    return idx


def _record_to_line(rec: RunRecord, trial: int) -> str:
    """One deterministic JSON line per run; wall-clock fields are withheld
    (they live in the done marker / timing.csv)."""
    idx = _thin_indices(rec.generations)
    tr = rec.trace
    doc = {
        "algorithm": rec.algorithm,
        "problem": rec.problem,
        "dimension": rec.dimension,
        "trial": trial,
        "seed": rec.seed,
        "success": rec.success,
        "evaluations_to_target": rec.evaluations_to_target,
        "evaluations_used": rec.evaluations_used,
        "generations": rec.generations,
        "best_fitness": rec.best_fitness,
        "premature": rec.premature,
        "final_state": rec.final_state,
        "trace": {
            "evaluations": [int(x) for x in tr["evaluations"][idx]],
            "best_so_far": [float(x) for x in tr["best_so_far"][idx]],
            "population_min": [float(x) for x in tr["population_min"][idx]],
            "population_max": [float(x) for x in tr["population_max"][idx]],
            "lam": [float(x) for x in tr["lam"][idx]],
            "c": [float(x) for x in tr["c"][idx]],
        },
    }
    return json.dumps(doc, sort_keys=True)


def _abort_to_line(algo: str, fn: str, d: int, trial: int, seed: int, err: Exception) -> str:
    """Record line for a trial that raised instead of finishing: keeps the
    fields the aggregator reads, plus the abort message. Deterministic, so
    campaign reruns stay byte-identical."""
    doc = {
        "algorithm": algo,
        "problem": fn,
        "dimension": d,
        "trial": trial,
        "seed": int(seed),
        "success": False,
        "evaluations_to_target": None,
        "evaluations_used": int(getattr(err, "evaluations_used", 0)),
        "generations": int(getattr(err, "generations", 0)),
        "best_fitness": None,
        "premature": False,
        "aborted": f"{type(err).__name__}: {err}",
    }
    return json.dumps(doc, sort_keys=True)


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _run_cell(task: dict) -> str:
    """Worker entry: execute one cell's trials sequentially, write its
    records file then its done marker. Returns the cell stem."""
    campaign = Campaign(**task["campaign"])
    algo, fn, d = task["algo"], task["fn"], task["d"]
    out = Path(campaign.output_dir)
    problem = benchmarks.make_problem(
        fn, d, seed=derive_transform_seed(campaign.base_seed, fn, d)
    )
    config = OptimizerConfig(
        max_evaluations=campaign.budget(d), target_fitness=problem.target_fitness
    )
    runner = _RUNNERS[algo]
    kwargs = {"force": True} if algo == "xnes" and campaign.force_xnes else {}
    lines = []
    wall_per_eval = []
    update_per_eval = []
    for trial in range(campaign.trials):
        seed = derive_run_seed(campaign.base_seed, algo, fn, d, trial)
        try:
            rec = runner(problem, config, seed, **kwargs)
        except (EvaluationError, DegenerateDirectionError, CovarianceError) as err:
            lines.append(_abort_to_line(algo, fn, d, trial, seed, err))
            continue
        lines.append(_record_to_line(rec, trial))
        wall_per_eval.append(rec.wall_per_evaluation)
        update_per_eval.append(rec.update_seconds_per_evaluation)
    stem = _cell_stem(algo, fn, d)
    _write_atomic(out / "records" / f"{stem}.jsonl", "\n".join(lines) + "\n")
    marker = {
        "digest": task["digest"],
        "median_wall_per_evaluation": float(np.median(wall_per_eval)) if wall_per_eval else None,
        "median_update_per_evaluation": float(np.median(update_per_eval)) if update_per_eval else None,
    }
    _write_atomic(out / "done" / f"{stem}.json", json.dumps(marker, sort_keys=True) + "\n")
    return stem


def _worker_count(cell_count: int) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env is not None:
        try:
            requested = int(env)
        except ValueError as err:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}") from err
        _require(requested >= 1, f"{WORKERS_ENV} must be >= 1")
    else:
        requested = os.cpu_count() or 1
    return max(1, min(requested, cell_count))


def run_campaign(config_path: str | Path) -> Path:
    """Execute a campaign config; returns the output directory.

    Cells whose done marker matches the current digest are skipped, so
    rerunning a finished campaign performs zero new runs. Aggregate files
    are rebuilt from the record files on every invocation.
    """
    campaign = load_campaign(config_path)
    out = Path(campaign.output_dir)
    for sub in ("records", "done", "plots", "manifests"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    _write_atomic(out / "campaign.json", json.dumps(campaign.as_dict(), indent=2, sort_keys=True) + "\n")

    for d in campaign.dimensions:
        problems = [
            benchmarks.make_problem(fn, d, seed=derive_transform_seed(campaign.base_seed, fn, d))
            for fn in campaign.functions
        ]
        _write_atomic(
            out / "manifests" / f"suite_d{d}.json",
            benchmarks.suite_manifest(problems, seed=campaign.base_seed) + "\n",
        )

    pending = []
    for algo, fn, d in campaign.cells():
        digest = _cell_digest(campaign, algo, fn, d)
        stem = _cell_stem(algo, fn, d)
        marker_path = out / "done" / f"{stem}.json"
        records_path = out / "records" / f"{stem}.jsonl"
        if marker_path.exists() and records_path.exists():
            try:
                marker = json.loads(marker_path.read_text())
            except json.JSONDecodeError:
                marker = {}
            if marker.get("digest") == digest:
                continue
        pending.append(
            {"campaign": campaign.as_dict(), "algo": algo, "fn": fn, "d": d, "digest": digest}
        )

    if pending:
        workers = _worker_count(len(pending))
        if workers == 1:
            for task in pending:
                _run_cell(task)
        else:
            with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
                for _ in pool.map(_run_cell, pending):
                    pass

    _write_aggregates(campaign, out)
    return out


def _load_cell_rows(out: Path, stem: str) -> list[dict]:
    path = out / "records" / f"{stem}.jsonl"
    if not path.exists():
        return []
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def summarize_rows(rows: list[dict], algo: str, fn: str, d: int, wall: Optional[float]) -> CellSummary:
    """Aggregate one cell's record rows into a CellSummary."""
    successes = sum(1 for r in rows if r["success"])
    evals = sorted(r["evaluations_to_target"] for r in rows if r["success"])
    median_evals = float(np.median(evals)) if evals else None
    premature = sum(1 for r in rows if r["premature"])
    fraction = premature / len(rows) if rows else 0.0
    return CellSummary(
        algorithm=algo,
        function=fn,
        dimension=d,
        trials=len(rows),
        successes=successes,
        median_evaluations_to_target=median_evals,
        premature_fraction=fraction,
        median_wall_per_evaluation=wall,
    )


def _collect_summaries(campaign: Campaign, out: Path) -> list[CellSummary]:
    summaries = []
    for algo, fn, d in campaign.cells():
        stem = _cell_stem(algo, fn, d)
        rows = _load_cell_rows(out, stem)
        marker_path = out / "done" / f"{stem}.json"
        wall = None
        if marker_path.exists():
            try:
                wall = json.loads(marker_path.read_text()).get("median_update_per_evaluation")
            except json.JSONDecodeError:
                wall = None
        summaries.append(summarize_rows(rows, algo, fn, d, wall))
    return summaries


def _fmt_opt(value: Optional[float]) -> str:
    return "" if value is None else format(value, ".17g")


def _write_aggregates(campaign: Campaign, out: Path) -> list[CellSummary]:
    summaries = _collect_summaries(campaign, out)

    lines = ["algorithm,function,dimension,trials,successes,median_evaluations_to_target,premature_fraction,suppressed"]
    for s in summaries:
        lines.append(
            f"{s.algorithm},{s.function},{s.dimension},{s.trials},{s.successes},"
            f"{_fmt_opt(s.median_evaluations_to_target)},{format(s.premature_fraction, '.17g')},"
            f"{str(s.suppressed).lower()}"
        )
    _write_atomic(out / "summary.csv", "\n".join(lines) + "\n")

    lines = ["algorithm,function,dimension,median_update_seconds_per_evaluation"]
    for s in summaries:
        lines.append(f"{s.algorithm},{s.function},{s.dimension},{_fmt_opt(s.median_wall_per_evaluation)}")
    _write_atomic(out / "timing.csv", "\n".join(lines) + "\n")

    for fn in campaign.functions:
        lines = ["x,y,series"]
        for s in summaries:
            if s.function != fn or s.suppressed or s.median_evaluations_to_target is None:
                continue
            lines.append(f"{s.dimension},{_fmt_opt(s.median_evaluations_to_target)},{s.algorithm}")
        _write_atomic(out / "plots" / f"evals_vs_dim_{fn}.csv", "\n".join(lines) + "\n")

    lines = ["x,y,series"]
    for s in summaries:
        if s.median_wall_per_evaluation is not None:
            lines.append(f"{s.dimension},{_fmt_opt(s.median_wall_per_evaluation)},{s.algorithm}")
    _write_atomic(out / "plots" / "timing_vs_dim.csv", "\n".join(lines) + "\n")
    return summaries


def summarize_directory(directory: str | Path) -> list[CellSummary]:
    """Rebuild summary.csv, timing.csv, and plot data from the records in an
    existing campaign directory; returns the summaries."""
    out = Path(directory)
    campaign_path = out / "campaign.json"
    _require(campaign_path.exists(), f"{out}: no campaign.json; not a campaign directory")
    campaign = campaign_from_dict(json.loads(campaign_path.read_text()), source=str(campaign_path))
    return _write_aggregates(campaign, out)


class _DriftProblem:
    """Linear objective for timing: improves every generation (never trips
    the premature stop), costs almost nothing, and its evaluation time is
    subtracted out regardless."""

    name = "timing-drift"

    def __init__(self, d: int):
        self.dimension = d

    def evaluate_batch(self, points: np.ndarray) -> np.ndarray:
        return points[:, 0].copy()


@dataclass(frozen=True)
class TimingTable:
    """timing_probe output: per-dimension median update cost and the fitted
    log-log slope."""

    algorithm: str
    dimensions: tuple[int, ...]
    median_seconds_per_evaluation: tuple[float, ...]
    slope: float

    def render(self) -> str:
        lines = [f"algorithm: {self.algorithm}", "dimension,median_update_seconds_per_evaluation"]
        for d, s in zip(self.dimensions, self.median_seconds_per_evaluation):
            lines.append(f"{d},{format(s, '.6g')}")
        lines.append(f"fitted log-log slope: {format(self.slope, '.4g')}")
        return "\n".join(lines)


def _probe_once(algorithm: str, d: int, generations: int, seed: int) -> RunRecord:
    n = optimizer.default_population_size(d)
    config = OptimizerConfig(max_evaluations=generations * n, target_fitness=math.inf)
    runner = _RUNNERS[algorithm]
    return runner(_DriftProblem(d), config, seed)


def timing_probe(algorithm: str, dimensions: list[int], samples: int = 5) -> TimingTable:
    """Median per-evaluation update cost per dimension plus fitted slope.

    Each dimension gets a discarded warmup run (JIT compilation, caches),
    then a calibration run that sizes the measured runs to a ~2 ms span
    (enough to swamp timer noise), then `samples` measured runs. Runs are
    capped at 300 generations: many short runs instead of one long one,
    because the drift objective never stops rewarding a larger search
    distribution and a capped run keeps that growth far from overflow for
    every algorithm.
    """
    _require(algorithm in _RUNNERS, f"unknown algorithm {algorithm!r}")
    _require(len(dimensions) >= 2, "timing needs at least two dimensions to fit a slope")
    _require(samples >= 1, "samples must be >= 1")
    medians = []
    for d in dimensions:
        _probe_once(algorithm, d, generations=10, seed=1)
        cal = _probe_once(algorithm, d, generations=10, seed=2)
        per_gen = (cal.wall_seconds - cal.objective_seconds) / max(cal.generations, 1)
        generations = int(min(max(math.ceil(0.002 / max(per_gen, 1e-9)), 25), 300))
        values = [
            _probe_once(algorithm, d, generations, seed=100 + s).update_seconds_per_evaluation
            for s in range(samples)
        ]
        medians.append(float(np.median(values)))
    slope = float(np.polyfit(np.log(np.asarray(dimensions, float)), np.log(medians), 1)[0])
    return TimingTable(
        algorithm=algorithm,
        dimensions=tuple(dimensions),
        median_seconds_per_evaluation=tuple(medians),
        slope=slope,
    )
