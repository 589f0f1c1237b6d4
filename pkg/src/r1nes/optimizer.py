"""Rank-one NES optimizer: generation loop, shaping, update switch, records.

One generation: draw n offsets x_k = e^lam (y_k + z_k u), evaluate the
objective at mu + x_k, replace raw fitness by rank utilities, aggregate the
per-sample natural gradients under those weights, then

    mu  += eta_mu    * G_mu
    lam += eta_sigma * G_lambda
    direction: if the aggregated G_c < 0, step the length/orientation split
    (c += eta_u G_c, v = normalize(v + eta_u G_v), u = e^c v), which shrinks
    the direction without ever flipping it; otherwise step u additively.

The module exposes the functional API (shape_fitness, step, run) plus the
run-record/trace types shared by the baseline algorithms. The hot loop lives
in _kernels; everything here either feeds it or records what it did.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, TextIO

import numpy as np

from . import _kernels
from .distribution import RankOneGaussian, deserialize, serialize
from .errors import (
    ConfigError,
    CovarianceError,
    DegenerateDirectionError,
    DimensionError,
    EvaluationError,
)

__all__ = [
    "OptimizerConfig",
    "GenerationTrace",
    "RunRecord",
    "default_population_size",
    "default_eta_sigma",
    "rank_utilities",
    "shape_fitness",
    "step",
    "run",
    "restore_stepper",
]

START_REGION_HALF_WIDTH = 4.0
IMPROVEMENT_EPS = 1e-12
PREMATURE_WINDOW_PER_DIM = 100


def default_population_size(d: int) -> int:
    """4 + floor(3 ln d): the population convention shared by all three
    algorithms here so comparisons differ only in the distribution update."""
    return 4 + int(3.0 * math.log(d))


def default_eta_sigma(d: int) -> float:
    """(9 + 3 ln d) / (5 d sqrt(d)); used for both eta_sigma and eta_u."""
    return (9.0 + 3.0 * math.log(d)) / (5.0 * d * math.sqrt(d))


@dataclass(frozen=True)
class OptimizerConfig:
    """Run configuration. None fields resolve to dimension-dependent defaults.

    fitness_shaping: "rank_utilities" (default; update depends only on the
    fitness ranking, hence invariant under monotone objective transforms) or
    "raw" (utilities are f_i / n; kept for exactness experiments).
    init_mu None draws the start mean uniformly from [-4, 4]^d.
    """

    population_size: Optional[int] = None
    eta_mu: float = 1.0
    eta_sigma: Optional[float] = None
    eta_u: Optional[float] = None
    fitness_shaping: str = "rank_utilities"
    init_mu: Optional[np.ndarray] = None
    init_lambda: float = 0.0
    init_u_scale: float = 1.0
    max_evaluations: int = 100_000
    target_fitness: float = -1e-8

    def resolved(self, d: int) -> "OptimizerConfig":
        """Concrete copy with every default filled in for dimension d."""
        if d < 2:
            raise DimensionError("dimension must be >= 2")
        n = self.population_size if self.population_size is not None else default_population_size(d)
        eta_sigma = self.eta_sigma if self.eta_sigma is not None else default_eta_sigma(d)
        eta_u = self.eta_u if self.eta_u is not None else default_eta_sigma(d)
        out = replace(
            self,
            population_size=int(n),
            eta_sigma=float(eta_sigma),
            eta_u=float(eta_u),
        )
        out.validate(d)
        return out

    def validate(self, d: int) -> None:
        if self.population_size is None or self.population_size < 2:
            raise ConfigError("population_size must be >= 2")
        for name in ("eta_mu", "eta_sigma", "eta_u"):
            rate = getattr(self, name)
            if rate is None or not (0.0 < rate <= 1.0):
                raise ConfigError(f"{name} must be in (0, 1], got {rate}")
        if self.fitness_shaping not in ("rank_utilities", "raw"):
            raise ConfigError(f"unknown fitness_shaping {self.fitness_shaping!r}")
        if self.init_u_scale <= 0.0:
            raise ConfigError("init_u_scale must be positive")
        if self.max_evaluations < 0:
            raise ConfigError("max_evaluations must be >= 0")
        if self.init_mu is not None and np.asarray(self.init_mu).shape != (d,):
            raise ConfigError(f"init_mu must have length {d}")

    def as_dict(self) -> dict:
        out = {
            "population_size": self.population_size,
            "eta_mu": self.eta_mu,
            "eta_sigma": self.eta_sigma,
            "eta_u": self.eta_u,
            "fitness_shaping": self.fitness_shaping,
            "init_lambda": self.init_lambda,
            "init_u_scale": self.init_u_scale,
            "max_evaluations": self.max_evaluations,
            "target_fitness": self.target_fitness,
        }
        if self.init_mu is not None:
            out["init_mu"] = [float(x) for x in np.asarray(self.init_mu)]
        return out


@dataclass(frozen=True)
class GenerationTrace:
    """One generation's log row (best_so_far is cumulative, maximization)."""

    generation: int
    evaluations: int
    best_so_far: float
    population_min: float
    population_max: float
    lam: float
    c: float


@dataclass
class RunRecord:
    """Everything one optimization run produced.

    trace holds full per-generation columns (evaluations, best_so_far,
    population_min, population_max, lam, c) as arrays; final_state is the
    one-line serialized distribution record whose seed_epoch equals
    ``generations`` (see restore_stepper for the replay contract).
    """

    algorithm: str
    problem: str
    dimension: int
    seed: int
    config: dict
    success: bool
    evaluations_to_target: Optional[int]
    evaluations_used: int
    generations: int
    best_fitness: float
    premature: bool
    final_state: str
    trace: dict[str, np.ndarray]
    wall_seconds: float
    objective_seconds: float

    @property
    def wall_per_evaluation(self) -> float:
        return self.wall_seconds / max(self.evaluations_used, 1)

    @property
    def update_seconds_per_evaluation(self) -> float:
        """Optimizer cost per evaluation with objective time subtracted."""
        return (self.wall_seconds - self.objective_seconds) / max(self.evaluations_used, 1)

    def iter_trace(self):
        tr = self.trace
        for g in range(self.generations):
            yield GenerationTrace(
                generation=g,
                evaluations=int(tr["evaluations"][g]),
                best_so_far=float(tr["best_so_far"][g]),
                population_min=float(tr["population_min"][g]),
                population_max=float(tr["population_max"][g]),
                lam=float(tr["lam"][g]),
                c=float(tr["c"][g]),
            )


def rank_utilities(n: int) -> np.ndarray:
    """Zero-sum rank utilities: max(0, log(n/2+1) - log k), normalized to sum
    1, minus 1/n. Index 0 is the best rank. For n=2 this is (0.5, -0.5)."""
    if n < 2:
        raise ConfigError("population_size must be >= 2")
    k = np.arange(1, n + 1, dtype=np.float64)
    base = np.maximum(0.0, math.log(n / 2.0 + 1.0) - np.log(k))
    util = base / base.sum() - 1.0 / n
    # Force the sequential (index-order) sum to exactly 0.0 so an all-tied
    # population gets weights of exactly zero and the update is a true no-op.
    acc = 0.0
    for i in range(n - 1):
        acc += util[i]
    util[n - 1] = -acc
    return util


def shape_fitness(raw, mode: str = "rank_utilities") -> np.ndarray:
    """Reference shaping: stable descending ranks, tied spans share the mean
    utility (so all-equal fitness yields all-zero utilities and the update is
    a function of the ranked multiset only). raw mode returns values / n."""
    fit = np.asarray(raw, dtype=np.float64)
    if fit.ndim != 1 or fit.shape[0] < 2:
        raise DimensionError("fitness vector must be 1-d with length >= 2")
    bad = np.flatnonzero(~np.isfinite(fit))
    if bad.size:
        raise EvaluationError(f"non-finite fitness for sample {int(bad[0])}")
    n = fit.shape[0]
    if mode == "raw":
        return fit / n
    if mode != "rank_utilities":
        raise ConfigError(f"unknown fitness_shaping {mode!r}")
    util = rank_utilities(n)
    order = np.argsort(-fit, kind="stable")
    w = np.empty(n)
    k = 0
    while k < n:
        j = k
        while j + 1 < n and fit[order[j + 1]] == fit[order[k]]:
            j += 1
        total = 0.0
        for m in range(k, j + 1):
            total += util[m]
        w[order[k : j + 1]] = total / (j - k + 1)
        k = j + 1
    return w


class _CountingEvaluator:
    """The run-owned evaluation tally; optimizers only ever see this wrapper,
    so the count cannot be bypassed."""

    __slots__ = ("_fn", "count")

    def __init__(self, evaluate_batch: Callable[[np.ndarray], np.ndarray]):
        self._fn = evaluate_batch
        self.count = 0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        self.count += x.shape[0]
        return self._fn(x)


class _R1NESStepper:
    """Owns the per-run buffers and drives the compiled kernels.

    Stream contract: construction consumes d uniforms (only when init_mu is
    drawn) then d normals (u0); every generation consumes exactly n*d + n
    normals. skip_generations() replays that pattern, which is what makes the
    serialized seed_epoch sufficient to restore a mid-run state.
    """

    algorithm = "r1nes"

    def __init__(
        self,
        d: int,
        config: OptimizerConfig,
        rng: np.random.Generator,
        state: Optional[RankOneGaussian] = None,
    ):
        n = config.population_size
        self.n = n
        self.d = d
        self.rng = rng
        self.config = config
        if state is None:
            if config.init_mu is not None:
                mu = np.array(config.init_mu, dtype=np.float64)
            else:
                mu = rng.uniform(-START_REGION_HALF_WIDTH, START_REGION_HALF_WIDTH, d)
            u = rng.standard_normal(d)
            norm = float(np.linalg.norm(u))
            if norm == 0.0:
                raise DegenerateDirectionError("drew a zero direction vector")
            u *= config.init_u_scale / norm
            self.mu = np.ascontiguousarray(mu)
            self.u = np.ascontiguousarray(u)
            self.lam = float(config.init_lambda)
        else:
            if state.d != d:
                raise DimensionError(f"state dimension {state.d} != problem dimension {d}")
            if state.r2 == 0.0:
                raise DegenerateDirectionError("step requires r > 0 in the state")
            self.mu = state.mu.copy()
            self.u = state.u.copy()
            self.lam = state.lam
        self.flat = np.empty(n * d + n)
        self.x_abs = np.empty((n, d))
        self.util = rank_utilities(n)
        self.order = np.empty(n, dtype=np.int64)
        self.w = np.empty(n)
        self.g_u = np.empty(d)
        self.out = np.empty(8)
        self.mode = (
            _kernels.SHAPE_RANK if config.fitness_shaping == "rank_utilities" else _kernels.SHAPE_RAW
        )
        self.trace = np.empty((1, 4))

    def attach_trace(self, max_generations: int) -> None:
        self.trace = np.empty((max(max_generations, 1), 4))

    def sample(self) -> np.ndarray:
        self.rng.standard_normal(out=self.flat)
        _kernels.r1nes_transform(self.flat, self.mu, self.u, self.lam, self.x_abs)
        return self.x_abs

    def update(self, fit: np.ndarray, g: int) -> tuple[float, float]:
        _kernels.r1nes_update(
            self.flat, fit, self.mu, self.u, self.util, self.order, self.w, self.g_u,
            self.lam, self.config.eta_mu, self.config.eta_sigma, self.config.eta_u,
            self.mode, g, self.trace, self.out,
        )
        out = self.out
        if out[0] == _kernels.STATUS_NONFINITE:
            raise EvaluationError(f"non-finite fitness for sample {int(out[1])}")
        if out[0] == _kernels.STATUS_UNDERFLOW:
            raise DegenerateDirectionError("direction norm underflowed below 1e-150")
        self.lam = float(out[4])
        return float(out[2]), float(out[3])

    def skip_generations(self, count: int) -> None:
        for _ in range(count):
            self.rng.standard_normal(out=self.flat)

    def state(self) -> RankOneGaussian:
        return RankOneGaussian(mu=self.mu, lam=self.lam, u=self.u)

    def serialize_state(self, seed_epoch: int) -> str:
        return serialize(self.state(), seed_epoch)


def _execute_run(
    stepper,
    problem_name: str,
    evaluate_batch: Callable[[np.ndarray], np.ndarray],
    config: OptimizerConfig,
    seed: int,
    trace_stream: Optional[TextIO] = None,
) -> RunRecord:
    """Shared generation loop: budget/target termination, premature-convergence
    detection (no best-fitness improvement >= 1e-12 over 100*d consecutive
    evaluations with the target unmet), objective timing, trace collection."""
    n = stepper.n
    d = stepper.d
    budget = config.max_evaluations
    target = config.target_fitness
    stepper.attach_trace(budget // n + 1 if budget else 1)
    evaluator = _CountingEvaluator(evaluate_batch)
    window = PREMATURE_WINDOW_PER_DIM * d
    best = -math.inf
    last_improve = 0
    success = False
    evals_to_target: Optional[int] = None
    premature = False
    g = 0
    obj_seconds = 0.0
    t_start = time.perf_counter()
    try:
        while evaluator.count + n <= budget:
            x = stepper.sample()
            t0 = time.perf_counter()
            fit = evaluator(x)
            t1 = time.perf_counter()
            obj_seconds += t1 - t0
            pop_best, pop_worst = stepper.update(fit, g)
            g += 1
            evals = evaluator.count
            if pop_best > best:
                if pop_best - best >= IMPROVEMENT_EPS:
                    last_improve = evals
                best = pop_best
            if trace_stream is not None:
                trace_stream.write(
                    "%d %d %.17g %.17g %.17g %.17g %.17g\n"
                    % (g - 1, evals, best, pop_worst, pop_best,
                       stepper.trace[g - 1, 2], stepper.trace[g - 1, 3])
                )
            if best >= target:
                success = True
                evals_to_target = evals
                break
            if evals - last_improve >= window:
                premature = True
                break
    except (EvaluationError, DegenerateDirectionError, CovarianceError) as err:
        # let callers record how far the run got before aborting
        err.evaluations_used = evaluator.count
        err.generations = g
        raise
    wall = time.perf_counter() - t_start

    kernel_trace = stepper.trace[:g]
    best_col = np.maximum.accumulate(kernel_trace[:, 0]) if g else np.empty(0)
    trace = {
        "evaluations": (np.arange(g, dtype=np.int64) + 1) * n,
        "best_so_far": best_col,
        "population_min": kernel_trace[:, 1].copy(),
        "population_max": kernel_trace[:, 0].copy(),
        "lam": kernel_trace[:, 2].copy(),
        "c": kernel_trace[:, 3].copy(),
    }
    return RunRecord(
        algorithm=stepper.algorithm,
        problem=problem_name,
        dimension=d,
        seed=int(seed),
        config=config.as_dict(),
        success=success,
        evaluations_to_target=evals_to_target,
        evaluations_used=evaluator.count,
        generations=g,
        best_fitness=best if g else -math.inf,
        premature=premature,
        final_state=stepper.serialize_state(g),
        trace=trace,
        wall_seconds=wall,
        objective_seconds=obj_seconds,
    )


def step(
    state: RankOneGaussian,
    objective: Callable[[np.ndarray], np.ndarray],
    config: OptimizerConfig,
    rng: np.random.Generator,
) -> tuple[RankOneGaussian, GenerationTrace]:
    """One generation from an explicit immutable state; returns the new state.

    objective maps an (n, d) matrix of absolute points to n fitness values
    (maximization). Requires r > 0 in the state. The run loop amortizes
    buffers across generations instead of going through this wrapper.
    """
    config = config.resolved(state.d)
    stepper = _R1NESStepper(state.d, config, rng, state=state)
    x = stepper.sample()
    fit = np.ascontiguousarray(objective(x), dtype=np.float64)
    if fit.shape != (stepper.n,):
        raise DimensionError(f"objective returned shape {fit.shape}, expected ({stepper.n},)")
    pop_best, pop_worst = stepper.update(fit, 0)
    new_state = stepper.state()
    trace = GenerationTrace(
        generation=0,
        evaluations=stepper.n,
        best_so_far=pop_best,
        population_min=pop_worst,
        population_max=pop_best,
        lam=stepper.lam,
        c=float(stepper.trace[0, 3]),
    )
    return new_state, trace


def run(
    problem,
    config: OptimizerConfig,
    seed: int,
    trace_stream: Optional[TextIO] = None,
) -> RunRecord:
    """Full optimization run on a problem (needs .name, .dimension, and
    .evaluate_batch); fully reproducible from (seed, config, problem)."""
    d = problem.dimension
    config = config.resolved(d)
    rng = np.random.Generator(np.random.PCG64(seed))
    stepper = _R1NESStepper(d, config, rng)
    return _execute_run(stepper, problem.name, problem.evaluate_batch, config, seed, trace_stream)


def restore_stepper(record_text: str, config: OptimizerConfig, seed: int, d: int) -> _R1NESStepper:
    """Rebuild a mid-run stepper from a serialized state record.

    Reseeds the run's stream, replays the construction draws plus seed_epoch
    generations of the fixed draw pattern, then overwrites the distribution
    state with the record's. Continuing from here reproduces an uninterrupted
    run exactly (the pattern is a fixed count of sequential draws, so stream
    positions match bit for bit).
    """
    dist, epoch = deserialize(record_text)
    config = config.resolved(d)
    rng = np.random.Generator(np.random.PCG64(seed))
    stepper = _R1NESStepper(d, config, rng)
    stepper.skip_generations(epoch)
    stepper.mu = dist.mu.copy()
    stepper.u = dist.u.copy()
    stepper.lam = dist.lam
    return stepper
