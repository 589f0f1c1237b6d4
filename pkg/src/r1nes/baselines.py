"""Baseline evolution strategies sharing the run loop: SNES and plain xNES.

Both reuse the termination, premature-convergence, trace, and record
machinery from optimizer._execute_run, so comparisons against the rank-one
algorithm differ only in the distribution update.

SNES keeps an axis-aligned Gaussian (per-coordinate sigma). Its update is
O(n*d) per generation and runs through the same compiled-kernel design as
the rank-one path.

xNES here is the plain full-covariance variant: a dense factor A with
C = A A^T, updated multiplicatively by a matrix exponential. The dense ops
(matmul, expm) are deliberately the textbook O(d^3) routines from _dense so
the measured per-evaluation cost reflects the algorithm's intrinsic scaling
rather than a BLAS constant; this is the comparison partner whose cost the
scaling study is about. Dimensions above 64 are refused by the harness for
that reason.
"""

from __future__ import annotations

import math
from dataclasses import replace
from typing import Optional, TextIO

import numpy as np

from . import _dense, _kernels
from .distribution import _format_float_list
from .errors import ConfigError, CovarianceError, DimensionError
from .optimizer import (
    START_REGION_HALF_WIDTH,
    OptimizerConfig,
    RunRecord,
    _execute_run,
    rank_utilities,
    shape_fitness,
)

__all__ = ["run_snes", "run_xnes", "default_snes_eta_sigma", "XNES_MAX_DIMENSION"]

XNES_MAX_DIMENSION = 64


def default_snes_eta_sigma(d: int) -> float:
    """(3 + ln d) / (5 sqrt(d)): the diagonal case tolerates a much larger
    scale rate than the full/rank-one updates."""
    return (3.0 + math.log(d)) / (5.0 * math.sqrt(d))


class _SNESStepper:
    """Separable NES state: mu and per-coordinate log sigmas.

    Stream contract: construction consumes d uniforms only when mu is drawn;
    each generation consumes exactly n*d normals.
    """

    algorithm = "snes"

    def __init__(self, d: int, config: OptimizerConfig, rng: np.random.Generator):
        n = config.population_size
        self.n = n
        self.d = d
        self.rng = rng
        self.config = config
        if config.init_mu is not None:
            self.mu = np.array(config.init_mu, dtype=np.float64)
        else:
            self.mu = rng.uniform(-START_REGION_HALF_WIDTH, START_REGION_HALF_WIDTH, d)
        self.log_sigmas = np.full(d, float(config.init_lambda))
        self.flat = np.empty(n * d)
        self.x_abs = np.empty((n, d))
        self.util = rank_utilities(n)
        self.order = np.empty(n, dtype=np.int64)
        self.w = np.empty(n)
        self.out = np.empty(8)
        self.mode = (
            _kernels.SHAPE_RANK if config.fitness_shaping == "rank_utilities" else _kernels.SHAPE_RAW
        )
        self.trace = np.empty((1, 4))

    def attach_trace(self, max_generations: int) -> None:
        self.trace = np.empty((max(max_generations, 1), 4))

    def sample(self) -> np.ndarray:
        self.rng.standard_normal(out=self.flat)
        _kernels.snes_transform(self.flat, self.mu, self.log_sigmas, self.x_abs)
        return self.x_abs

    def update(self, fit: np.ndarray, g: int) -> tuple[float, float]:
        _kernels.snes_update(
            self.flat, fit, self.mu, self.log_sigmas, self.util, self.order, self.w,
            self.config.eta_mu, self.config.eta_sigma, self.mode, g, self.trace, self.out,
        )
        out = self.out
        if out[0] == _kernels.STATUS_NONFINITE:
            from .errors import EvaluationError

            raise EvaluationError(f"non-finite fitness for sample {int(out[1])}")
        return float(out[2]), float(out[3])

    def skip_generations(self, count: int) -> None:
        for _ in range(count):
            self.rng.standard_normal(out=self.flat)

    def serialize_state(self, seed_epoch: int) -> str:
        return (
            '{"mu": [%s], "log_sigmas": [%s], "seed_epoch": %d}'
            % (_format_float_list(self.mu), _format_float_list(self.log_sigmas), seed_epoch)
        )


class _XNESStepper:
    """Plain full-covariance xNES: x = mu + A s, A <- A expm((eta/2) G_M).

    The factor update keeps A nonsingular by construction (expm of anything
    is invertible), so positive definiteness of C = A A^T can only be lost
    through numeric blow-up; a per-generation finiteness check converts that
    into CovarianceError instead of silently corrupt runs.

    log|A| is tracked incrementally: det expm(X) = e^{tr X}, so each update
    adds (eta/2) tr(G_M) exactly. That gives the trace's scale column
    (log|A|/d, the mean log axis scale) in O(d^2).

    config.eta_sigma is the matrix rate (the default (9+3 ln d)/(5 d sqrt d)
    is the standard full-covariance choice); eta_u is unused here.
    """

    algorithm = "xnes"

    def __init__(self, d: int, config: OptimizerConfig, rng: np.random.Generator):
        n = config.population_size
        self.n = n
        self.d = d
        self.rng = rng
        self.config = config
        if config.init_mu is not None:
            self.mu = np.array(config.init_mu, dtype=np.float64)
        else:
            self.mu = rng.uniform(-START_REGION_HALF_WIDTH, START_REGION_HALF_WIDTH, d)
        scale = math.exp(config.init_lambda)
        self.a = [[scale if i == j else 0.0 for j in range(d)] for i in range(d)]
        self.log_det_a = d * config.init_lambda
        self.flat = np.empty(n * d)
        self.x_abs = np.empty((n, d))
        self._s_rows: list[list[float]] = []
        self.trace = np.empty((1, 4))

    def attach_trace(self, max_generations: int) -> None:
        self.trace = np.empty((max(max_generations, 1), 4))

    def sample(self) -> np.ndarray:
        self.rng.standard_normal(out=self.flat)
        d = self.d
        self._s_rows = [self.flat[k * d : (k + 1) * d].tolist() for k in range(self.n)]
        for k, s in enumerate(self._s_rows):
            self.x_abs[k] = self.mu + np.asarray(_dense.matvec(self.a, s))
        return self.x_abs

    def update(self, fit: np.ndarray, g: int) -> tuple[float, float]:
        n, d = self.n, self.d
        w = shape_fitness(fit, self.config.fitness_shaping)
        w_list = w.tolist()
        g_delta = [0.0] * d
        g_m = _dense.zeros(d, d)
        w_sum = 0.0
        for k in range(n):
            wk = w_list[k]
            w_sum += wk
            s = self._s_rows[k]
            for i in range(d):
                wsi = wk * s[i]
                g_delta[i] += wk * s[i]
                row = g_m[i]
                for j in range(d):
                    row[j] += wsi * s[j]
        for i in range(d):
            g_m[i][i] -= w_sum
        self.mu += self.config.eta_mu * np.asarray(_dense.matvec(self.a, g_delta))
        half_rate = 0.5 * self.config.eta_sigma
        self.a = _dense.matmul(self.a, _dense.expm(_dense.mat_scale(g_m, half_rate)))
        self.log_det_a += half_rate * sum(g_m[i][i] for i in range(d))
        self._certify_covariance()
        pop_best = float(np.max(fit))
        pop_worst = float(np.min(fit))
        self.trace[g, 0] = pop_best
        self.trace[g, 1] = pop_worst
        self.trace[g, 2] = self.log_det_a / d
        self.trace[g, 3] = 0.0
        return pop_best, pop_worst

    def _certify_covariance(self) -> None:
        """Certify C = A A^T is still numerically positive definite.

        The multiplicative update cannot make A singular in exact arithmetic,
        so failure here always means numeric corruption (overflow, NaN, or a
        collapse below representable scale); abort rather than keep running
        on a distribution that no longer exists."""
        if not all(math.isfinite(x) for row in self.a for x in row):
            raise CovarianceError("covariance factor became non-finite")
        cov = _dense.matmul(self.a, _dense.transpose(self.a))
        try:
            _dense.cholesky(cov)
        except ValueError as err:
            raise CovarianceError(f"covariance lost positive definiteness: {err}") from err

    def skip_generations(self, count: int) -> None:
        for _ in range(count):
            self.rng.standard_normal(out=self.flat)

    def serialize_state(self, seed_epoch: int) -> str:
        return (
            '{"mu": [%s], "log_det_a": %.17g, "seed_epoch": %d}'
            % (_format_float_list(self.mu), self.log_det_a, seed_epoch)
        )


def _resolve_snes(config: OptimizerConfig, d: int) -> OptimizerConfig:
    if config.eta_sigma is None:
        config = replace(config, eta_sigma=default_snes_eta_sigma(d))
    return config.resolved(d)


def run_snes(
    problem,
    config: OptimizerConfig,
    seed: int,
    trace_stream: Optional[TextIO] = None,
) -> RunRecord:
    """Full SNES run; same record/termination semantics as optimizer.run."""
    d = problem.dimension
    config = _resolve_snes(config, d)
    rng = np.random.Generator(np.random.PCG64(seed))
    stepper = _SNESStepper(d, config, rng)
    return _execute_run(stepper, problem.name, problem.evaluate_batch, config, seed, trace_stream)


def run_xnes(
    problem,
    config: OptimizerConfig,
    seed: int,
    trace_stream: Optional[TextIO] = None,
    force: bool = False,
) -> RunRecord:
    """Full plain-xNES run. Refuses d > 64 unless force=True: per-generation
    cost is cubic in d by design, so large dimensions take hours by intent,
    not by accident."""
    d = problem.dimension
    if d > XNES_MAX_DIMENSION and not force:
        raise ConfigError(
            f"xnes at dimension {d} exceeds the {XNES_MAX_DIMENSION}-dimension guard; "
            "pass force to run it anyway"
        )
    config = config.resolved(d)
    rng = np.random.Generator(np.random.PCG64(seed))
    stepper = _XNESStepper(d, config, rng)
    return _execute_run(stepper, problem.name, problem.evaluate_batch, config, seed, trace_stream)
