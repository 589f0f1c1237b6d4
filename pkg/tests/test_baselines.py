"""SNES and plain xNES: update correctness against the dense reference,
shared run-loop semantics, the d>64 guard, and the cubic-cost signature."""

import json
import math
import time

import numpy as np
import pytest

import reference
from r1nes.baselines import (
    XNES_MAX_DIMENSION,
    _SNESStepper,
    _XNESStepper,
    default_snes_eta_sigma,
    run_snes,
    run_xnes,
)
from r1nes.benchmarks import make_problem
from r1nes.errors import ConfigError, CovarianceError
from r1nes.optimizer import OptimizerConfig


def _snes_config(d, **kw):
    kw.setdefault("eta_sigma", default_snes_eta_sigma(d))
    return OptimizerConfig(**kw).resolved(d)


class TestSnesUpdate:
    def test_default_rate(self):
        for d in (4, 16, 100):
            assert default_snes_eta_sigma(d) == pytest.approx(
                (3.0 + math.log(d)) / (5.0 * math.sqrt(d)), rel=1e-15
            )

    def test_matches_reference(self):
        rng = np.random.default_rng(41)
        for _ in range(10):
            d = int(rng.integers(2, 10))
            cfg = _snes_config(d)
            stepper = _SNESStepper(d, cfg, np.random.default_rng(int(rng.integers(1e9))))
            mu0 = stepper.mu.copy()
            logs0 = stepper.log_sigmas.copy()
            x_abs = stepper.sample()
            draws = stepper.flat.reshape(stepper.n, d).copy()
            fit = -np.sum(x_abs * x_abs, axis=1)
            ref_mu, ref_logs = reference.snes_generation(
                mu0, logs0, draws, fit, cfg.eta_mu, cfg.eta_sigma
            )
            stepper.update(fit, 0)
            assert np.allclose(stepper.mu, ref_mu, rtol=1e-12, atol=1e-14)
            assert np.allclose(stepper.log_sigmas, ref_logs, rtol=1e-12, atol=1e-14)

    def test_all_equal_fitness_is_a_no_op(self):
        cfg = _snes_config(5)
        stepper = _SNESStepper(5, cfg, np.random.default_rng(2))
        stepper.sample()
        mu0 = stepper.mu.copy()
        logs0 = stepper.log_sigmas.copy()
        stepper.update(np.full(stepper.n, 3.25), 0)
        assert np.array_equal(stepper.mu, mu0)
        assert np.array_equal(stepper.log_sigmas, logs0)

    def test_trace_scale_column_is_mean_log_sigma(self):
        pr = make_problem("sphere", 4)
        rec = run_snes(pr, OptimizerConfig(max_evaluations=400, target_fitness=float("inf")), seed=3)
        final = json.loads(rec.final_state)
        assert rec.trace["lam"][-1] == pytest.approx(np.mean(final["log_sigmas"]), abs=1e-15)


class TestSnesBehaviour:
    def test_separable_ellipsoid_d16_all_seeds(self):
        pr = make_problem("ellipsoid", 16)
        ok = 0
        for seed in range(20):
            cfg = OptimizerConfig(max_evaluations=160_000, target_fitness=-1e-8)
            ok += int(run_snes(pr, cfg, seed=seed).success)
        assert ok == 20

    def test_rotated_rosenbrock_d16_mostly_fails(self):
        pr = make_problem("rosenbrock", 16, seed=316)
        failures = 0
        for seed in range(20):
            cfg = OptimizerConfig(max_evaluations=160_000, target_fitness=-1e-8)
            rec = run_snes(pr, cfg, seed=seed)
            failures += int(not rec.success)
        assert failures >= 18


class TestXnesUpdate:
    def test_all_equal_fitness_is_a_no_op(self):
        cfg = OptimizerConfig().resolved(4)
        stepper = _XNESStepper(4, cfg, np.random.default_rng(6))
        stepper.sample()
        mu0 = stepper.mu.copy()
        a0 = np.asarray(stepper.a)
        det0 = stepper.log_det_a
        stepper.update(np.zeros(stepper.n), 0)
        assert np.array_equal(stepper.mu, mu0)
        assert np.array_equal(np.asarray(stepper.a), a0)
        assert stepper.log_det_a == det0

    def test_nonfinite_factor_is_certified_out(self):
        cfg = OptimizerConfig().resolved(3)
        stepper = _XNESStepper(3, cfg, np.random.default_rng(0))
        stepper.a[0][0] = float("inf")
        with pytest.raises(CovarianceError, match="non-finite"):
            stepper._certify_covariance()

    def test_singular_factor_is_certified_out(self):
        cfg = OptimizerConfig().resolved(3)
        stepper = _XNESStepper(3, cfg, np.random.default_rng(0))
        stepper.a = [[0.0] * 3 for _ in range(3)]
        with pytest.raises(CovarianceError, match="positive definiteness"):
            stepper._certify_covariance()

    def test_trace_scale_column_is_log_det_over_d(self):
        pr = make_problem("sphere", 3)
        rec = run_xnes(pr, OptimizerConfig(max_evaluations=300, target_fitness=float("inf")), seed=1)
        final = json.loads(rec.final_state)
        assert rec.trace["lam"][-1] == pytest.approx(final["log_det_a"] / 3.0, abs=1e-15)


class TestXnesBehaviour:
    def test_rosenbrock_d8_all_seeds(self):
        pr = make_problem("rosenbrock", 8)
        ok = 0
        for seed in range(20):
            cfg = OptimizerConfig(max_evaluations=80_000, target_fitness=-1e-8)
            ok += int(run_xnes(pr, cfg, seed=seed).success)
        assert ok == 20

    def test_dimension_guard(self):
        pr = make_problem("sphere", XNES_MAX_DIMENSION + 1)
        cfg = OptimizerConfig(max_evaluations=16)
        with pytest.raises(ConfigError, match="force"):
            run_xnes(pr, cfg, seed=0)
        rec = run_xnes(pr, cfg, seed=0, force=True)
        assert rec.generations == 1

    def test_per_evaluation_cost_superquadratic(self):
        times = []
        dims = (16, 32, 64)
        for d in dims:
            cfg = OptimizerConfig().resolved(d)
            stepper = _XNESStepper(d, cfg, np.random.default_rng(9))
            best = float("inf")
            for _ in range(2):
                x = stepper.sample()
                fit = -np.sum(x * x, axis=1)
                t0 = time.perf_counter()
                stepper.update(fit, 0)
                best = min(best, time.perf_counter() - t0)
            times.append(best / cfg.population_size)
        slope = np.polyfit(np.log(dims), np.log(times), 1)[0]
        assert slope > 2.0
