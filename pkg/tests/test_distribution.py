"""Distribution-state contract: sampling, density, inverse covariance,
determinant, plain gradients, serialization."""

import math

import numpy as np
import pytest

import reference
from r1nes.distribution import (
    RankOneGaussian,
    apply_inverse_covariance,
    deserialize,
    log_density,
    log_det,
    plain_grad,
    sample,
    sample_batch,
    serialize,
)
from r1nes.errors import DegenerateDirectionError, DimensionError


def make_state(d=4, lam=0.3, seed=7):
    rng = np.random.default_rng(seed)
    return RankOneGaussian(mu=np.zeros(d), lam=lam, u=rng.standard_normal(d))


class TestStateInvariants:
    def test_rejects_d1(self):
        with pytest.raises(DimensionError):
            RankOneGaussian(mu=np.zeros(1), lam=0.0, u=np.zeros(1))

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            RankOneGaussian(mu=np.zeros(3), lam=float("nan"), u=np.zeros(3))
        with pytest.raises(ValueError):
            RankOneGaussian(mu=np.zeros(3), lam=0.0, u=np.array([1.0, np.inf, 0.0]))

    def test_rejects_shape_mismatch(self):
        with pytest.raises(DimensionError):
            RankOneGaussian(mu=np.zeros(3), lam=0.0, u=np.zeros(4))

    def test_accessors(self):
        st = RankOneGaussian(mu=np.zeros(2), lam=0.0, u=np.array([3.0, 4.0]))
        assert st.r2 == 25.0
        assert st.r == 5.0
        assert st.c == pytest.approx(math.log(5.0), abs=1e-15)
        assert np.allclose(st.v, [0.6, 0.8])
        assert abs(np.linalg.norm(st.v) - 1.0) < 1e-12

    def test_zero_direction_accessors_raise(self):
        st = RankOneGaussian(mu=np.zeros(3), lam=0.0, u=np.zeros(3))
        with pytest.raises(DegenerateDirectionError):
            st.c
        with pytest.raises(DegenerateDirectionError):
            st.v

    def test_state_arrays_frozen(self):
        st = make_state()
        with pytest.raises(ValueError):
            st.u[0] = 99.0
        with pytest.raises(ValueError):
            st.mu[0] = 99.0

    def test_covariance_positive_definite_for_any_finite_u(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            d = int(rng.integers(2, 7))
            lam = float(rng.normal())
            u = rng.standard_normal(d) * float(rng.choice([0.01, 1.0, 100.0]))
            cov = reference.dense_covariance(lam, u)
            smallest = np.linalg.eigvalsh(cov)[0]
            assert smallest >= math.exp(2.0 * lam) * (1.0 - 1e-9)


class TestSampling:
    def test_zero_direction_ignores_z(self):
        st = RankOneGaussian(mu=np.zeros(2), lam=0.0, u=np.zeros(2))
        s = sample(st, np.random.default_rng(0))
        assert np.allclose(s.x, s.y)

    def test_direct_transform_values(self):
        # x = e^lam (y + z u): with lam=log 2, u=(1,0), y=0, z=1 -> (2, 0)
        st = RankOneGaussian(mu=np.zeros(2), lam=math.log(2.0), u=np.array([1.0, 0.0]))
        s = sample(st, np.random.default_rng(3))
        expect = math.exp(st.lam) * (s.y + s.z * st.u)
        assert np.array_equal(s.x, expect)

    def test_x_recomputable_from_parts(self):
        st = make_state(d=5, lam=-0.4)
        s = sample(st, np.random.default_rng(11))
        assert np.array_equal(s.x, math.exp(st.lam) * (s.y + s.z * st.u))

    def test_batch_composition(self):
        st = make_state(d=3)
        y, z, x = sample_batch(st, np.random.default_rng(5), 4)
        assert x.shape == (4, 3) and y.shape == (4, 3) and z.shape == (4,)
        assert np.array_equal(x, math.exp(st.lam) * (y + z[:, None] * st.u))

    def test_empirical_covariance_close_to_c(self):
        st = RankOneGaussian(mu=np.zeros(3), lam=0.1, u=np.array([1.0, 2.0, 0.0]))
        _, _, xs = sample_batch(st, np.random.default_rng(42), 100_000)
        emp = xs.T @ xs / xs.shape[0]
        cov = reference.dense_covariance(st.lam, st.u)
        scale = np.abs(cov).max()
        assert np.abs(emp - cov).max() <= 0.05 * scale
        assert np.abs(xs.mean(axis=0)).max() <= 0.05 * math.sqrt(scale)


class TestInverseCovarianceAndDeterminant:
    def test_identity_cases(self):
        st = RankOneGaussian(mu=np.zeros(2), lam=0.0, u=np.zeros(2))
        assert np.allclose(apply_inverse_covariance(st, np.array([3.0, 4.0])), [3.0, 4.0])
        st2 = RankOneGaussian(mu=np.zeros(2), lam=0.0, u=np.array([1.0, 0.0]))
        assert np.allclose(apply_inverse_covariance(st2, np.array([1.0, 0.0])), [0.5, 0.0])

    def test_matches_dense_solve(self):
        rng = np.random.default_rng(2)
        st = make_state(d=6, lam=0.7, seed=2)
        w = rng.standard_normal(6)
        got = apply_inverse_covariance(st, w)
        expect = np.linalg.solve(reference.dense_covariance(st.lam, st.u), w)
        assert np.linalg.norm(got - expect) / np.linalg.norm(expect) < 1e-10

    def test_length_mismatch(self):
        st = make_state(d=4)
        with pytest.raises(DimensionError):
            apply_inverse_covariance(st, np.zeros(5))

    def test_log_det_values(self):
        assert log_det(RankOneGaussian(mu=np.zeros(3), lam=0.0, u=np.zeros(3))) == 0.0
        st = RankOneGaussian(mu=np.zeros(2), lam=0.0, u=np.array([1.0, 0.0]))
        assert log_det(st) == pytest.approx(math.log(2.0), abs=1e-15)

    def test_log_det_matches_dense(self):
        st = make_state(d=5, lam=-0.6, seed=9)
        dense = np.linalg.slogdet(reference.dense_covariance(st.lam, st.u))[1]
        assert abs(log_det(st) - dense) < 1e-10


class TestLogDensity:
    def test_standard_normal_mode(self):
        st = RankOneGaussian(mu=np.zeros(2), lam=0.0, u=np.zeros(2))
        assert log_density(st, np.zeros(2)) == pytest.approx(-math.log(2 * math.pi), abs=1e-14)

    def test_matches_dense_gaussian_pdf(self):
        rng = np.random.default_rng(4)
        for _ in range(25):
            st = make_state(d=4, lam=float(rng.normal() * 0.5), seed=int(rng.integers(1e6)))
            x = rng.standard_normal(4) * 2.0
            cov = reference.dense_covariance(st.lam, st.u)
            sign, logdet = np.linalg.slogdet(cov)
            dense = -0.5 * (4 * math.log(2 * math.pi) + logdet + x @ np.linalg.solve(cov, x))
            assert abs(log_density(st, x) - dense) < 1e-9

    def test_extreme_lengths_stay_consistent(self):
        for scale in (1e-6, 1.0, 1000.0):
            u = np.array([1.0, 0.5, -0.25]) * scale
            st = RankOneGaussian(mu=np.zeros(3), lam=0.2, u=u)
            x = np.array([0.3, -0.7, 1.1])
            cov = reference.dense_covariance(st.lam, st.u)
            sign, logdet = np.linalg.slogdet(cov)
            dense = -0.5 * (3 * math.log(2 * math.pi) + logdet + x @ np.linalg.solve(cov, x))
            assert abs(log_density(st, x) - dense) < 1e-9

    def test_density_integrates_to_one_2d(self):
        # deterministic tensor-grid quadrature over a generous box
        st = RankOneGaussian(mu=np.zeros(2), lam=0.1, u=np.array([0.8, -0.4]))
        grid = np.linspace(-12.0, 12.0, 481)
        h = grid[1] - grid[0]
        total = 0.0
        for a in grid:
            row = np.stack([np.full_like(grid, a), grid], axis=1)
            total += sum(math.exp(log_density(st, x)) for x in row) * h * h
        assert abs(total - 1.0) < 0.01


class TestPlainGradient:
    def test_stationary_scale(self):
        # x with x.x = d and u = 0 zeroes the lambda gradient
        d = 4
        x = np.zeros(d)
        x[0] = math.sqrt(d)
        st = RankOneGaussian(mu=np.zeros(d), lam=0.0, u=np.zeros(d))
        g_lam, g_u = plain_grad(st, x)
        assert g_lam == pytest.approx(0.0, abs=1e-12)
        assert np.allclose(g_u, 0.0)

    def test_matches_reference_formula(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            st = make_state(d=5, lam=float(rng.normal() * 0.4), seed=int(rng.integers(1e6)))
            x = rng.standard_normal(5)
            g_lam, g_u = plain_grad(st, x)
            expect = reference.dense_plain_grad(st.lam, st.u, x)
            assert abs(g_lam - expect[0]) < 1e-12 * max(1.0, abs(expect[0]))
            assert np.linalg.norm(g_u - expect[1:]) < 1e-12 * max(1.0, np.linalg.norm(expect[1:]))

    def test_matches_finite_differences(self):
        from r1nes.validation import finite_diff

        st = make_state(d=4, lam=0.25, seed=13)
        x = np.array([0.5, -1.2, 0.8, 0.1])

        def field(theta):
            return log_density(RankOneGaussian(st.mu, float(theta[0]), theta[1:]), x)

        theta0 = np.concatenate([[st.lam], st.u])
        fd = finite_diff(field, theta0, 1e-5)
        g_lam, g_u = plain_grad(st, x)
        exact = np.concatenate([[g_lam], g_u])
        assert np.linalg.norm(fd - exact) / np.linalg.norm(exact) < 1e-5


class TestSerialization:
    def test_round_trip_exact(self):
        st = make_state(d=6, lam=-0.123456789012345, seed=21)
        text = serialize(st, seed_epoch=37)
        back, epoch = deserialize(text)
        assert epoch == 37
        assert np.array_equal(back.mu, st.mu)
        assert back.lam == st.lam
        assert np.array_equal(back.u, st.u)

    def test_seventeen_digit_decimals_survive(self):
        ugly = RankOneGaussian(
            mu=np.array([1.0 / 3.0, -2.0 / 7.0]),
            lam=math.pi / 11,
            u=np.array([math.sqrt(2), -math.e * 1e-8]),
        )
        back, _ = deserialize(serialize(ugly, seed_epoch=0))
        assert back.lam == ugly.lam
        assert np.array_equal(back.u, ugly.u)
        assert np.array_equal(back.mu, ugly.mu)

    def test_bad_record_rejected(self):
        with pytest.raises(ValueError):
            deserialize("not a state record")
