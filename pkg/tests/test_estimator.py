"""Tests for readout, fusion weights, and error accounting.

The constrained fusion is checked three ways: a frozen hand-solvable
instance, exact agreement with the scalar-alpha path on symmetric inputs,
and a projected-gradient solver as an independent numerical oracle.
"""

import numpy as np
import pytest

from spinarray.errors import NumericalFailure
from spinarray.estimator import (
    EstimationReport,
    ShotSet,
    config_covariances,
    dof_error,
    fuse_alpha,
    general_weights,
    local_estimate,
    quantum_gain,
    shot_estimates,
    weight_alpha,
)
from spinarray.protocol import SignConfiguration


def qp_oracle(sigmas, target, iters=6000):
    """Projected gradient descent on the stacked quadratic program."""
    l, m = len(sigmas), target.size
    x = np.tile(target / l, (l, 1))

    def project(y):
        shift = (y.sum(axis=0) - target) / l
        return y - shift

    lip = 2 * max(np.linalg.eigvalsh(s)[-1] for s in sigmas)
    for _ in range(iters):
        grad = np.stack([2 * s @ xi for s, xi in zip(sigmas, x)])
        x = project(x - grad / lip)
    return x, float(sum(xi @ s @ xi for s, xi in zip(sigmas, x)))


def random_spd(rng, m, lo=0.5, hi=3.0):
    q, _ = np.linalg.qr(rng.standard_normal((m, m)))
    return q @ np.diag(rng.uniform(lo, hi, size=m)) @ q.T


def make_shotset(blocks, signs, mean_spins):
    entries = tuple(
        (SignConfiguration(s), len(b)) for s, b in zip(signs, blocks)
    )
    from spinarray.protocol import ConfigurationPlan

    return ShotSet(
        plan=ConfigurationPlan(entries),
        readouts=tuple(np.asarray(b, dtype=float) for b in blocks),
        mean_spins=np.asarray(mean_spins, dtype=float),
    )


class TestLocalEstimate:
    def test_zero_shots(self):
        shots = make_shotset([np.zeros((4, 2))], [(1, -1)], (10.0, 10.0))
        np.testing.assert_array_equal(local_estimate(shots, 0), [0.0, 0.0])

    def test_linear_readout(self):
        shots = make_shotset([[[0.5, -0.2]]], [(1, 1)], (10.0, 10.0))
        np.testing.assert_allclose(local_estimate(shots, 0), [0.05, -0.02])

    def test_sign_unfolding(self):
        # a pi-rotated sensor records the negated trace of the same phase
        shots = make_shotset([[[0.5, -0.2]]], [(1, -1)], (10.0, 10.0))
        np.testing.assert_allclose(local_estimate(shots, 0), [0.05, 0.02])

    def test_rejects_zero_mean_spin(self):
        with pytest.raises(ValueError, match="positive"):
            make_shotset([[[0.5, -0.2]]], [(1, 1)], (10.0, 0.0))

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            make_shotset([np.zeros((4, 3))], [(1, -1)], (10.0, 10.0))


class TestWeightAlpha:
    def test_plain_value(self):
        # per-channel anti-squeezed variance 3, squeezed 1 -> (3-1)/(3+1)
        assert weight_alpha(1.0, 6.0, 3) == pytest.approx(0.5)

    def test_equal_weighting_point(self):
        # var_asq/(M-1) == var_sq  ->  alpha = 0
        assert weight_alpha(1.5, 4.5, 4) == 0.0

    def test_squeezed_only_limit(self):
        assert weight_alpha(1.0, 1e12, 2) == pytest.approx(1.0, abs=1e-9)

    def test_clipping(self):
        assert weight_alpha(1e-12, 1e12, 2) <= 1.0
        assert weight_alpha(1e12, 1e-12, 2) >= -1.0

    def test_harmonic_fused_variance(self):
        """At the optimal alpha the fused variance is the harmonic blend."""
        var_sq, var_asq, m = 0.7, 3.1, 4
        alpha = weight_alpha(var_sq, var_asq, m)
        fused = ((1 + alpha) / 2) ** 2 * var_sq + (
            ((1 - alpha) / 2) ** 2 / (m - 1)
        ) * var_asq
        assert fused == pytest.approx(1 / (1 / var_sq + (m - 1) / var_asq), rel=1e-12)


class TestFuseAlpha:
    def test_extreme_weights(self):
        assert fuse_alpha(0.5, [1.0, 2.0, 3.0], 1.0) == 0.5
        assert fuse_alpha(0.5, [1.0, 2.0, 3.0], -1.0) == 2.0

    def test_weights_sum_to_one(self):
        # a constant fed through the fusion comes back unchanged
        for alpha in (-0.7, 0.0, 0.4):
            assert fuse_alpha(1.23, [1.23, 1.23], alpha) == pytest.approx(1.23)


class TestGeneralWeights:
    def test_frozen_instance(self):
        sigmas = [np.array([[2.0, 1.0], [1.0, 2.0]]), np.array([[2.0, -1.0], [-1.0, 2.0]])]
        xs, var = general_weights(sigmas, np.array([1.0, 0.0]))
        np.testing.assert_allclose(xs[0], [0.5, -0.25], atol=1e-12)
        np.testing.assert_allclose(xs[1], [0.5, 0.25], atol=1e-12)
        assert var == pytest.approx(0.75, abs=1e-12)

    def test_single_configuration_forced(self):
        sigma = np.array([[3.0, 0.5], [0.5, 1.0]])
        n = np.array([0.2, -1.0])
        xs, var = general_weights([sigma], n)
        np.testing.assert_allclose(xs[0], n)
        assert var == pytest.approx(n @ sigma @ n)

    def test_constraint_satisfied(self):
        rng = np.random.default_rng(0)
        sigmas = [random_spd(rng, 3) for _ in range(4)]
        n = rng.standard_normal(3)
        xs, _ = general_weights(sigmas, n)
        np.testing.assert_allclose(sum(xs), n, atol=1e-12)

    def test_matches_alpha_path_on_symmetric_inputs(self):
        """Symmetric two-configuration pairs reduce exactly to the scalar
        alpha fusion in the +- basis."""
        rng = np.random.default_rng(7)
        for _ in range(25):
            v = rng.uniform(1.0, 4.0)
            c = rng.uniform(-0.9, 0.9) * v
            s1 = np.array([[v, c], [c, v]])
            s2 = np.array([[v, -c], [-c, v]])
            xs, var = general_weights([s1, s2], np.array([1.0, 0.0]))
            alpha = -c / v
            np.testing.assert_allclose(xs[0], [0.5, alpha / 2], atol=1e-10)
            np.testing.assert_allclose(xs[1], [0.5, -alpha / 2], atol=1e-10)
            assert var == pytest.approx((v**2 - c**2) / (2 * v), rel=1e-10)

    def test_never_worse_than_alpha_path(self):
        """The free optimization dominates fixed +- directions with scalar
        per-direction weights on arbitrary covariance pairs."""
        rng = np.random.default_rng(42)
        plus = np.array([1.0, 1.0]) / np.sqrt(2)
        minus = np.array([1.0, -1.0]) / np.sqrt(2)
        for _ in range(100):
            sigmas = [random_spd(rng, 2), random_spd(rng, 2)]
            n = np.array([1.0, 0.0])
            _, var_free = general_weights(sigmas, n)
            a = [plus @ s @ plus for s in sigmas]
            b = [minus @ s @ minus for s in sigmas]
            wa = np.array([1 / a[0], 1 / a[1]]) / (1 / a[0] + 1 / a[1])
            wb = np.array([1 / b[0], 1 / b[1]]) / (1 / b[0] + 1 / b[1])
            xs = [
                (wa[l] * plus + wb[l] * minus) / np.sqrt(2) for l in range(2)
            ]
            var_alpha = sum(x @ s @ x for x, s in zip(xs, sigmas))
            assert var_free <= var_alpha + 1e-12

    def test_against_projected_gradient_oracle(self):
        rng = np.random.default_rng(123)
        for _ in range(100):
            m = rng.integers(2, 4)
            l = rng.integers(2, 5)
            sigmas = [random_spd(rng, m) for _ in range(l)]
            n = rng.standard_normal(m)
            _, var = general_weights(sigmas, n)
            _, var_pg = qp_oracle(sigmas, n)
            assert var == pytest.approx(var_pg, abs=1e-8 * max(1.0, abs(var_pg)))

    def test_rejects_singular(self):
        with pytest.raises(NumericalFailure, match="positive definite"):
            general_weights([np.array([[1.0, 1.0], [1.0, 1.0]])], np.array([1.0, 0.0]))

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError, match="symmetric"):
            general_weights([np.array([[1.0, 0.5], [0.2, 1.0]])], np.array([1.0, 0.0]))


class TestQuantumGain:
    def test_unity(self):
        ratio, db = quantum_gain(0.002, 0.002)
        assert ratio == 1.0 and db == 0.0

    def test_half(self):
        _, db = quantum_gain(0.001, 0.002)
        assert db == pytest.approx(-3.0103, abs=1e-4)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            quantum_gain(0.0, 1.0)
        with pytest.raises(ValueError):
            quantum_gain(1.0, 0.0)

    def test_invariant_under_common_scaling(self):
        a = quantum_gain(3e-4, 7e-4)
        b = quantum_gain(3e-9, 7e-9)
        assert a[0] == pytest.approx(b[0], rel=1e-12)
        assert a[1] == pytest.approx(b[1], abs=1e-10)


class TestDofError:
    def test_minimal_case(self):
        assert dof_error(2.0, 3, 1) / 2.0 == pytest.approx(1.0)

    def test_bench_sized_case(self):
        assert dof_error(1.0, 402, 10) == pytest.approx(0.0714285714, rel=1e-8)

    def test_rejects_underdetermined(self):
        with pytest.raises(ValueError):
            dof_error(1.0, 10, 10)

    def test_bootstrap_agreement(self):
        """Resampling a Gaussian shot record reproduces the closed-form
        error of the variance within 10%."""
        rng = np.random.default_rng(2024)
        mu, dof = 402, 10
        shots = rng.standard_normal(mu) * 0.3
        idx = rng.integers(0, mu, size=(800, mu))
        boot = np.var(shots[idx], axis=1, ddof=1)
        rel = boot.std(ddof=1) / np.var(shots, ddof=1)
        assert rel == pytest.approx(np.sqrt(2 / (mu - dof)), rel=0.10)


class TestShotSetPlumbing:
    def test_config_covariances_scale(self):
        rng = np.random.default_rng(3)
        block = rng.standard_normal((5000, 2)) * 2.0
        shots = make_shotset([block], [(1, 1)], (1.0, 1.0))
        cov = config_covariances(shots)[0]
        np.testing.assert_allclose(cov, 4.0 / 5000 * np.eye(2), atol=3e-3)

    def test_covariance_needs_two_shots(self):
        shots = make_shotset([[[0.5, -0.2]]], [(1, 1)], (10.0, 10.0))
        with pytest.raises(NumericalFailure, match=">= 2"):
            config_covariances(shots)

    def test_shot_rows(self):
        shots = make_shotset(
            [[[1.0, 2.0]], [[3.0, 4.0], [5.0, 6.0]]], [(1, 1), (1, -1)], (10.0, 10.0)
        )
        rows = shots.to_rows()
        assert rows[0] == (0, 0, 1.0, 2.0)
        assert rows[2] == (1, 1, 5.0, 6.0)

    def test_scale_equivariance(self):
        """Scaling all readouts scales the estimates linearly."""
        block = np.array([[0.5, -0.2], [0.1, 0.3]])
        base = make_shotset([block], [(1, -1)], (10.0, 10.0))
        scaled = make_shotset([3 * block], [(1, -1)], (10.0, 10.0))
        np.testing.assert_allclose(
            shot_estimates(scaled, 0), 3 * shot_estimates(base, 0)
        )


class TestReport:
    def make_report(self):
        return EstimationReport(
            estimates=np.array([0.01, -0.02]),
            covariance=np.array([[4e-6, 1e-7], [1e-7, 5e-6]]),
            sql=np.array([1e-5, 1e-5]),
            gain_db=np.array([-3.9794, -3.0103]),
            weights=np.zeros((2, 2, 2)),
            dof=3,
            mu=1000,
        )

    def test_rows(self):
        rows = self.make_report().to_rows()
        assert len(rows) == 2
        param, est, var, sql, gain, se = rows[0]
        assert (param, est, var, sql) == (0, 0.01, 4e-6, 1e-5)
        assert gain == pytest.approx(-3.9794)
        assert se == pytest.approx(10 / np.log(10) * np.sqrt(2 / 997))

    def test_dict_round_trip(self):
        d = self.make_report().to_dict()
        assert d["dof"] == 3 and len(d["estimates"]) == 2
