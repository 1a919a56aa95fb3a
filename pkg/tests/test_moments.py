"""Tests for the analytic moment model and closed-form gains.

Frozen expected values are computed by direct transcription of the closed
forms at the quoted inputs (xi^2 = 0.2239, C = 0.94, N = 1450 for the
two-sensor case); structural claims are cross-checked against the exact
product-basis oracle.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinarray import oat
from spinarray.errors import NumericalFailure
from spinarray.moments import (
    SensorPartition,
    SqueezedResource,
    antisqueezed_gain,
    estimator_covariance,
    from_db,
    joint_gain,
    local_gain,
    pair_covariance,
    partition_moments,
    to_db,
)

BENCH = dict(n_atoms=1450, xi2=0.2239, contrast=0.94)


def bench_resource(**kw):
    return SqueezedResource.from_squeezing(**{**BENCH, **kw})


class TestSqueezedResource:
    def test_derived_quantities(self):
        r = bench_resource()
        assert r.mean_sx == pytest.approx(0.94 * 725)
        assert r.contrast == pytest.approx(0.94)
        assert r.xi2 == pytest.approx(0.2239, rel=1e-12)
        assert r.var_sz == pytest.approx(71.7162895, rel=1e-10)

    def test_db_round_trip(self):
        assert from_db(to_db(0.2239)) == pytest.approx(0.2239, rel=1e-12)
        assert to_db(0.5) == pytest.approx(-3.0102999566, rel=1e-9)

    def test_uncertainty_relation_enforced(self):
        with pytest.raises(ValueError, match="uncertainty"):
            SqueezedResource(n_atoms=100, var_sz=1.0, mean_sx=50.0, var_sy=10.0)

    def test_css_saturates_uncertainty_exactly(self):
        SqueezedResource(n_atoms=100, var_sz=25.0, mean_sx=50.0, var_sy=25.0)

    def test_minimum_uncertainty_completion(self):
        r = SqueezedResource.from_squeezing(100, 0.2, 1.0, minimum_uncertainty=True)
        assert r.var_sy * r.var_sz == pytest.approx(r.mean_sx**2 / 4, rel=1e-12)

    def test_rejects_unphysical(self):
        with pytest.raises(ValueError):
            SqueezedResource(n_atoms=100, var_sz=1.0, mean_sx=51.0)
        with pytest.raises(ValueError):
            SqueezedResource(n_atoms=0, var_sz=1.0, mean_sx=1.0)
        with pytest.raises(ValueError):
            SqueezedResource.from_squeezing(100, 0.2, 1.5)


class TestPairCovariance:
    def test_css_uncorrelated(self):
        r = SqueezedResource(n_atoms=200, var_sz=50.0, mean_sx=100.0)
        assert pair_covariance(r) == 0.0

    def test_perfect_squeezing_limit(self):
        for n in (2, 17, 1450):
            r = SqueezedResource(n_atoms=n, var_sz=0.0, mean_sx=n / 4)
            assert pair_covariance(r) == pytest.approx(-1 / (4 * (n - 1)), rel=1e-14)

    def test_bench_value(self):
        # direct evaluation of the closed form at the quoted inputs
        assert pair_covariance(bench_resource()) == pytest.approx(
            -1.383992339545e-4, rel=1e-10
        )

    def test_small_n_cross_check(self):
        # brute force at N = 8: c equals any off-diagonal single-pair case
        state = oat.aligned_oat_state(8, 0.2)
        mom = oat.collective_moments(state)
        r = SqueezedResource(n_atoms=8, var_sz=mom.var_sz, mean_sx=mom.mean_sx)
        brute = oat.brute_force_sensor_moments(8, 0.2, state.rotation_x, (1,) * 8)
        assert pair_covariance(r) == pytest.approx(brute.gamma_z[0, 1], abs=1e-12)

    def test_rejects_single_atom(self):
        with pytest.raises(ValueError):
            pair_covariance(SqueezedResource(n_atoms=1, var_sz=0.1, mean_sx=0.4))


class TestPartitionMoments:
    def test_bench_two_sensor_values(self):
        model = partition_moments(
            bench_resource(), SensorPartition.equal_split(1450, 2, 0.94)
        )
        assert model.gamma[0, 0] == pytest.approx(108.60424210, rel=1e-9)
        assert model.gamma[0, 1] == pytest.approx(-72.74609735, rel=1e-9)
        assert model.gamma.sum() == pytest.approx(71.7162895, rel=1e-10)

    def test_css_diagonal(self):
        r = SqueezedResource(n_atoms=20, var_sz=5.0, mean_sx=10.0)
        model = partition_moments(r, SensorPartition((12, 8), (1.0, 1.0)))
        np.testing.assert_allclose(model.gamma, np.diag([3.0, 2.0]), atol=1e-15)

    def test_response_per_sensor(self):
        r = bench_resource()
        model = partition_moments(r, SensorPartition((1000, 450), (0.9, 0.8)))
        np.testing.assert_allclose(np.diag(model.response), [450.0, 180.0])

    def test_rejects_inconsistent_partition(self):
        with pytest.raises(ValueError, match="atoms"):
            partition_moments(bench_resource(), SensorPartition.equal_split(1400, 2))

    def test_matches_brute_force(self):
        state = oat.aligned_oat_state(8, 0.25)
        mom = oat.collective_moments(state)
        r = SqueezedResource(n_atoms=8, var_sz=mom.var_sz, mean_sx=mom.mean_sx)
        part = SensorPartition((4, 4), (r.contrast,) * 2)
        brute = oat.brute_force_partition_moments(8, 0.25, state.rotation_x, part)
        np.testing.assert_allclose(partition_moments(r, part).gamma, brute, atol=1e-10)

    @settings(max_examples=60, deadline=None)
    @given(
        n_sensors=st.integers(1, 6),
        seed=st.integers(0, 2**32 - 1),
        xi2=st.floats(1e-3, 2.0),
    )
    def test_partition_consistency(self, n_sensors, seed, xi2):
        """Total Var(S_z) is recovered from any sensor split."""
        rng = np.random.default_rng(seed)
        counts = rng.integers(1, 400, size=n_sensors)
        n = int(counts.sum())
        if n < 2:
            return
        r = SqueezedResource.from_squeezing(n, xi2, 0.9)
        model = partition_moments(
            r, SensorPartition(tuple(counts), (0.9,) * n_sensors)
        )
        assert model.gamma.sum() == pytest.approx(r.var_sz, rel=1e-12)

    def test_gamma_positive_semidefinite(self):
        for xi2 in (0.0, 0.05, 0.5, 1.0):
            r = SqueezedResource.from_squeezing(300, xi2, 0.95)
            model = partition_moments(r, SensorPartition((200, 60, 40), (0.95,) * 3))
            assert np.linalg.eigvalsh(model.gamma)[0] >= -1e-12


class TestEstimatorCovariance:
    def test_css_reaches_sql(self):
        # a coherent state has Var(S_z) = N/4 whatever the readout contrast
        for contrast in (1.0, 0.94):
            r = SqueezedResource(n_atoms=1200, var_sz=300.0, mean_sx=contrast * 600)
            model = partition_moments(r, SensorPartition.equal_split(1200, 3, contrast))
            cov = estimator_covariance(model, mu=50)
            expected = 3 / (50 * 1200 * contrast**2)
            np.testing.assert_allclose(cov, expected * np.eye(3), rtol=1e-12)

    def test_two_distinct_eigenvalues(self):
        model = partition_moments(
            bench_resource(), SensorPartition.equal_split(1450, 2, 0.94)
        )
        cov = estimator_covariance(model, mu=1)
        eigs = np.linalg.eigvalsh(cov)
        np.testing.assert_allclose(
            sorted([cov[0, 0] + cov[0, 1], cov[0, 0] - cov[0, 1]]), eigs, rtol=1e-12
        )

    def test_bench_diagonal(self):
        # reference values from transcribing the covariance closed forms
        model = partition_moments(
            bench_resource(), SensorPartition.equal_split(1450, 2, 0.94)
        )
        cov = estimator_covariance(model, mu=1)
        assert cov[0, 0] == pytest.approx(9.353519590202e-4, rel=1e-9)
        assert cov[0, 1] == pytest.approx(-6.265243728133e-4, rel=1e-9)

    def test_reduces_to_global_spin_form(self):
        """Equal split with uniform contrast: Sigma = M^2 Gamma / (mu <S_x>^2)."""
        r = bench_resource()
        model = partition_moments(r, SensorPartition.equal_split(1450, 2, 0.94))
        cov = estimator_covariance(model, mu=13)
        np.testing.assert_allclose(
            cov, 4 * model.gamma / (13 * r.mean_sx**2), rtol=1e-12
        )

    def test_mu_scaling(self):
        model = partition_moments(
            bench_resource(), SensorPartition.equal_split(1450, 2, 0.94)
        )
        np.testing.assert_allclose(
            estimator_covariance(model, 1) / 10, estimator_covariance(model, 10)
        )

    def test_singular_gamma_refused(self):
        r = SqueezedResource(n_atoms=100, var_sz=0.0, mean_sx=50.0)
        model = partition_moments(r, SensorPartition.equal_split(100, 2))
        with pytest.raises(NumericalFailure, match="condition number"):
            estimator_covariance(model, mu=1)

    def test_spectral_identity_many_m(self):
        """Equal splits give sigma_min on (1..1)/sqrt(M) and an (M-1)-fold
        sigma_max, with the stated entry combinations."""
        for m in (2, 3, 4, 8):
            n = 240 * m
            r = SqueezedResource.from_squeezing(n, 0.3, 0.97)
            model = partition_moments(r, SensorPartition.equal_split(n, m, 0.97))
            cov = estimator_covariance(model, mu=7)
            eigs, vecs = np.linalg.eigh(cov)
            sigma_min = cov[0, 0] + (m - 1) * cov[0, 1]
            sigma_max = cov[0, 0] - cov[0, 1]
            assert eigs[0] == pytest.approx(sigma_min, rel=1e-10)
            np.testing.assert_allclose(eigs[1:], sigma_max, rtol=1e-10)
            ones = np.ones(m) / np.sqrt(m)
            assert abs(vecs[:, 0] @ ones) == pytest.approx(1.0, abs=1e-10)


class TestGains:
    def test_local_gain_css_is_unity(self):
        r = SqueezedResource.from_squeezing(10_000, 1.0, 1.0)
        for m in (1, 2, 5):
            assert local_gain(r, m) == pytest.approx(1.0, rel=1e-12)

    def test_local_gain_bench(self):
        assert local_gain(bench_resource(), 2) == pytest.approx(0.6781301703, rel=1e-9)
        assert to_db(local_gain(bench_resource(), 2)) == pytest.approx(-1.69, abs=0.005)

    def test_local_gain_strong_squeezing_limit(self):
        """(M-1)/M survives as xi^2 -> 0 at large N."""
        r = SqueezedResource.from_squeezing(10**6, 1e-10, 1.0)
        for m in (2, 3, 8):
            assert local_gain(r, m) == pytest.approx((m - 1) / m, rel=1e-3)

    def test_antisqueezed_css(self):
        r = SqueezedResource.from_squeezing(5000, 1.0, 1.0)
        assert antisqueezed_gain(r) == pytest.approx(1.0, rel=1e-12)

    def test_antisqueezed_above_sql(self):
        for xi2 in (0.05, 0.3, 0.9):
            r = SqueezedResource.from_squeezing(2000, xi2, 1.0)
            assert antisqueezed_gain(r) > 1.0

    def test_antisqueezed_bench(self):
        g = antisqueezed_gain(bench_resource())
        assert g == pytest.approx(1.1323603406, rel=1e-9)
        # approaches 1/C^2 up to O(1/N)
        assert g == pytest.approx(1 / 0.94**2, abs=3 / 1450)

    def test_joint_gain_bench_two_sensors(self):
        g = joint_gain(bench_resource(), 2, large_n=True)
        assert g == pytest.approx(0.3738401896, rel=1e-9)
        assert to_db(g) == pytest.approx(-4.27, abs=0.005)

    def test_joint_gain_css_unity(self):
        r = SqueezedResource.from_squeezing(3000, 1.0, 1.0)
        assert joint_gain(r, 2, large_n=True) == pytest.approx(1.0, rel=1e-12)
        assert joint_gain(r, 2) == pytest.approx(1.0, rel=1e-12)

    def test_joint_gain_three_sensors(self):
        r = SqueezedResource.from_squeezing(1670, 0.3236, 0.93)
        g = joint_gain(r, 3, large_n=True)
        assert g == pytest.approx(0.6224021378, rel=1e-9)
        assert to_db(g) == pytest.approx(-2.06, abs=0.005)

    def test_joint_gain_harmonic_identity(self):
        """Exact joint gain is the harmonic blend of the squeezed and
        anti-squeezed channel gains."""
        for m in (2, 3, 5):
            r = bench_resource()
            blended = m / (1 / r.xi2 + (m - 1) / antisqueezed_gain(r))
            assert joint_gain(r, m) == pytest.approx(blended, rel=1e-12)

    def test_joint_gain_monotone_in_xi2(self):
        xs = np.linspace(0.01, 1.0, 40)
        gains = [
            joint_gain(SqueezedResource.from_squeezing(1450, x, 0.94), 2) for x in xs
        ]
        assert np.all(np.diff(gains) > 0)

    @settings(max_examples=40, deadline=None)
    @given(xi2=st.floats(0.01, 1.0), m=st.integers(2, 6))
    def test_exact_tends_to_large_n_form(self, xi2, m):
        r = SqueezedResource.from_squeezing(10**6, xi2, 0.95)
        assert joint_gain(r, m) == pytest.approx(
            joint_gain(r, m, large_n=True), rel=1e-4
        )


class TestOracleEquivalence:
    """Closed forms against the exact product basis at small N."""

    @pytest.mark.parametrize("n,counts", [(6, (3, 3)), (8, (4, 4)), (10, (2, 3, 5))])
    def test_gamma_matches_brute_force(self, n, counts):
        for chi_t in (0.1, 0.4):
            state = oat.aligned_oat_state(n, chi_t)
            brute = oat.brute_force_sensor_moments(n, chi_t, state.rotation_x, counts)
            r = SqueezedResource(
                n_atoms=n, var_sz=brute.global_var_sz, mean_sx=brute.global_mean_sx
            )
            model = partition_moments(
                r, SensorPartition(counts, (r.contrast,) * len(counts))
            )
            np.testing.assert_allclose(model.gamma, brute.gamma_z, atol=1e-10)
            np.testing.assert_allclose(
                np.diag(model.response), brute.mean_sx, atol=1e-10
            )
