"""Monte Carlo engine for configuration-switching estimation protocols.

Shots are drawn from the Gaussian moment model: in configuration eps the
recorded S_k^z values are multivariate normal with mean
eps_k <S_k^x> sin(theta_k) and the partition covariance Gamma, plus
optional independent detection noise per sensor.  This is the regime the
states actually live in (transverse fluctuations of a squeezed collective
spin are Gaussian to excellent accuracy) and it makes thousand-atom
ensembles cheap to sample.

Randomness is counter-based (Philox) with one substream per configuration
derived from (seed, configuration index), so results are independent of
execution order and bit-reproducible for a fixed ScenarioSpec.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import estimator, moments, protocol
from .errors import InfeasiblePlanError, NumericalFailure
from .estimator import EstimationReport, ShotSet
from .moments import SensorPartition, SqueezedResource, to_db
from .protocol import ConfigurationPlan, LinearCombination

# Eigenvalues of Gamma above this (negative) floor count as round-off zeros.
PSD_CLIP = -1e-10


@dataclass(frozen=True, eq=False)
class ScenarioSpec:
    """Everything a simulated run depends on, including the seed."""

    resource: SqueezedResource
    partition: SensorPartition
    plan: ConfigurationPlan
    true_theta: np.ndarray
    detection_noise_sd: float = 0.0
    seed: int = 0

    def __post_init__(self):
        theta = np.asarray(self.true_theta, dtype=float)
        object.__setattr__(self, "true_theta", theta)
        m = self.partition.m_sensors
        if self.plan.m_sensors != m:
            raise ValueError(
                f"plan covers {self.plan.m_sensors} sensors, partition {m}"
            )
        if theta.shape != (m,):
            raise ValueError(f"true_theta must have shape ({m},), got {theta.shape}")
        if not np.isfinite(self.detection_noise_sd) or self.detection_noise_sd < 0:
            raise ValueError(
                f"detection_noise_sd must be finite and >= 0, got {self.detection_noise_sd}"
            )
        if self.partition.n_atoms != self.resource.n_atoms:
            raise ValueError(
                f"partition holds {self.partition.n_atoms} atoms, resource "
                f"{self.resource.n_atoms}"
            )

    @property
    def m_sensors(self) -> int:
        return self.partition.m_sensors

    @property
    def mean_spins(self) -> np.ndarray:
        return (
            np.asarray(self.partition.contrasts)
            * np.asarray(self.partition.atom_counts, dtype=float)
            / 2
        )


def _gamma_factor(gamma: np.ndarray) -> np.ndarray:
    """Symmetric square root of Gamma, tolerating PSD round-off."""
    eigs, vecs = np.linalg.eigh(gamma)
    if eigs[0] < PSD_CLIP:
        raise NumericalFailure(
            f"sensor covariance is not positive semidefinite (eigenvalue {eigs[0]:.3e})"
        )
    return vecs * np.sqrt(np.clip(eigs, 0.0, None))


def _config_generator(seed: int, config_index: int) -> np.random.Generator:
    child = np.random.SeedSequence(seed, spawn_key=(config_index,))
    return np.random.Generator(np.random.Philox(child))


def sample_shots(spec: ScenarioSpec) -> ShotSet:
    """Draw every configuration's shots; deterministic given spec.seed."""
    model = moments.partition_moments(spec.resource, spec.partition)
    factor = _gamma_factor(model.gamma)
    spins = spec.mean_spins
    blocks = []
    for l, (cfg, reps) in enumerate(spec.plan.entries):
        signs = np.asarray(cfg.signs, dtype=float)
        mean = signs * spins * np.sin(spec.true_theta)
        rng = _config_generator(spec.seed, l)
        shots = mean + rng.standard_normal((reps, spec.m_sensors)) @ factor.T
        if spec.detection_noise_sd > 0:
            shots = shots + spec.detection_noise_sd * rng.standard_normal(
                (reps, spec.m_sensors)
            )
        blocks.append(shots)
    return ShotSet(plan=spec.plan, readouts=tuple(blocks), mean_spins=spins)


def fusion_dof(n_configs: int, m_sensors: int) -> int:
    """Free parameters of the fused estimator: L*M coefficients minus the
    M unbiasedness constraints, plus one for the sample mean."""
    return n_configs * m_sensors - m_sensors + 1


def run_protocol(spec: ScenarioSpec) -> EstimationReport:
    """Simulate the full plan and fuse every local parameter optimally."""
    shots = sample_shots(spec)
    covs = estimator.config_covariances(shots)
    m = spec.m_sensors
    n_configs = spec.plan.n_configs
    locals_per_config = [estimator.local_estimate(shots, l) for l in range(n_configs)]

    weights = np.zeros((m, n_configs, m))
    estimates = np.zeros(m)
    for k in range(m):
        basis = np.zeros(m)
        basis[k] = 1.0
        xs, _ = estimator.general_weights(covs, basis)
        for l, x in enumerate(xs):
            weights[k, l] = x
            estimates[k] += x @ locals_per_config[l]

    covariance = np.zeros((m, m))
    for l, cov in enumerate(covs):
        covariance += weights[:, l, :] @ cov @ weights[:, l, :].T
    covariance = (covariance + covariance.T) / 2

    mu = spec.plan.total_reps
    sql = np.full(m, m / (mu * spec.resource.n_atoms))
    gain_db = to_db(np.diag(covariance) / sql)
    return EstimationReport(
        estimates=estimates,
        covariance=covariance,
        sql=sql,
        gain_db=gain_db,
        weights=weights,
        dof=fusion_dof(n_configs, m),
        mu=mu,
    )


def combination_variance(shots: ShotSet, coeffs: np.ndarray, config_index: int) -> float:
    """Sample variance of the mean estimate of n.theta from one configuration."""
    values = estimator.shot_estimates(shots, config_index) @ np.asarray(coeffs, dtype=float)
    if values.size < 2:
        raise NumericalFailure("combination variance needs at least 2 shots")
    return float(np.var(values, ddof=1) / values.size)


def _spawned_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(1 + index,)).generate_state(1)[0])


def sweep_mixing_angle(base: ScenarioSpec, angles) -> list:
    """Optimal single-combination protocol for each mixing angle, M = 2.

    Per angle: allocate atoms proportional to the coefficients, set the
    sign configuration from their signs, simulate one configuration with
    all repetitions, and report the gain of n.theta against the
    combination SQL.  Sensors with a zero coefficient are excluded.
    """
    if base.m_sensors != 2:
        raise ValueError("mixing-angle sweeps are defined for two sensors")
    rows = []
    mu = base.plan.total_reps
    n_atoms = base.resource.n_atoms
    theory_db = float(to_db(base.resource.xi2))
    for i, alpha in enumerate(angles):
        combo = LinearCombination.from_mixing_angle(alpha)
        counts = protocol.allocate_atoms(combo, n_atoms)
        coeffs = np.asarray(combo.coeffs)
        active = [k for k, n_k in enumerate(counts) if n_k > 0]
        signs = tuple(1 if coeffs[k] >= 0 else -1 for k in active)
        partition = SensorPartition(
            atom_counts=tuple(counts[k] for k in active),
            contrasts=tuple(base.partition.contrasts[k] for k in active),
        )
        spec = ScenarioSpec(
            resource=base.resource,
            partition=partition,
            plan=protocol.single_configuration_plan(signs, mu),
            true_theta=base.true_theta[active],
            detection_noise_sd=base.detection_noise_sd,
            seed=_spawned_seed(base.seed, i),
        )
        shots = sample_shots(spec)
        variance = combination_variance(shots, coeffs[active], 0)
        sql = protocol.combination_sql(combo, mu, n_atoms)
        ratio, gain_db = estimator.quantum_gain(variance, sql)
        rows.append(
            {
                "alpha_deg": float(np.degrees(alpha)),
                "atom_counts": counts,
                "signs": tuple(int(np.sign(c)) if c != 0 else 0 for c in coeffs),
                "variance": variance,
                "sql": sql,
                "gain": ratio,
                "gain_db": gain_db,
                "theory_db": theory_db,
            }
        )
    return rows


def scaled_plan(plan: ConfigurationPlan, total_reps: int) -> ConfigurationPlan:
    """Same configurations, repetitions rescaled to a new total."""
    weights = np.asarray(plan.reps, dtype=float)
    reps = protocol.largest_remainder_round(
        total_reps * weights / weights.sum(), total_reps
    )
    if np.any(reps < 1):
        raise InfeasiblePlanError(
            f"{total_reps} repetitions cannot cover {plan.n_configs} configurations"
        )
    return ConfigurationPlan(
        entries=tuple((cfg, int(r)) for (cfg, _), r in zip(plan.entries, reps))
    )


def convergence_study(spec: ScenarioSpec, mu_grid) -> list:
    """Gain and its error bar versus the number of repetitions.

    Shows the 1/mu decay of the fused variance and the sqrt(2/(mu-dof))
    shrinkage of its relative uncertainty."""
    rows = []
    for i, mu in enumerate(mu_grid):
        sub = replace(
            spec, plan=scaled_plan(spec.plan, int(mu)), seed=_spawned_seed(spec.seed, i)
        )
        report = run_protocol(sub)
        variance = float(np.diag(report.covariance).mean())
        rows.append(
            {
                "mu": int(mu),
                "variance": variance,
                "gain_db": float(report.gain_db.mean()),
                "dof": report.dof,
                "se_variance": estimator.dof_error(variance, int(mu), report.dof),
                "rel_error": float(np.sqrt(2.0 / (int(mu) - report.dof))),
            }
        )
    return rows


def configuration_gain_matrix(spec: ScenarioSpec):
    """Gain of every natural combination under every preparation.

    Row l: data taken in configuration l; column j: the combination
    matched to configuration j (coefficients eps_k N_k, unit norm).
    Quantum gain concentrates on the diagonal, where preparation and
    combination agree.  Returns (gain_db_matrix, combinations).
    """
    shots = sample_shots(spec)
    combos = [
        protocol.combination_from_partition(spec.partition, cfg)
        for cfg, _ in spec.plan.entries
    ]
    n_configs = spec.plan.n_configs
    gain_db = np.zeros((n_configs, n_configs))
    for l, (_, reps) in enumerate(spec.plan.entries):
        for j, combo in enumerate(combos):
            variance = combination_variance(shots, np.asarray(combo.coeffs), l)
            sql = protocol.combination_sql(combo, reps, spec.resource.n_atoms)
            _, db = estimator.quantum_gain(variance, sql)
            gain_db[l, j] = db
    return gain_db, combos
