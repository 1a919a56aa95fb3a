"""Estimators: from per-configuration shot records to fused parameters.

Per configuration the local readout is linear, theta_k = eps_k S_k^z /
<S_k^x> for phases well below a radian.  Estimates from different
configurations are fused by the minimum-variance unbiased linear
combination: minimize sum_l x_l^T Sigma_l x_l subject to sum_l x_l = n,
solved in closed form through the per-configuration precisions.  The
special two-channel case (one squeezed, M-1 anti-squeezed readings of the
same parameter) has the familiar scalar weight alpha.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalFailure
from .moments import to_db
from .protocol import ConfigurationPlan

# Same guard as for the moment model: refuse hopeless inversions.
CONDITION_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class ShotSet:
    """Raw S_k^z readouts grouped by configuration.

    readouts[l] has shape (mu_l, M); mean_spins holds <S_k^x> = C_k N_k/2,
    the readout scale of each sensor.
    """

    plan: ConfigurationPlan
    readouts: tuple
    mean_spins: np.ndarray

    def __post_init__(self):
        readouts = tuple(np.asarray(r, dtype=float) for r in self.readouts)
        spins = np.asarray(self.mean_spins, dtype=float)
        object.__setattr__(self, "readouts", readouts)
        object.__setattr__(self, "mean_spins", spins)
        m = self.plan.m_sensors
        if spins.shape != (m,):
            raise ValueError(f"mean_spins must have shape ({m},), got {spins.shape}")
        if np.any(spins <= 0):
            raise ValueError("mean spins must be positive")
        if len(readouts) != self.plan.n_configs:
            raise ValueError(
                f"{len(readouts)} readout blocks for {self.plan.n_configs} configurations"
            )
        for block, (cfg, reps) in zip(readouts, self.plan.entries):
            if block.shape != (reps, m):
                raise ValueError(
                    f"configuration {cfg.label()} expects shape ({reps}, {m}), "
                    f"got {block.shape}"
                )

    @property
    def m_sensors(self) -> int:
        return self.plan.m_sensors

    def to_rows(self):
        """Rows (config_index, shot_index, S_1^z ... S_M^z) for export."""
        rows = []
        for l, block in enumerate(self.readouts):
            for i, shot in enumerate(block):
                rows.append((l, i, *shot))
        return rows


def shot_estimates(shots: ShotSet, config_index: int) -> np.ndarray:
    """Per-shot phase values for one configuration, signs unfolded."""
    cfg, _ = shots.plan.entries[config_index]
    signs = np.asarray(cfg.signs, dtype=float)
    return shots.readouts[config_index] * signs / shots.mean_spins


def local_estimate(shots: ShotSet, config_index: int) -> np.ndarray:
    """Mean phase estimate of each sensor from one configuration."""
    return shot_estimates(shots, config_index).mean(axis=0)


def config_covariances(shots: ShotSet) -> list:
    """Sample covariance of the mean estimator, per configuration.

    Each entry is the (M, M) sample covariance of the per-shot phase
    values divided by mu_l; needs at least two shots per configuration.
    """
    out = []
    for l, (_, reps) in enumerate(shots.plan.entries):
        if reps < 2:
            raise NumericalFailure(
                f"configuration {l} has {reps} shot(s); sample covariance needs >= 2"
            )
        est = shot_estimates(shots, l)
        cov = np.atleast_2d(np.cov(est, rowvar=False, ddof=1)) / reps
        out.append(cov)
    return out


def weight_alpha(var_sq: float, var_asq: float, m_sensors: int) -> float:
    """Variance-minimizing weight between squeezed and anti-squeezed channels.

    Clipped to [-1, 1]: sample noise can push the raw ratio outside, and
    clipping keeps the fused estimator unbiased."""
    if var_sq <= 0 or var_asq <= 0:
        raise ValueError("variances must be positive")
    if m_sensors < 2:
        raise ValueError("m_sensors must be >= 2")
    per = var_asq / (m_sensors - 1)
    alpha = (per - var_sq) / (per + var_sq)
    return float(np.clip(alpha, -1.0, 1.0))


def fuse_alpha(theta_sq: float, theta_asq_list, alpha: float) -> float:
    """Weighted average of one squeezed and several anti-squeezed estimates.

    Weights (1+alpha)/2 and (1-alpha)/(2 L) sum to one, so the result is
    unbiased for any alpha; alpha=+1 keeps only the squeezed channel.
    """
    values = np.asarray(theta_asq_list, dtype=float)
    if values.size < 1:
        raise ValueError("need at least one anti-squeezed estimate")
    return float(
        (1 + alpha) / 2 * theta_sq + (1 - alpha) / 2 * values.mean()
    )


def _check_spd(sigma: np.ndarray, index: int):
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ValueError(f"covariance {index} is not square: shape {sigma.shape}")
    if not np.allclose(sigma, sigma.T, rtol=1e-10, atol=0):
        raise ValueError(f"covariance {index} is not symmetric")
    eigs = np.linalg.eigvalsh(sigma)
    if eigs[0] <= 0 or eigs[-1] / eigs[0] > CONDITION_LIMIT:
        cond = np.inf if eigs[0] <= 0 else eigs[-1] / eigs[0]
        raise NumericalFailure(
            f"covariance {index} not positive definite enough: smallest eigenvalue "
            f"{eigs[0]:.3e}, condition number {cond:.3e}"
        )
    return sigma


def general_weights(sigma_list, target):
    """Minimum-variance unbiased fusion weights across configurations.

    Returns (weights, variance): weights[l] is the coefficient vector
    x_l applied to configuration l's local estimates, constrained by
    sum_l x_l = target; variance is the achieved value of
    sum_l x_l^T Sigma_l x_l.
    """
    target = np.asarray(target, dtype=float)
    sigmas = [_check_spd(s, l) for l, s in enumerate(sigma_list)]
    if not sigmas:
        raise ValueError("need at least one configuration covariance")
    if any(s.shape[0] != target.size for s in sigmas):
        raise ValueError("covariance size does not match the target vector")
    precisions = [np.linalg.inv(s) for s in sigmas]
    pooled = np.linalg.inv(sum(precisions))
    kappa = pooled @ target
    weights = [p @ kappa for p in precisions]
    variance = float(target @ kappa)
    return weights, variance


def fuse_combination(shots: ShotSet, coeffs):
    """Minimum-variance unbiased estimate of sum(c_k theta_k) using every
    configuration's data.  Returns (estimate, variance)."""
    coeffs = np.asarray(coeffs, dtype=float)
    covs = config_covariances(shots)
    xs, variance = general_weights(covs, coeffs)
    estimate = sum(
        float(x @ local_estimate(shots, l)) for l, x in enumerate(xs)
    )
    return estimate, variance


def quantum_gain(variance: float, sql: float):
    """(ratio, dB) of an achieved variance against its SQL."""
    if variance <= 0:
        raise ValueError(f"variance must be positive, got {variance}")
    if sql <= 0:
        raise ValueError(f"SQL must be positive, got {sql}")
    ratio = variance / sql
    return ratio, float(to_db(ratio))


def dof_error(variance: float, mu: int, dof: int) -> float:
    """Standard error of a sample variance with dof fitted weights.

    variance * sqrt(2 / (mu - dof)); the relative form sqrt(2/(mu-dof))
    is what error bars on gains use."""
    if mu <= dof:
        raise ValueError(f"mu={mu} must exceed dof={dof}")
    return variance * float(np.sqrt(2.0 / (mu - dof)))


@dataclass(frozen=True, eq=False)
class EstimationReport:
    """Fused estimates with covariance, SQL baselines and gains."""

    estimates: np.ndarray          # (M,)
    covariance: np.ndarray         # (M, M) fused-estimator covariance
    sql: np.ndarray                # (M,) per-parameter SQL variance
    gain_db: np.ndarray            # (M,)
    weights: np.ndarray            # (M, L, M): x_l per parameter
    dof: int
    mu: int

    @property
    def m_sensors(self) -> int:
        return self.estimates.size

    @property
    def se_gain_db(self) -> np.ndarray:
        """Error bar of each gain in dB from the variance-of-variance rule."""
        rel = np.sqrt(2.0 / (self.mu - self.dof))
        return np.full(self.m_sensors, 10.0 / np.log(10.0) * rel)

    def to_rows(self):
        """Rows (parameter, estimate, variance, sql, gain_db, se_gain_db)."""
        var = np.diag(self.covariance)
        se = self.se_gain_db
        return [
            (k, self.estimates[k], var[k], self.sql[k], self.gain_db[k], se[k])
            for k in range(self.m_sensors)
        ]

    def to_dict(self):
        return {
            "estimates": self.estimates.tolist(),
            "covariance": self.covariance.tolist(),
            "sql": self.sql.tolist(),
            "gain_db": self.gain_db.tolist(),
            "se_gain_db": self.se_gain_db.tolist(),
            "weights": self.weights.tolist(),
            "dof": self.dof,
            "mu": self.mu,
        }
