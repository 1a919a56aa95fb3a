"""Gaussian moment model of a spin-squeezed ensemble split into sensors.

A permutation-symmetric ensemble of N spin-1/2 atoms with global moments
(Var(S_z), <S_x>) is partitioned into M sensors of N_k atoms each.  Because
the state is symmetric under atom exchange, every pair of atoms shares the
same two-spin covariance

    c = (4 Var(S_z) - N) / (4 N (N - 1)),

and the full covariance matrix of the sensor spin components follows by
counting pairs:

    Cov(S_k^z, S_l^z) = N_k N_l c            (k != l)
    Var(S_k^z)        = N_k/4 + N_k (N_k - 1) c.

From this matrix and the linear readout response the module derives the
covariance of the local phase estimators and the closed-form quantum gains
(per-sensor, anti-squeezed and jointly fused) relative to the standard
quantum limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalFailure

# Refuse to invert sensor covariance matrices beyond this condition number.
CONDITION_LIMIT = 1e12


def to_db(ratio):
    """Variance ratio -> decibels, 10*log10(ratio)."""
    return 10.0 * np.log10(ratio)


def from_db(db):
    """Decibels -> linear variance ratio."""
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0) if np.ndim(db) else 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class SqueezedResource:
    """Global moments of the squeezed ensemble before splitting.

    var_sy is optional; it is only needed for Fisher-information bounds
    and anti-squeezed quadrature bookkeeping.
    """

    n_atoms: int
    var_sz: float
    mean_sx: float
    var_sy: float | None = None

    def __post_init__(self):
        if not isinstance(self.n_atoms, (int, np.integer)) or self.n_atoms < 1:
            raise ValueError(f"n_atoms must be a positive integer, got {self.n_atoms!r}")
        if not self.var_sz >= 0.0:
            raise ValueError(f"var_sz must be >= 0, got {self.var_sz}")
        if not self.mean_sx > 0.0:
            raise ValueError(f"mean_sx must be > 0, got {self.mean_sx}")
        if self.mean_sx > self.n_atoms / 2 * (1 + 1e-12):
            raise ValueError(
                f"mean_sx={self.mean_sx} exceeds the maximal spin length N/2={self.n_atoms / 2}"
            )
        if self.var_sy is not None:
            if not self.var_sy > 0.0:
                raise ValueError(f"var_sy must be > 0 when given, got {self.var_sy}")
            # Robertson bound Var(S_y) Var(S_z) >= |<S_x>|^2 / 4, with slack
            # for round-off: coherent states saturate it exactly.
            if self.var_sy * self.var_sz < self.mean_sx**2 / 4 * (1 - 1e-9):
                raise ValueError(
                    "var_sy * var_sz violates the uncertainty relation "
                    f"({self.var_sy * self.var_sz} < {self.mean_sx ** 2 / 4})"
                )

    @property
    def xi2(self) -> float:
        """Wineland squeezing parameter N Var(S_z) / <S_x>^2."""
        return self.n_atoms * self.var_sz / self.mean_sx**2

    @property
    def contrast(self) -> float:
        """Ramsey contrast <S_x> / (N/2)."""
        return self.mean_sx / (self.n_atoms / 2)

    @classmethod
    def from_squeezing(cls, n_atoms, xi2, contrast, var_sy=None, minimum_uncertainty=False):
        """Build a resource from (xi^2, contrast) instead of raw moments.

        With minimum_uncertainty=True the transverse anti-squeezed variance
        is filled in at the Heisenberg-limited value <S_x>^2 / (4 Var(S_z)).
        """
        if not 0.0 < contrast <= 1.0:
            raise ValueError(f"contrast must be in (0, 1], got {contrast}")
        if not xi2 >= 0.0:
            raise ValueError(f"xi2 must be >= 0, got {xi2}")
        mean_sx = contrast * n_atoms / 2
        var_sz = xi2 * mean_sx**2 / n_atoms
        if minimum_uncertainty:
            if var_sy is not None:
                raise ValueError("give either var_sy or minimum_uncertainty, not both")
            if var_sz == 0.0:
                raise ValueError("minimum_uncertainty requires var_sz > 0")
            var_sy = mean_sx**2 / (4 * var_sz)
        return cls(n_atoms=int(n_atoms), var_sz=var_sz, mean_sx=mean_sx, var_sy=var_sy)


@dataclass(frozen=True)
class SensorPartition:
    """Atom numbers and Ramsey contrasts of the individual sensors."""

    atom_counts: tuple
    contrasts: tuple

    def __post_init__(self):
        counts = tuple(int(n) for n in self.atom_counts)
        contrasts = tuple(float(c) for c in self.contrasts)
        object.__setattr__(self, "atom_counts", counts)
        object.__setattr__(self, "contrasts", contrasts)
        if len(counts) < 1:
            raise ValueError("partition needs at least one sensor")
        if len(contrasts) != len(counts):
            raise ValueError(
                f"{len(counts)} atom counts but {len(contrasts)} contrasts"
            )
        if any(n < 1 for n in counts):
            raise ValueError(f"atom counts must be positive, got {counts}")
        # same round-off slack as SqueezedResource.mean_sx: states computed
        # numerically can land at 1 + few ulp.
        if any(not 0.0 < c <= 1.0 + 1e-12 for c in contrasts):
            raise ValueError(f"contrasts must be in (0, 1], got {contrasts}")

    @property
    def m_sensors(self) -> int:
        return len(self.atom_counts)

    @property
    def n_atoms(self) -> int:
        return sum(self.atom_counts)

    @classmethod
    def equal_split(cls, n_atoms, m_sensors, contrast=1.0):
        """Split n_atoms as evenly as integers allow, uniform contrast."""
        base, extra = divmod(int(n_atoms), int(m_sensors))
        counts = tuple(base + (1 if k < extra else 0) for k in range(m_sensors))
        return cls(atom_counts=counts, contrasts=(float(contrast),) * m_sensors)


@dataclass(frozen=True, eq=False)
class MomentModel:
    """Sensor-level second moments and readout response.

    gamma[k, l] = Cov(S_k^z, S_l^z); response = diag(C_k N_k / 2) is the
    derivative of <S_k^z> with respect to the locally imprinted phase;
    pair_cov is the underlying two-atom covariance.
    """

    gamma: np.ndarray
    response: np.ndarray
    pair_cov: float

    @property
    def m_sensors(self) -> int:
        return self.gamma.shape[0]


def pair_covariance(resource: SqueezedResource) -> float:
    """Two-atom covariance Cov(s_i^z, s_j^z) of the symmetric global state.

    Zero for a coherent state (Var(S_z) = N/4); -1/(4(N-1)) in the perfect
    squeezing limit Var(S_z) = 0.
    """
    n = resource.n_atoms
    if n < 2:
        raise ValueError("pair covariance needs at least 2 atoms")
    return (4.0 * resource.var_sz - n) / (4.0 * n * (n - 1))


def partition_covariance(n_atoms, var_total, atom_counts) -> np.ndarray:
    """Covariance matrix of sensor spin components for a symmetric state.

    Generic in the collective component: feed Var(S_z) for the measured
    quadrature or Var(S_y) for the conjugate one.  atom_counts may be real
    valued (idealized equal splits)."""
    if n_atoms < 2:
        raise ValueError("partitioned covariance needs at least 2 atoms")
    counts = np.asarray(atom_counts, dtype=float)
    c = (4.0 * var_total - n_atoms) / (4.0 * n_atoms * (n_atoms - 1))
    gamma = c * np.outer(counts, counts)
    np.fill_diagonal(gamma, counts / 4 + counts * (counts - 1) * c)
    return gamma


def partition_moments(resource: SqueezedResource, partition: SensorPartition) -> MomentModel:
    """Sensor moment model for a resource split according to partition."""
    if partition.n_atoms != resource.n_atoms:
        raise ValueError(
            f"partition holds {partition.n_atoms} atoms but the resource has "
            f"{resource.n_atoms}"
        )
    gamma = partition_covariance(resource.n_atoms, resource.var_sz, partition.atom_counts)
    counts = np.asarray(partition.atom_counts, dtype=float)
    response = np.diag(np.asarray(partition.contrasts) * counts / 2)
    return MomentModel(gamma=gamma, response=response, pair_cov=pair_covariance(resource))


def estimator_covariance(model: MomentModel, mu: int) -> np.ndarray:
    """Large-sample covariance of the per-sensor phase estimators.

    Sigma = (G^T Gamma^-1 G)^-1 / mu with diagonal response G.  Refuses
    ill-conditioned Gamma instead of returning garbage.
    """
    if mu < 1:
        raise ValueError(f"mu must be >= 1, got {mu}")
    eigs = np.linalg.eigvalsh(model.gamma)
    if eigs[0] <= 0 or eigs[-1] / eigs[0] > CONDITION_LIMIT:
        cond = math.inf if eigs[0] <= 0 else eigs[-1] / eigs[0]
        raise NumericalFailure(
            f"sensor covariance matrix is numerically singular (condition number {cond:.3e}, "
            f"smallest eigenvalue {eigs[0]:.3e})"
        )
    d = np.diag(model.response)
    return model.gamma / np.outer(d, d) / mu


def local_gain(resource: SqueezedResource, m_sensors: int) -> float:
    """Per-sensor gain of independent local estimation, Var/Var_SQL.

    Residual entanglement inside each sensor gives at most a factor
    (M-1)/M below the SQL for strong squeezing and large N.
    """
    if m_sensors < 1:
        raise ValueError("m_sensors must be >= 1")
    n = resource.n_atoms
    m = m_sensors
    xi2 = resource.xi2
    sx2 = resource.mean_sx**2
    return (
        xi2 / m
        + n**3 * (m - 1) / (4 * m * (n - 1) * sx2)
        - xi2 * (m - 1) / (m * (n - 1))
    )


def antisqueezed_gain(resource: SqueezedResource) -> float:
    """Gain ratio of the combinations orthogonal to the squeezed one.

    Exceeds 1 whenever xi^2 < 1: squeezing one collective mode necessarily
    inflates the readout noise of the others.
    """
    n = resource.n_atoms
    if n < 2:
        raise ValueError("anti-squeezed gain needs at least 2 atoms")
    return n**3 / (4 * (n - 1) * resource.mean_sx**2) - resource.xi2 / (n - 1)


def joint_gain(resource: SqueezedResource, m_sensors: int, large_n: bool = False) -> float:
    """Gain of jointly estimating all M parameters with sign-configuration
    switching, Var/Var_SQL.

    The exact form is the harmonic combination of one squeezed and M-1
    anti-squeezed readout channels,

        M / (1/xi^2 + (M-1)/g_asq),

    which tends to M xi^2 / (1 + (M-1) C^2 xi^2) for large N.
    """
    if m_sensors < 2:
        raise ValueError("joint estimation needs at least 2 sensors")
    xi2 = resource.xi2
    if xi2 <= 0:
        raise ValueError("joint gain requires xi2 > 0")
    if large_n:
        c2 = resource.contrast**2
        return m_sensors * xi2 / (1 + (m_sensors - 1) * c2 * xi2)
    return m_sensors / (1 / xi2 + (m_sensors - 1) / antisqueezed_gain(resource))
