"""Measurement schedules and resource allocation for sensor arrays.

A sign configuration epsilon in {-1, +1}^M says which sensors receive a
pi rotation before the phases are imprinted; it moves the squeezed
collective mode onto the combination sum(eps_k theta_k).  Complete
schedules come from Sylvester Hadamard matrices, truncated column-wise
when M is not a power of two (M = 3 needs the four rows of H_4).

Atom and repetition allocations for a target linear combination follow
the Cauchy-Schwarz-saturating proportionality to |c_k|, rounded to
integers by the largest-remainder rule so totals are conserved exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasiblePlanError
from .moments import SensorPartition

MAX_HADAMARD_EXPONENT = 10

# Coefficients this far below the largest one are treated as exact zeros
# (mixing angles like 90 degrees produce cos(pi/2) ~ 6e-17, not 0.0).
ZERO_COEFF_RTOL = 1e-12


@dataclass(frozen=True)
class SignConfiguration:
    """Per-sensor sign pattern; -1 marks a pi-rotated sensor."""

    signs: tuple

    def __post_init__(self):
        signs = tuple(int(s) for s in self.signs)
        object.__setattr__(self, "signs", signs)
        if len(signs) < 1:
            raise ValueError("a configuration needs at least one sensor")
        if any(s not in (-1, 1) for s in signs):
            raise ValueError(f"signs must be +-1, got {signs}")

    @property
    def m_sensors(self) -> int:
        return len(self.signs)

    def label(self) -> str:
        return "".join("+" if s > 0 else "-" for s in self.signs)


@dataclass(frozen=True)
class ConfigurationPlan:
    """Ordered configurations with their repetition counts."""

    entries: tuple

    def __post_init__(self):
        entries = tuple((cfg, int(reps)) for cfg, reps in self.entries)
        object.__setattr__(self, "entries", entries)
        if len(entries) < 1:
            raise ValueError("a plan needs at least one configuration")
        widths = {cfg.m_sensors for cfg, _ in entries}
        if len(widths) != 1:
            raise ValueError(f"configurations disagree on sensor count: {widths}")
        if any(reps < 1 for _, reps in entries):
            raise ValueError("every configuration needs at least one repetition")

    @property
    def m_sensors(self) -> int:
        return self.entries[0][0].m_sensors

    @property
    def n_configs(self) -> int:
        return len(self.entries)

    @property
    def total_reps(self) -> int:
        return sum(reps for _, reps in self.entries)

    @property
    def reps(self) -> tuple:
        return tuple(reps for _, reps in self.entries)

    def sign_matrix(self) -> np.ndarray:
        return np.array([cfg.signs for cfg, _ in self.entries], dtype=int)


@dataclass(frozen=True)
class LinearCombination:
    """Target combination sum(c_k theta_k); M=2 supports a mixing angle."""

    coeffs: tuple

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coeffs)
        object.__setattr__(self, "coeffs", coeffs)
        if len(coeffs) < 1:
            raise ValueError("a combination needs at least one coefficient")
        if all(c == 0.0 for c in coeffs):
            raise ValueError("at least one coefficient must be nonzero")

    @property
    def m_sensors(self) -> int:
        return len(self.coeffs)

    @classmethod
    def from_mixing_angle(cls, alpha: float):
        """Two-sensor combination cos(alpha) theta_1 + sin(alpha) theta_2."""
        return cls(coeffs=(np.cos(alpha), np.sin(alpha)))

    @property
    def mixing_angle(self) -> float:
        if self.m_sensors != 2:
            raise ValueError("mixing angle is defined for two sensors only")
        return float(np.arctan2(self.coeffs[1], self.coeffs[0]))


def _nonzero_mask(coeffs: np.ndarray) -> np.ndarray:
    return np.abs(coeffs) > ZERO_COEFF_RTOL * np.max(np.abs(coeffs))


def sylvester_hadamard(order_exponent: int) -> np.ndarray:
    """Sylvester Hadamard matrix of size 2^p with all-plus first row/column."""
    if order_exponent < 0:
        raise ValueError("order exponent must be >= 0")
    if order_exponent > MAX_HADAMARD_EXPONENT:
        raise ValueError(
            f"order exponent limited to {MAX_HADAMARD_EXPONENT}, got {order_exponent}"
        )
    h = np.array([[1]], dtype=int)
    for _ in range(order_exponent):
        h = np.block([[h, h], [h, -h]])
    return h


def configuration_set(m_sensors: int) -> list:
    """Sign configurations that jointly cover M parameters.

    For M = 2^p these are the M rows of the Sylvester matrix; otherwise all
    rows of the next larger Sylvester matrix with trailing columns dropped
    (exact duplicate rows would be removed, but none arise for minimal p).
    """
    if m_sensors < 1:
        raise ValueError("m_sensors must be >= 1")
    p = int(np.ceil(np.log2(m_sensors))) if m_sensors > 1 else 0
    h = sylvester_hadamard(p)
    rows = h[:, :m_sensors]
    seen = set()
    configs = []
    for row in rows:
        key = tuple(int(v) for v in row)
        if key in seen:
            continue
        seen.add(key)
        configs.append(SignConfiguration(signs=key))
    return configs


def largest_remainder_round(targets, total: int) -> np.ndarray:
    """Round non-negative targets to integers summing exactly to total.

    Floor first, then hand the leftover units to the largest fractional
    remainders (ties broken by index)."""
    targets = np.asarray(targets, dtype=float)
    if np.any(targets < 0):
        raise ValueError("targets must be non-negative")
    floors = np.floor(targets).astype(int)
    leftover = int(total) - int(floors.sum())
    if leftover < 0:
        raise ValueError("targets already exceed the total")
    remainders = targets - floors
    order = np.argsort(-remainders, kind="stable")
    floors[order[:leftover]] += 1
    return floors


def hadamard_plan(m_sensors: int, total_reps: int) -> ConfigurationPlan:
    """Complete configuration schedule with near-equal repetition split."""
    configs = configuration_set(m_sensors)
    if total_reps < len(configs):
        raise InfeasiblePlanError(
            f"{total_reps} repetitions cannot cover {len(configs)} configurations"
        )
    reps = largest_remainder_round(
        np.full(len(configs), total_reps / len(configs)), total_reps
    )
    return ConfigurationPlan(entries=tuple(zip(configs, (int(r) for r in reps))))


def single_configuration_plan(signs, total_reps: int) -> ConfigurationPlan:
    cfg = signs if isinstance(signs, SignConfiguration) else SignConfiguration(tuple(signs))
    return ConfigurationPlan(entries=((cfg, int(total_reps)),))


def allocate_atoms(combination: LinearCombination, n_atoms: int) -> tuple:
    """Atom numbers proportional to |c_k|, conserving the total exactly.

    Sensors with c_k = 0 get no atoms and are excluded from readout.
    Raises InfeasiblePlanError when a nonzero coefficient would round to
    an empty sensor.
    """
    coeffs = np.asarray(combination.coeffs, dtype=float)
    mask = _nonzero_mask(coeffs)
    weights = np.where(mask, np.abs(coeffs), 0.0)
    targets = n_atoms * weights / weights.sum()
    counts = largest_remainder_round(targets, n_atoms)
    starved = mask & (counts == 0)
    if np.any(starved):
        raise InfeasiblePlanError(
            f"{n_atoms} atoms are too few: sensors {np.nonzero(starved)[0].tolist()} "
            "have nonzero coefficients but would receive no atoms"
        )
    return tuple(int(n) for n in counts)


def combination_from_partition(partition: SensorPartition, signs) -> LinearCombination:
    """Combination measured by a global readout of a given split.

    Coefficients eps_k N_k, reported with unit Euclidean norm."""
    cfg = signs if isinstance(signs, SignConfiguration) else SignConfiguration(tuple(signs))
    if cfg.m_sensors != partition.m_sensors:
        raise ValueError("sign pattern and partition disagree on sensor count")
    raw = np.asarray(cfg.signs, dtype=float) * np.asarray(partition.atom_counts, dtype=float)
    return LinearCombination(coeffs=tuple(raw / np.linalg.norm(raw)))


def css_allocation(combination: LinearCombination, mu: int, n_atoms: int) -> np.ndarray:
    """Independent-atom resources mu_k N_k that attain the combination SQL.

    Returns the real-valued Cauchy-Schwarz-saturating weights B |c_k| with
    B = mu N / sum|c_j|."""
    coeffs = np.asarray(combination.coeffs, dtype=float)
    mask = _nonzero_mask(coeffs)
    if mu * n_atoms < int(mask.sum()):
        raise InfeasiblePlanError(
            f"mu*N = {mu * n_atoms} cannot serve {int(mask.sum())} sensors"
        )
    weights = np.where(mask, np.abs(coeffs), 0.0)
    return mu * n_atoms * weights / weights.sum()


def scanning_allocation(combination: LinearCombination, mu: int) -> tuple:
    """Repetitions per parameter for the scan-one-at-a-time strategy.

    mu_k proportional to |c_k|, integerized by largest remainder; every
    nonzero coefficient keeps at least one repetition because the strategy
    must visit every parameter it combines."""
    coeffs = np.asarray(combination.coeffs, dtype=float)
    mask = _nonzero_mask(coeffs)
    needed = int(mask.sum())
    if mu < needed:
        raise InfeasiblePlanError(
            f"scanning needs at least {needed} preparations, got {mu}"
        )
    weights = np.where(mask, np.abs(coeffs), 0.0)
    reps = largest_remainder_round(mu * weights / weights.sum(), mu)
    starved = np.nonzero(mask & (reps == 0))[0]
    for k in starved:
        donor = int(np.argmax(reps))
        reps[donor] -= 1
        reps[k] += 1
    return tuple(int(r) for r in reps)


def combination_sql(combination: LinearCombination, mu: int, n_atoms: int) -> float:
    """Best coherent-state variance for the combination, (sum|c|)^2 / (mu N)."""
    total = np.sum(np.abs(np.asarray(combination.coeffs, dtype=float)))
    return float(total**2 / (mu * n_atoms))
