"""Joint multiparameter estimation with arrays of entangled
collective-spin sensors: analytic gain formulas, Monte Carlo protocol
simulation, estimator fusion, and Cramer-Rao bound checks anchored to an
exact small-system oracle."""

from .bounds import CRBCheck, FisherSpectrum, crb_check, fisher_matrix, harmonic_mean
from .errors import InfeasiblePlanError, NumericalFailure, ScenarioError, SpinArrayError
from .estimator import (
    EstimationReport,
    ShotSet,
    dof_error,
    fuse_alpha,
    fuse_combination,
    general_weights,
    local_estimate,
    quantum_gain,
    weight_alpha,
)
from .moments import (
    MomentModel,
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
from .oat import (
    OATState,
    best_squeezing,
    brute_force_partition_moments,
    collective_moments,
    evolve_oat,
    optimal_rotation,
    rotate_x,
)
from .protocol import (
    ConfigurationPlan,
    LinearCombination,
    SignConfiguration,
    allocate_atoms,
    combination_from_partition,
    combination_sql,
    configuration_set,
    css_allocation,
    hadamard_plan,
    scanning_allocation,
    sylvester_hadamard,
)
from .simulate import (
    ScenarioSpec,
    configuration_gain_matrix,
    convergence_study,
    run_protocol,
    sample_shots,
    sweep_mixing_angle,
)

__version__ = "0.1.0"
