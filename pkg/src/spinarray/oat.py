"""One-axis-twisting states, exactly, in two independent representations.

The collective (Dicke) basis restricted to the maximal-spin sector holds
the state in N+1 amplitudes and scales to hundreds of atoms.  The product
basis holds all 2^N amplitudes of distinguishable spins and is the ground
truth for everything: sensors are disjoint subsets of atoms, so partitioned
covariance matrices can be computed with no symmetry assumptions at all.

Conventions used everywhere in the package:

  * Dicke amplitudes are ordered by m = -N/2 ... +N/2.
  * Twisting applies the diagonal phase exp(-i * chi_t * m^2) to the
    x-polarized coherent state.
  * rotate_x(state, phi) applies exp(-i phi S_x); expectation values map as
    <S_y> -> <S_y> cos(phi) - <S_z> sin(phi) and
    <S_z> -> <S_z> cos(phi) + <S_y> sin(phi).
  * A phase theta imprinted on a sensor tips its mean spin from +x toward
    +z: <S_k^z> = <S_k^x> sin(theta).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import gammaln

from .moments import SensorPartition, SqueezedResource

BRUTE_FORCE_MAX_ATOMS = 12

# Collective-basis sizes stay small (N+1), so dense operators are fine.


@lru_cache(maxsize=32)
def _collective_operators(n_atoms: int):
    m = np.arange(n_atoms + 1) - n_atoms / 2
    j = n_atoms / 2
    ladder = np.sqrt(j * (j + 1) - m[:-1] * (m[:-1] + 1))
    sp = np.zeros((n_atoms + 1, n_atoms + 1))
    sp[np.arange(1, n_atoms + 1), np.arange(n_atoms)] = ladder
    sx = 0.5 * (sp + sp.T)
    sy = -0.5j * (sp - sp.T)
    sz = np.diag(m)
    for op in (sx, sy, sz):
        op.setflags(write=False)
    return sx, sy, sz


@lru_cache(maxsize=32)
def _sx_eigensystem(n_atoms: int):
    sx, _, _ = _collective_operators(n_atoms)
    w, u = np.linalg.eigh(sx)
    w.setflags(write=False)
    u.setflags(write=False)
    return w, u


def collective_operators(n_atoms: int):
    """Dense S_x, S_y, S_z in the Dicke basis (copies, safe to mutate)."""
    sx, sy, sz = _collective_operators(n_atoms)
    return sx.copy(), sy.copy(), sz.copy()


@dataclass(frozen=True, eq=False)
class OATState:
    """Collective-basis state after twisting and an optional x-rotation."""

    n_atoms: int
    twist_phase: float
    rotation_x: float
    amplitudes: np.ndarray

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=complex)
        object.__setattr__(self, "amplitudes", amp)
        if amp.shape != (self.n_atoms + 1,):
            raise ValueError(
                f"expected {self.n_atoms + 1} amplitudes, got shape {amp.shape}"
            )
        norm = np.sum(np.abs(amp) ** 2)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"state not normalized: |psi|^2 = {norm!r}")


@dataclass(frozen=True)
class CollectiveMoments:
    mean_sx: float
    mean_sy: float
    mean_sz: float
    var_sx: float
    var_sy: float
    var_sz: float
    cov_yz: float
    xi2: float


def css_amplitudes(n_atoms: int) -> np.ndarray:
    """x-polarized coherent spin state: sqrt(binom(N, k)) / 2^(N/2)."""
    k = np.arange(n_atoms + 1)
    logc = 0.5 * (
        gammaln(n_atoms + 1) - gammaln(k + 1) - gammaln(n_atoms - k + 1)
    ) - n_atoms / 2 * np.log(2.0)
    amp = np.exp(logc)
    return (amp / np.sqrt(np.sum(amp**2))).astype(complex)


def evolve_oat(n_atoms: int, twist_phase: float) -> OATState:
    """Twist the x-polarized coherent state: exp(-i chi_t S_z^2) |CSS_x>."""
    if n_atoms < 2:
        raise ValueError("twisting needs at least 2 atoms")
    if twist_phase < 0:
        raise ValueError("twist_phase must be >= 0")
    m = np.arange(n_atoms + 1) - n_atoms / 2
    amp = css_amplitudes(n_atoms) * np.exp(-1j * twist_phase * m**2)
    return OATState(n_atoms=n_atoms, twist_phase=twist_phase, rotation_x=0.0, amplitudes=amp)


def rotate_x(state: OATState, phi: float) -> OATState:
    """Apply exp(-i phi S_x); the input state is left untouched."""
    w, u = _sx_eigensystem(state.n_atoms)
    amp = u @ (np.exp(-1j * phi * w) * (u.conj().T @ state.amplitudes))
    return OATState(
        n_atoms=state.n_atoms,
        twist_phase=state.twist_phase,
        rotation_x=state.rotation_x + phi,
        amplitudes=amp,
    )


def collective_moments(state: OATState) -> CollectiveMoments:
    """First and second moments of the collective spin components."""
    sx, sy, sz = _collective_operators(state.n_atoms)
    psi = state.amplitudes
    x_psi, y_psi, z_psi = sx @ psi, sy @ psi, sz @ psi
    mx = np.real(np.vdot(psi, x_psi))
    my = np.real(np.vdot(psi, y_psi))
    mz = np.real(np.vdot(psi, z_psi))
    vx = np.real(np.vdot(x_psi, x_psi)) - mx**2
    vy = np.real(np.vdot(y_psi, y_psi)) - my**2
    vz = np.real(np.vdot(z_psi, z_psi)) - mz**2
    # Re<S_y S_z> is the symmetrized second moment of the two quadratures.
    cyz = np.real(np.vdot(y_psi, z_psi)) - my * mz
    xi2 = state.n_atoms * vz / mx**2 if mx != 0 else np.inf
    return CollectiveMoments(
        mean_sx=mx, mean_sy=my, mean_sz=mz,
        var_sx=vx, var_sy=vy, var_sz=vz, cov_yz=cyz, xi2=xi2,
    )


def optimal_rotation(state: OATState) -> float:
    """Angle about x that minimizes Var(S_z) of the rotated state.

    Var of the rotated component is a quadratic form in (S_y, S_z), so the
    minimizer follows from the 2x2 transverse covariance block in closed
    form; 0 by convention when the transverse noise is isotropic.
    """
    mom = collective_moments(state)
    a = (mom.var_sz - mom.var_sy) / 2
    b = mom.cov_yz
    # isotropic transverse noise up to round-off: any angle works, pick 0
    if np.hypot(a, b) <= 1e-12 * (mom.var_sz + mom.var_sy):
        return 0.0
    return 0.5 * np.arctan2(-b, -a)


def aligned_oat_state(n_atoms: int, twist_phase: float) -> OATState:
    """Twisted state rotated so the squeezed quadrature sits along z."""
    state = evolve_oat(n_atoms, twist_phase)
    return rotate_x(state, optimal_rotation(state))


def resource_from_state(state: OATState) -> SqueezedResource:
    """Package the state's global moments for the analytic machinery."""
    mom = collective_moments(state)
    return SqueezedResource(
        n_atoms=state.n_atoms, var_sz=mom.var_sz, mean_sx=mom.mean_sx, var_sy=mom.var_sy
    )


def minimal_transverse_variance(n_atoms: int, twist_phase: float) -> float:
    """Var(S_z) after the optimal x-rotation, without building the rotation.

    Equals the smaller eigenvalue of the transverse covariance block."""
    mom = collective_moments(evolve_oat(n_atoms, twist_phase))
    half_sum = (mom.var_sy + mom.var_sz) / 2
    half_diff = (mom.var_sy - mom.var_sz) / 2
    return half_sum - np.hypot(half_diff, mom.cov_yz)


def best_squeezing(n_atoms: int, tol: float = 1e-6):
    """Locate the twisting phase with minimal xi^2.

    Coarse grid over the squeezing window followed by bounded refinement.
    Returns (chi_t, xi2).
    """

    def xi2_at(chi_t):
        mom = collective_moments(evolve_oat(n_atoms, chi_t))
        half_sum = (mom.var_sy + mom.var_sz) / 2
        half_diff = (mom.var_sy - mom.var_sz) / 2
        vmin = half_sum - np.hypot(half_diff, mom.cov_yz)
        return n_atoms * vmin / mom.mean_sx**2

    upper = 3.0 * n_atoms ** (-2.0 / 3.0)
    grid = np.linspace(upper / 80, upper, 80)
    coarse = [xi2_at(t) for t in grid]
    i = int(np.argmin(coarse))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    res = minimize_scalar(xi2_at, bounds=(lo, hi), method="bounded", options={"xatol": tol})
    return float(res.x), float(res.fun)


# ---------------------------------------------------------------------------
# Product-basis brute force (distinguishable spins, 2^N amplitudes)
# ---------------------------------------------------------------------------

# Basis index bit i: 0 = spin up (s_z = +1/2), 1 = spin down (s_z = -1/2).


def _check_brute_size(n_atoms: int):
    if n_atoms > BRUTE_FORCE_MAX_ATOMS:
        raise ValueError(
            f"product-basis brute force limited to {BRUTE_FORCE_MAX_ATOMS} atoms, "
            f"got {n_atoms}"
        )
    if n_atoms < 2:
        raise ValueError("need at least 2 atoms")


def _atom_sz_values(n_atoms: int) -> np.ndarray:
    """(n_atoms, 2^N) array of single-atom s_z eigenvalues per basis state."""
    idx = np.arange(2**n_atoms)
    return np.stack([0.5 - ((idx >> i) & 1) for i in range(n_atoms)])


def _apply_single_qubit(psi: np.ndarray, n_atoms: int, atom: int, mat: np.ndarray) -> np.ndarray:
    """Apply a 2x2 operator to one atom of a 2^N state vector.

    Atom i owns bit i of the flat index (least significant first), the
    same convention as _atom_sz_values."""
    shaped = psi.reshape(2 ** (n_atoms - 1 - atom), 2, 2**atom)
    return np.einsum("ab,ibj->iaj", mat, shaped).reshape(-1)


_SY = 0.5 * np.array([[0.0, -1.0j], [1.0j, 0.0]])
_SX = 0.5 * np.array([[0.0, 1.0], [1.0, 0.0]])


def product_state(n_atoms: int, twist_phase: float, rotation_x: float) -> np.ndarray:
    """Twisted and x-rotated state of N distinguishable spins."""
    _check_brute_size(n_atoms)
    psi = np.full(2**n_atoms, 2.0 ** (-n_atoms / 2), dtype=complex)
    m = _atom_sz_values(n_atoms).sum(axis=0)
    psi = psi * np.exp(-1j * twist_phase * m**2)
    if rotation_x != 0.0:
        half = rotation_x / 2
        u = np.array(
            [[np.cos(half), -1j * np.sin(half)], [-1j * np.sin(half), np.cos(half)]]
        )
        for atom in range(n_atoms):
            psi = _apply_single_qubit(psi, n_atoms, atom, u)
    return psi


def _sensor_slices(atom_counts):
    slices = []
    start = 0
    for n_k in atom_counts:
        slices.append(range(start, start + n_k))
        start += n_k
    return slices


@dataclass(frozen=True, eq=False)
class BruteForceMoments:
    """Exact per-sensor moments from the 2^N product basis."""

    gamma_z: np.ndarray   # Cov(S_k^z, S_l^z)
    gamma_y: np.ndarray   # Cov(S_k^y, S_l^y)
    mean_sx: np.ndarray   # <S_k^x> per sensor
    global_var_sz: float
    global_var_sy: float
    global_mean_sx: float


def brute_force_sensor_moments(
    n_atoms: int, twist_phase: float, rotation_x: float, atom_counts
) -> BruteForceMoments:
    """All sensor-level moments needed to cross-check the analytic model."""
    _check_brute_size(n_atoms)
    counts = tuple(int(n) for n in atom_counts)
    if sum(counts) != n_atoms:
        raise ValueError(f"atom counts {counts} do not sum to {n_atoms}")
    psi = product_state(n_atoms, twist_phase, rotation_x)
    prob = np.abs(psi) ** 2
    prob /= prob.sum()
    sz_atom = _atom_sz_values(n_atoms)
    slices = _sensor_slices(counts)
    m = len(counts)

    # z components are diagonal: plain weighted sums.
    z_vals = np.stack([sz_atom[list(s)].sum(axis=0) for s in slices])
    z_mean = z_vals @ prob
    gamma_z = (z_vals * prob) @ z_vals.T - np.outer(z_mean, z_mean)

    # y components need one operator application per sensor.
    y_psi = []
    x_mean = np.zeros(m)
    for k, atoms in enumerate(slices):
        acc = np.zeros_like(psi)
        for atom in atoms:
            acc += _apply_single_qubit(psi, n_atoms, atom, _SY)
            x_mean[k] += np.real(
                np.vdot(psi, _apply_single_qubit(psi, n_atoms, atom, _SX))
            )
        y_psi.append(acc)
    y_mean = np.array([np.real(np.vdot(psi, yp)) for yp in y_psi])
    gram = np.zeros((m, m))
    for k in range(m):
        for l in range(k, m):
            gram[k, l] = gram[l, k] = np.real(np.vdot(y_psi[k], y_psi[l]))
    gamma_y = gram - np.outer(y_mean, y_mean)

    ones = np.ones(m)
    return BruteForceMoments(
        gamma_z=gamma_z,
        gamma_y=gamma_y,
        mean_sx=x_mean,
        global_var_sz=float(ones @ gamma_z @ ones),
        global_var_sy=float(ones @ gamma_y @ ones),
        global_mean_sx=float(x_mean.sum()),
    )


def brute_force_partition_moments(
    n_atoms: int, twist_phase: float, rotation_x: float, partition: SensorPartition
) -> np.ndarray:
    """Exact Cov(S_k^z, S_l^z) with sensors as disjoint atom subsets."""
    if partition.n_atoms != n_atoms:
        raise ValueError(
            f"partition holds {partition.n_atoms} atoms, expected {n_atoms}"
        )
    return brute_force_sensor_moments(
        n_atoms, twist_phase, rotation_x, partition.atom_counts
    ).gamma_z
