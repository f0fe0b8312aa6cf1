"""
This module defines the truncated joint Hilbert space of one qubit and one
cavity mode, together with the states and elementary operators used by the
engines.

Basis layout: index = qubit_index * (n_max + 1) + photon_number, where
qubit_index 0 is the excited state |+> and 1 is the ground state |->.
Each qubit level therefore owns a contiguous block of Fock amplitudes, which
keeps partial traces and ladder operators simple reshapes.
"""
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import gammaln
from scipy.stats import poisson

from ..core.errors import DimensionMismatch, TruncationOverflow

# Default tolerance on the Poisson norm lost beyond n_max.
LEAK_TOL = 1e-9


class ElementaryOp(str, Enum):
    """
    Enumeration of the elementary operators acting on the joint space.
    """
    ANNIHILATE = "annihilate"
    CREATE = "create"
    NUMBER = "number"
    SIGMA_MINUS = "sigma_minus"
    SIGMA_PLUS = "sigma_plus"
    SIGMA_Z = "sigma_z"


@dataclass(frozen=True)
class Truncation:
    """
    Truncation of the cavity Fock space.

    Attributes:
        n_max (int): Largest retained photon number.
    """
    n_max: int

    def __post_init__(self):
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ValueError(f"n_max must be an integer >= 1, got {self.n_max}")

    @property
    def levels(self) -> int:
        """int: Number of retained Fock levels, n_max + 1."""
        return self.n_max + 1

    @property
    def dim(self) -> int:
        """int: Dimension of the joint qubit x field space."""
        return 2 * self.levels

    @classmethod
    def for_nbar(cls, nbar: float, sigmas: float = 6.0, margin: int = 2) -> "Truncation":
        """
        Chooses n_max = ceil(n̄ + sigmas*sqrt(n̄)) + margin.

        Args:
            nbar (float): Mean photon number of the initial field.
            sigmas (float): Number of Poisson standard deviations to keep.
            margin (int): Extra levels above the tail bound.

        Returns:
            Truncation: The default truncation for this photon number.
        """
        return cls(max(1, int(np.ceil(nbar + sigmas * np.sqrt(nbar))) + margin))


@dataclass(frozen=True, eq=False)
class JointState:
    """
    A (possibly unnormalized) state vector on the joint space.

    Attributes:
        amplitudes (np.ndarray): Complex amplitudes of length 2*(n_max+1).
        truncation (Truncation): The truncation the state lives on.
        leakage (float): Norm lost beyond n_max when the state was built or
                         when a creation operator pushed amplitude off the top level.
    """
    amplitudes: np.ndarray
    truncation: Truncation
    leakage: float = 0.0

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex)
        if amps.shape != (self.truncation.dim,):
            raise DimensionMismatch(
                f"expected {self.truncation.dim} amplitudes for n_max={self.truncation.n_max}, got {amps.shape}"
            )
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def norm2(self) -> float:
        """float: The squared norm <psi|psi>."""
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def blocks(self) -> np.ndarray:
        """
        Returns the amplitudes as a (2, n_max+1) view: row 0 is |+>, row 1 is |->.
        """
        return self.amplitudes.reshape(2, self.truncation.levels)

    def normalized(self) -> "JointState":
        """Returns the state scaled to unit norm."""
        return JointState(self.amplitudes / np.sqrt(self.norm2), self.truncation, self.leakage)

    @classmethod
    def from_blocks(cls, plus: np.ndarray, minus: np.ndarray, truncation: Truncation,
                    leakage: float = 0.0) -> "JointState":
        """
        Builds a state from its |+> and |-> field components.

        Args:
            plus (np.ndarray): Field amplitudes multiplying |+>.
            minus (np.ndarray): Field amplitudes multiplying |->.
            truncation (Truncation): The truncation.
            leakage (float): Norm lost beyond the truncation.
        """
        return cls(np.concatenate([plus, minus]), truncation, leakage)

    @classmethod
    def basis(cls, qubit: int, photons: int, truncation: Truncation) -> "JointState":
        """
        Builds the product basis state |qubit, photons> (qubit 0 = |+>, 1 = |->).
        """
        amps = np.zeros(truncation.dim, dtype=complex)
        amps[qubit * truncation.levels + photons] = 1.0
        return cls(amps, truncation)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """
    A density operator on the joint space.

    Attributes:
        entries (np.ndarray): Complex matrix of shape (dim, dim).
        truncation (Truncation): The truncation the operator lives on.
    """
    entries: np.ndarray
    truncation: Truncation

    def __post_init__(self):
        rho = np.array(self.entries, dtype=complex)
        dim = self.truncation.dim
        if rho.shape != (dim, dim):
            raise DimensionMismatch(f"expected a {dim}x{dim} matrix, got {rho.shape}")
        rho.setflags(write=False)
        object.__setattr__(self, "entries", rho)

    @property
    def trace(self) -> complex:
        """complex: Tr(rho)."""
        return complex(np.trace(self.entries))

    def hermiticity_error(self) -> float:
        """float: max |rho - rho^dagger|."""
        return float(np.max(np.abs(self.entries - self.entries.conj().T)))

    def min_eigenvalue(self) -> float:
        """float: Smallest eigenvalue of the Hermitian part."""
        herm = 0.5 * (self.entries + self.entries.conj().T)
        return float(np.linalg.eigvalsh(herm)[0])

    def is_physical(self, tol_herm: float = 1e-10, tol_trace: float = 1e-8,
                    tol_pos: float = 1e-8) -> bool:
        """
        Checks Hermiticity, unit trace and positivity within tolerances.
        """
        return (
            self.hermiticity_error() < tol_herm
            and abs(self.trace - 1.0) < tol_trace
            and self.min_eigenvalue() >= -tol_pos
        )


@dataclass(frozen=True)
class GBParams:
    """
    Parameters of a generalized Gea-Banacloche state.

    Attributes:
        sign (int): Branch index m, +1 or -1.
        theta (float): Rotation angle (g*t for free resonant evolution).
        nbar (float): Mean photon number of the underlying coherent field.
    """
    sign: int
    theta: float
    nbar: float

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValueError(f"sign must be +1 or -1, got {self.sign}")
        if not self.nbar > 0:
            raise ValueError(f"nbar must be positive, got {self.nbar}")


def _check_guard(nbar: float, trunc: Truncation, strict: bool):
    if strict and nbar > trunc.n_max / 4:
        raise TruncationOverflow(
            f"|alpha|^2 = {nbar:g} exceeds n_max/4 = {trunc.n_max / 4:g}; "
            "raise n_max or pass strict=False",
            n_max=trunc.n_max,
        )


def _check_leakage(leakage: float, trunc: Truncation, leak_tol: float):
    if leakage > leak_tol:
        raise TruncationOverflow(
            f"norm leakage {leakage:.3e} beyond n_max={trunc.n_max} exceeds {leak_tol:.1e}",
            leakage=leakage,
            n_max=trunc.n_max,
        )


def _poisson_amplitudes(nbar: float, count: int) -> np.ndarray:
    """Real amplitudes sqrt(Poisson(nbar)) for k = 0..count-1, unnormalized."""
    k = np.arange(count)
    if nbar == 0:
        return (k == 0).astype(float)
    return np.exp(-0.5 * nbar + 0.5 * k * np.log(nbar) - 0.5 * gammaln(k + 1))


def coherent_state(alpha: complex, trunc: Truncation, leak_tol: float = LEAK_TOL,
                   strict: bool = True) -> tuple[np.ndarray, float]:
    """
    Builds the coherent field |alpha> on the truncated Fock space.

    Args:
        alpha (complex): Coherent amplitude.
        trunc (Truncation): The truncation.
        leak_tol (float): Largest norm allowed beyond n_max.
        strict (bool): Enforce the |alpha|^2 <= n_max/4 guard.

    Returns:
        tuple[np.ndarray, float]: The renormalized field vector of length n_max+1
                                  and the norm leakage 1 - sum_k |c_k|^2.

    Raises:
        TruncationOverflow: If the guard or the leakage tolerance is violated.
    """
    nbar = abs(alpha) ** 2
    _check_guard(nbar, trunc, strict)
    leakage = float(poisson.sf(trunc.n_max, nbar)) if nbar > 0 else 0.0
    _check_leakage(leakage, trunc, leak_tol)
    vec = _poisson_amplitudes(nbar, trunc.levels).astype(complex)
    vec *= np.exp(1j * np.angle(alpha) * np.arange(trunc.levels))
    return vec / np.linalg.norm(vec), leakage


def coherent_kets(alphas, trunc: Truncation) -> np.ndarray:
    """
    Builds many coherent fields at once, each renormalized on the truncation.

    No guard or leakage check is applied; callers check the largest amplitude
    with :func:`coherent_state`.

    Args:
        alphas (array_like): Coherent amplitudes.
        trunc (Truncation): The truncation.

    Returns:
        np.ndarray: A (len(alphas), n_max+1) array, one field per row.
    """
    alphas = np.atleast_1d(np.asarray(alphas, dtype=complex))
    k = np.arange(trunc.levels)
    mag = np.abs(alphas)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        log_amp = np.where(mag > 0, k * np.log(mag) - 0.5 * gammaln(k + 1), np.where(k == 0, 0.0, -np.inf))
    kets = np.exp(log_amp) * np.exp(1j * np.angle(alphas)[:, None] * k)
    return kets / np.linalg.norm(kets, axis=1, keepdims=True)


def gb_basis_state(p: int, sign: int, trunc: Truncation) -> JointState:
    """
    Builds |X_±^(p)> = (|+,p> ± |-,p+1>)/sqrt(2), the resonant dressed states.
    """
    if not 0 <= p < trunc.n_max:
        raise DimensionMismatch(f"|X^({p})> needs p+1 <= n_max = {trunc.n_max}")
    amps = np.zeros(trunc.dim, dtype=complex)
    amps[p] = 1 / np.sqrt(2)
    amps[trunc.levels + p + 1] = sign / np.sqrt(2)
    return JointState(amps, trunc)


def gea_banacloche_state(p: GBParams, trunc: Truncation, leak_tol: float = LEAK_TOL,
                         strict: bool = True) -> JointState:
    """
    Builds the generalized Gea-Banacloche state |Psi_±^X(theta)>.

    The sum over dressed doublets p runs up to n_max - 1 (the partner |-,p+1>
    must exist) and the result is renormalized over the truncation.

    Args:
        p (GBParams): Branch sign, angle and mean photon number.
        trunc (Truncation): The truncation.
        leak_tol (float): Largest norm allowed beyond the retained doublets.
        strict (bool): Enforce the n̄ <= n_max/4 guard.

    Returns:
        JointState: The normalized state, with its leakage recorded.
    """
    _check_guard(p.nbar, trunc, strict)
    leakage = float(poisson.sf(trunc.n_max - 1, p.nbar))
    _check_leakage(leakage, trunc, leak_tol)
    doublets = np.arange(trunc.n_max)
    coeffs = _poisson_amplitudes(p.nbar, trunc.n_max) * np.exp(
        -1j * p.sign * p.theta * np.sqrt(doublets + 1) / 2
    ) / np.sqrt(2)
    plus = np.zeros(trunc.levels, dtype=complex)
    minus = np.zeros(trunc.levels, dtype=complex)
    plus[:-1] = coeffs
    minus[1:] = p.sign * coeffs
    return JointState.from_blocks(plus, minus, trunc, leakage).normalized()


def atomic_polarization(sign: int, angle: float) -> np.ndarray:
    """
    Qubit polarization |D_±> = (±e^{∓i angle}|+> + |->)/sqrt(2).

    Returns:
        np.ndarray: The (|+>, |->) amplitudes.
    """
    return np.array([sign * np.exp(-1j * sign * angle), 1.0]) / np.sqrt(2)


def gb_field_state(p: GBParams, trunc: Truncation, leak_tol: float = LEAK_TOL,
                   strict: bool = True) -> np.ndarray:
    """
    Field component |psi_±(theta)> of the factorized Gea-Banacloche state,
    e^{±i theta sqrt(n̄)/2} sum_k c_k e^{∓i theta sqrt(k)/2} |k>, renormalized.
    """
    field, _ = coherent_state(np.sqrt(p.nbar), trunc, leak_tol, strict)
    k = np.arange(trunc.levels)
    return field * np.exp(1j * p.sign * p.theta * (np.sqrt(p.nbar) - np.sqrt(k)) / 2)


def factorized_gb_state(p: GBParams, trunc: Truncation, leak_tol: float = LEAK_TOL,
                        strict: bool = True) -> JointState:
    """
    Builds the mesoscopic approximation e^{∓i theta sqrt(n̄)/2} |D_±> ⊗ |psi_±(theta)>.

    The polarization angle is the Fresnel angle theta/(4 sqrt(n̄)) of the field
    branch, and the overall sign m keeps the relative phase of the two
    branches identical to :func:`gea_banacloche_state`, so that sums of
    branches approximate sums of exact states.

    Returns:
        JointState: The normalized product state.
    """
    field = gb_field_state(p, trunc, leak_tol, strict)
    qubit = atomic_polarization(p.sign, p.theta / (4 * np.sqrt(p.nbar)))
    phase = p.sign * np.exp(-1j * p.sign * p.theta * np.sqrt(p.nbar) / 2)
    leakage = float(poisson.sf(trunc.n_max, p.nbar))
    return JointState(phase * np.kron(qubit, field), trunc, leakage).normalized()


def fresnel_angle(field: np.ndarray) -> float:
    """
    Phase of <a> for a field vector, i.e. its angle in the Fresnel plane.
    """
    k = np.arange(1, len(field))
    return float(np.angle(np.vdot(field[:-1], np.sqrt(k) * field[1:])))


def elementary_matrix(op: ElementaryOp | str, trunc: Truncation) -> np.ndarray:
    """
    Dense matrix of an elementary operator in the joint basis layout.

    Args:
        op (ElementaryOp | str): The operator kind.
        trunc (Truncation): The truncation.

    Returns:
        np.ndarray: A (dim, dim) complex matrix.
    """
    op = ElementaryOp(op)
    levels = trunc.levels
    eye_q = np.eye(2)
    eye_f = np.eye(levels)
    a = np.diag(np.sqrt(np.arange(1, levels)), 1)
    if op == ElementaryOp.ANNIHILATE:
        mat = np.kron(eye_q, a)
    elif op == ElementaryOp.CREATE:
        mat = np.kron(eye_q, a.T)
    elif op == ElementaryOp.NUMBER:
        mat = np.kron(eye_q, np.diag(np.arange(levels, dtype=float)))
    elif op == ElementaryOp.SIGMA_MINUS:
        mat = np.kron(np.array([[0.0, 0.0], [1.0, 0.0]]), eye_f)
    elif op == ElementaryOp.SIGMA_PLUS:
        mat = np.kron(np.array([[0.0, 1.0], [0.0, 0.0]]), eye_f)
    else:
        mat = np.kron(np.diag([1.0, -1.0]), eye_f)
    return mat.astype(complex)


def apply_elementary(op: ElementaryOp | str, s: JointState) -> JointState:
    """
    Applies an elementary operator to a state.

    ``create`` drops the amplitude sitting on Fock level n_max; the dropped
    squared norm is added to the result's ``leakage`` instead of raising.

    Args:
        op (ElementaryOp | str): The operator kind.
        s (JointState): The input state.

    Returns:
        JointState: The transformed (unnormalized) state.
    """
    op = ElementaryOp(op)
    src = s.blocks()
    out = np.zeros_like(src)
    leakage = s.leakage
    n = np.arange(s.truncation.levels)
    if op == ElementaryOp.ANNIHILATE:
        out[:, :-1] = np.sqrt(n[1:]) * src[:, 1:]
    elif op == ElementaryOp.CREATE:
        out[:, 1:] = np.sqrt(n[1:]) * src[:, :-1]
        leakage += float(np.sum(np.abs(src[:, -1]) ** 2) * s.truncation.levels)
    elif op == ElementaryOp.NUMBER:
        out = n * src
    elif op == ElementaryOp.SIGMA_MINUS:
        out[1] = src[0]
    elif op == ElementaryOp.SIGMA_PLUS:
        out[0] = src[1]
    else:
        out[0] = src[0]
        out[1] = -src[1]
    return JointState(out.reshape(-1), s.truncation, leakage)


def overlap(a: JointState, b: JointState) -> complex:
    """
    Inner product <a|b>.

    Raises:
        DimensionMismatch: If the states live on different truncations.
    """
    if a.truncation != b.truncation:
        raise DimensionMismatch(
            f"n_max {a.truncation.n_max} and {b.truncation.n_max} differ"
        )
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def joint_density(s: JointState) -> DensityMatrix:
    """Returns |psi><psi| / <psi|psi>."""
    psi = s.amplitudes
    return DensityMatrix(np.outer(psi, psi.conj()) / s.norm2, s.truncation)


def product_density(rho_qubit: np.ndarray, rho_field: np.ndarray, trunc: Truncation) -> DensityMatrix:
    """Returns rho_qubit ⊗ rho_field in the joint layout."""
    return DensityMatrix(np.kron(rho_qubit, rho_field), trunc)


def reduce_qubit(rho: DensityMatrix) -> np.ndarray:
    """
    Partial trace over the field.

    Returns:
        np.ndarray: The 2x2 qubit density matrix in the (|+>, |->) basis.
    """
    levels = rho.truncation.levels
    return np.einsum('ikjk->ij', rho.entries.reshape(2, levels, 2, levels))


def reduce_field(rho: DensityMatrix) -> np.ndarray:
    """
    Partial trace over the qubit.

    Returns:
        np.ndarray: The (n_max+1)x(n_max+1) field density matrix.
    """
    levels = rho.truncation.levels
    return np.einsum('kikj->ij', rho.entries.reshape(2, levels, 2, levels))


def number_distribution(s: JointState) -> np.ndarray:
    """
    Photon-number probabilities P(n), summed over the qubit state.
    """
    return np.sum(np.abs(s.blocks()) ** 2, axis=0) / s.norm2
