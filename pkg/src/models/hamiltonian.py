"""
This module defines the physical parameters of the qubit-cavity system and
builds the Hamiltonian matrices on the truncated joint space: the
Jaynes-Cummings Hamiltonian, its dispersive limit, and the non-Hermitian
effective Hamiltonian that drives quantum trajectories between jumps.

hbar = 1 throughout; every energy is an angular frequency in rad/s.
"""
import math
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Iterable

import numpy as np

from ..core.errors import DimensionMismatch, ZeroDetuning
from .hilbert import ElementaryOp, Truncation, elementary_matrix

if TYPE_CHECKING:
    from .lindblad import JumpChannel

TOL_HERM = 1e-9


class Frame(str, Enum):
    """
    Reference frame of a Hamiltonian: the lab frame, or the frame rotating at
    the cavity frequency omega0 for both the cavity and the qubit.
    """
    LAB = "lab"
    ROTATING = "rotating"


@dataclass(frozen=True)
class SystemParams:
    """
    Couplings and dissipation rates of the qubit-cavity system.

    Attributes:
        g (float): Vacuum Rabi coupling (rad/s).
        omega0 (float): Cavity angular frequency (rad/s).
        omega_qb (float): Qubit angular frequency (rad/s).
        kappa (float): Cavity energy decay rate (1/s).
        gamma1 (float): Qubit relaxation rate (1/s).
        gamma_phi (float): Qubit pure-dephasing rate (1/s); the standalone
                           qubit coherence decays as exp(-gamma_phi t).
        nbar (float): Mean photon number of the initial coherent field.
    """
    g: float
    omega0: float = 0.0
    omega_qb: float = 0.0
    kappa: float = 0.0
    gamma1: float = 0.0
    gamma_phi: float = 0.0
    nbar: float = 0.0

    def __post_init__(self):
        if not self.g > 0:
            raise ValueError(f"g must be positive, got {self.g}")
        for name in ("kappa", "gamma1", "gamma_phi", "nbar"):
            value = getattr(self, name)
            if not value >= 0:
                raise ValueError(f"{name} must be >= 0, got {value}")

    @property
    def detuning(self) -> float:
        """float: Qubit-cavity detuning Delta = omega_qb - omega0."""
        return self.omega_qb - self.omega0

    @property
    def chi(self) -> float:
        """
        float: ac-Stark shift per photon chi = g^2 / (4 Delta).

        Raises:
            ZeroDetuning: At resonance, where the dispersive limit does not exist.
        """
        if self.detuning == 0:
            raise ZeroDetuning("chi = g^2/(4 Delta) is undefined at zero detuning")
        return self.g ** 2 / (4 * self.detuning)

    @property
    def rabi_period(self) -> float:
        """float: Vacuum Rabi period t_R = 2 pi / g in seconds."""
        return 2 * math.pi / self.g

    def scaled_rates(self, factor: float) -> "SystemParams":
        """Returns a copy with kappa, gamma1 and gamma_phi multiplied by ``factor``."""
        return SystemParams(self.g, self.omega0, self.omega_qb, self.kappa * factor,
                            self.gamma1 * factor, self.gamma_phi * factor, self.nbar)

    def with_nbar(self, nbar: float) -> "SystemParams":
        """Returns a copy with a different mean photon number."""
        return SystemParams(self.g, self.omega0, self.omega_qb, self.kappa,
                            self.gamma1, self.gamma_phi, nbar)

    @classmethod
    def from_ratios(cls, g: float, g_over_kappa: float = math.inf, g_over_gamma1: float = math.inf,
                    g_over_gamma_phi: float = math.inf, nbar: float = 0.0,
                    detuning: float = 0.0, omega0: float = 0.0) -> "SystemParams":
        """
        Builds parameters from ratios g/rate; an infinite ratio means a zero rate.

        Args:
            g (float): Coupling in rad/s.
            g_over_kappa (float): Ratio g/kappa.
            g_over_gamma1 (float): Ratio g/gamma1.
            g_over_gamma_phi (float): Ratio g/gamma_phi.
            nbar (float): Mean photon number.
            detuning (float): Delta = omega_qb - omega0 in rad/s.
            omega0 (float): Cavity frequency in rad/s (0 selects the rotating frame).
        """
        def rate(ratio):
            return 0.0 if math.isinf(ratio) else g / ratio

        return cls(g=g, omega0=omega0, omega_qb=omega0 + detuning, kappa=rate(g_over_kappa),
                   gamma1=rate(g_over_gamma1), gamma_phi=rate(g_over_gamma_phi), nbar=nbar)


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """
    A dense operator on the joint space.

    Attributes:
        entries (np.ndarray): Complex (dim, dim) matrix.
        hermitian_flag (bool): Whether the operator is Hermitian; checked on construction.
    """
    entries: np.ndarray
    hermitian_flag: bool = True

    def __post_init__(self):
        mat = np.array(self.entries, dtype=complex)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise DimensionMismatch(f"operator must be square, got shape {mat.shape}")
        if self.hermitian_flag:
            scale = max(1.0, float(np.max(np.abs(mat))))
            error = float(np.max(np.abs(mat - mat.conj().T)))
            if error >= TOL_HERM * scale:
                raise ValueError(f"operator flagged Hermitian deviates by {error:.3e}")
        mat.setflags(write=False)
        object.__setattr__(self, "entries", mat)

    @property
    def dim(self) -> int:
        """int: Dimension of the space the operator acts on."""
        return self.entries.shape[0]

    def decay_operator(self) -> np.ndarray:
        """
        Returns the Hermitian matrix K such that M = (M + M^dagger)/2 - iK.

        For an effective Hamiltonian K = sum_j L_j^dag L_j / 2, which is
        positive semidefinite.
        """
        return 0.5j * (self.entries - self.entries.conj().T)


def _coupling(p: SystemParams, trunc: Truncation) -> np.ndarray:
    a = elementary_matrix(ElementaryOp.ANNIHILATE, trunc)
    sm = elementary_matrix(ElementaryOp.SIGMA_MINUS, trunc)
    return 0.5 * p.g * (a.conj().T @ sm + a @ sm.conj().T)


def jaynes_cummings(p: SystemParams, trunc: Truncation, frame: Frame | str = Frame.ROTATING) -> OperatorMatrix:
    """
    Builds the Jaynes-Cummings Hamiltonian.

    Lab frame:      omega0 a^dag a + (omega_qb/2) sigma_z + (g/2)(a^dag sigma^- + a sigma^+)
    Rotating frame: (Delta/2) sigma_z + (g/2)(a^dag sigma^- + a sigma^+)

    Args:
        p (SystemParams): System parameters.
        trunc (Truncation): The truncation.
        frame (Frame | str): 'lab' or 'rotating'.

    Returns:
        OperatorMatrix: The Hermitian Hamiltonian.
    """
    frame = Frame(frame)
    num = elementary_matrix(ElementaryOp.NUMBER, trunc)
    sz = elementary_matrix(ElementaryOp.SIGMA_Z, trunc)
    if frame == Frame.LAB:
        h = p.omega0 * num + 0.5 * p.omega_qb * sz
    else:
        h = 0.5 * p.detuning * sz
    return OperatorMatrix(h + _coupling(p, trunc), hermitian_flag=True)


def dispersive_hamiltonian(p: SystemParams, trunc: Truncation, frame: Frame | str = Frame.LAB) -> OperatorMatrix:
    """
    Builds the dispersive Hamiltonian (omega0 + chi sigma_z) a^dag a + (omega_qb + chi) sigma_z / 2.

    In the rotating frame omega0 (a^dag a + sigma_z/2) is removed, leaving
    chi sigma_z a^dag a + (Delta + chi) sigma_z / 2.

    Raises:
        ZeroDetuning: If Delta = 0.
    """
    frame = Frame(frame)
    chi = p.chi
    num = elementary_matrix(ElementaryOp.NUMBER, trunc)
    sz = elementary_matrix(ElementaryOp.SIGMA_Z, trunc)
    if frame == Frame.LAB:
        h = p.omega0 * num + chi * sz @ num + 0.5 * (p.omega_qb + chi) * sz
    else:
        h = chi * sz @ num + 0.5 * (p.detuning + chi) * sz
    return OperatorMatrix(h, hermitian_flag=True)


def effective_nonhermitian(H: OperatorMatrix, channels: Iterable["JumpChannel"]) -> OperatorMatrix:
    """
    Builds H_eff = H - (i/2) sum_j L_j^dag L_j.

    Args:
        H (OperatorMatrix): The Hermitian Hamiltonian.
        channels (Iterable[JumpChannel]): Dissipation channels on the same space.

    Returns:
        OperatorMatrix: The non-Hermitian effective Hamiltonian. With no
                        channels the entries equal those of H.

    Raises:
        DimensionMismatch: If a channel operator has a different dimension.
    """
    h_eff = np.array(H.entries)
    hermitian = True
    for channel in channels:
        if channel.operator.dim != H.dim:
            raise DimensionMismatch(
                f"channel {channel.kind.value} has dimension {channel.operator.dim}, H has {H.dim}"
            )
        h_eff = h_eff - 0.5j * channel.rate_operator
        hermitian = False
    return OperatorMatrix(h_eff, hermitian_flag=hermitian)


def sigma_z_operator(trunc: Truncation) -> OperatorMatrix:
    """Observable sigma_z on the joint space."""
    return OperatorMatrix(elementary_matrix(ElementaryOp.SIGMA_Z, trunc))


def number_operator(trunc: Truncation) -> OperatorMatrix:
    """Observable a^dag a on the joint space."""
    return OperatorMatrix(elementary_matrix(ElementaryOp.NUMBER, trunc))


def excited_projector(trunc: Truncation) -> OperatorMatrix:
    """Observable (1 + sigma_z)/2, the probability of |+>."""
    sz = elementary_matrix(ElementaryOp.SIGMA_Z, trunc)
    return OperatorMatrix(0.5 * (np.eye(trunc.dim) + sz))
