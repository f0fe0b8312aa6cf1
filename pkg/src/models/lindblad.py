"""
This module defines the dissipation channels and the exact master-equation
integrator, which serves as the reference against which the Monte-Carlo
engine and the closed-form predictions are checked.

The master equation is
    d rho/dt = -i [H, rho] + sum_j (L_j rho L_j^dag - {L_j^dag L_j, rho}/2)
and is integrated with a fixed-step classical Runge-Kutta scheme acting on
dense matrices; no superoperator is ever built.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

import numpy as np

from ..core.errors import DimensionMismatch, StepUnstable
from ..core.results import SignalRecord
from .hamiltonian import OperatorMatrix, SystemParams, effective_nonhermitian, excited_projector, \
    number_operator, sigma_z_operator
from .hilbert import DensityMatrix, ElementaryOp, Truncation, elementary_matrix

logger = logging.getLogger(__name__)

TOL_TRACE = 1e-6
TOL_POS = 1e-8


class ChannelKind(str, Enum):
    """
    Enumeration of the dissipation channels.
    """
    CAVITY_LOSS = "cavity_loss"
    QUBIT_RELAXATION = "qubit_relaxation"
    PURE_DEPHASING = "pure_dephasing"


@dataclass(frozen=True, eq=False)
class JumpChannel:
    """
    A dissipation channel with its jump operator.

    The stored operator already contains the rate: sqrt(kappa) a for cavity
    loss, sqrt(gamma1) sigma^- for relaxation and sqrt(gamma_phi/2) i sigma_z
    for pure dephasing. With that convention the dephasing jump rate is
    <L^dag L> = gamma_phi/2 while a standalone qubit coherence decays at gamma_phi.

    Attributes:
        kind (ChannelKind): Which physical channel this is.
        rate (float): The physical rate (kappa, gamma1 or gamma_phi).
        operator (OperatorMatrix): The jump operator L.
        rate_operator (np.ndarray): L^dag L, precomputed.
    """
    kind: ChannelKind
    rate: float
    operator: OperatorMatrix
    rate_operator: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.rate >= 0:
            raise ValueError(f"channel rate must be >= 0, got {self.rate}")
        L = self.operator.entries
        object.__setattr__(self, "rate_operator", L.conj().T @ L)

    @classmethod
    def build(cls, kind: ChannelKind | str, rate: float, trunc: Truncation) -> "JumpChannel":
        """
        Builds the standard jump operator of a channel kind.

        Args:
            kind (ChannelKind | str): The channel kind.
            rate (float): kappa, gamma1 or gamma_phi.
            trunc (Truncation): The truncation.
        """
        kind = ChannelKind(kind)
        if kind == ChannelKind.CAVITY_LOSS:
            op = math.sqrt(rate) * elementary_matrix(ElementaryOp.ANNIHILATE, trunc)
        elif kind == ChannelKind.QUBIT_RELAXATION:
            op = math.sqrt(rate) * elementary_matrix(ElementaryOp.SIGMA_MINUS, trunc)
        else:
            op = 1j * math.sqrt(rate / 2) * elementary_matrix(ElementaryOp.SIGMA_Z, trunc)
        return cls(kind, rate, OperatorMatrix(op, hermitian_flag=False))

    def jump_rate(self, psi: np.ndarray) -> float:
        """Returns <psi|L^dag L|psi> for an amplitude vector."""
        return float(np.vdot(psi, self.rate_operator @ psi).real)


def jump_channels(p: SystemParams, trunc: Truncation) -> list[JumpChannel]:
    """
    Builds the channels of a parameter set, skipping those with a zero rate.

    Returns:
        list[JumpChannel]: Cavity loss, qubit relaxation and pure dephasing, in that order.
    """
    rates = [
        (ChannelKind.CAVITY_LOSS, p.kappa),
        (ChannelKind.QUBIT_RELAXATION, p.gamma1),
        (ChannelKind.PURE_DEPHASING, p.gamma_phi),
    ]
    return [JumpChannel.build(kind, rate, trunc) for kind, rate in rates if rate > 0]


def default_time_step(g: float, trunc: Truncation) -> float:
    """
    Default step (2 pi / (g sqrt(n_max))) / 50, fifty steps per period of the
    fastest Rabi frequency present in the truncation.
    """
    return 2 * math.pi / (g * math.sqrt(trunc.n_max)) / 50


@dataclass(frozen=True)
class TimeGrid:
    """
    A uniform integration grid.

    The requested ``dt`` is shrunk if needed so that t1 - t0 is an integer
    number of steps.

    Attributes:
        t0 (float): Start time in seconds.
        t1 (float): End time in seconds.
        dt (float): Requested step in seconds.
    """
    t0: float
    t1: float
    dt: float

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t1 > self.t0:
            raise ValueError(f"t1 ({self.t1}) must exceed t0 ({self.t0})")

    @property
    def n_steps(self) -> int:
        """int: Number of integration steps."""
        return max(1, math.ceil((self.t1 - self.t0) / self.dt - 1e-9))

    @property
    def step(self) -> float:
        """float: The effective step (t1 - t0) / n_steps."""
        return (self.t1 - self.t0) / self.n_steps

    @property
    def times(self) -> np.ndarray:
        """np.ndarray: The n_steps + 1 grid points."""
        return self.t0 + self.step * np.arange(self.n_steps + 1)

    @classmethod
    def default(cls, p: SystemParams, trunc: Truncation, t_end: float, t0: float = 0.0) -> "TimeGrid":
        """Builds a grid from t0 to t_end with the default step."""
        return cls(t0, t_end, default_time_step(p.g, trunc))


@dataclass
class MasterResult:
    """
    Output of a master-equation integration.

    Attributes:
        record (SignalRecord): Observable expectations on the sampled grid points.
        final (DensityMatrix): The state at the end of the grid.
        max_trace_drift (float): max |Tr rho - 1| over the run.
        max_herm_drift (float): max |rho - rho^dag| over the run.
        min_eigenvalue (float): Smallest eigenvalue seen at the positivity checkpoints.
        states (list[np.ndarray]): Density matrices at the sampled points, if kept.
    """
    record: SignalRecord
    final: DensityMatrix
    max_trace_drift: float = 0.0
    max_herm_drift: float = 0.0
    min_eigenvalue: float = 0.0
    states: list[np.ndarray] = field(default_factory=list)


def _as_array(rho) -> np.ndarray:
    return rho.entries if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)


class _MasterKernel:
    """Right-hand side -i(H_eff rho - rho H_eff^dag) + sum_j L_j rho L_j^dag."""

    def __init__(self, H: OperatorMatrix, channels: list[JumpChannel]):
        self.h_eff = effective_nonhermitian(H, channels).entries
        self.h_eff_dag = self.h_eff.conj().T
        self.jumps = [(c.operator.entries, c.operator.entries.conj().T) for c in channels]

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        out = -1j * (self.h_eff @ rho - rho @ self.h_eff_dag)
        for L, L_dag in self.jumps:
            out += L @ rho @ L_dag
        return out

    def rk4_step(self, rho: np.ndarray, dt: float) -> np.ndarray:
        k1 = self(rho)
        k2 = self(rho + 0.5 * dt * k1)
        k3 = self(rho + 0.5 * dt * k2)
        k4 = self(rho + dt * k3)
        return rho + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _check_dims(dim: int, H: OperatorMatrix, channels: Iterable[JumpChannel]):
    if H.dim != dim:
        raise DimensionMismatch(f"rho has dimension {dim}, H has {H.dim}")
    for c in channels:
        if c.operator.dim != dim:
            raise DimensionMismatch(f"rho has dimension {dim}, channel {c.kind.value} has {c.operator.dim}")


def lindblad_rhs(rho, H: OperatorMatrix, channels: Iterable[JumpChannel]) -> np.ndarray:
    """
    Evaluates d rho/dt.

    Args:
        rho (DensityMatrix | np.ndarray): The density matrix.
        H (OperatorMatrix): The Hamiltonian.
        channels (Iterable[JumpChannel]): Dissipation channels.

    Returns:
        np.ndarray: -i[H, rho] + sum_j (L_j rho L_j^dag - {L_j^dag L_j, rho}/2).

    Raises:
        DimensionMismatch: If the operands live on different spaces.
    """
    channels = list(channels)
    mat = _as_array(rho)
    _check_dims(mat.shape[0], H, channels)
    return _MasterKernel(H, channels)(mat)


def expectation(rho, O: OperatorMatrix) -> complex:
    """
    Returns Tr(rho O).

    Raises:
        DimensionMismatch: If the operands live on different spaces.
    """
    mat = _as_array(rho)
    if mat.shape[0] != O.dim:
        raise DimensionMismatch(f"rho has dimension {mat.shape[0]}, O has {O.dim}")
    return complex(np.einsum('ij,ji->', mat, O.entries))


def standard_observables(trunc: Truncation) -> dict[str, OperatorMatrix]:
    """Returns the observables recorded by default: sz, p_plus and n_photon."""
    return {
        "sz": sigma_z_operator(trunc),
        "p_plus": excited_projector(trunc),
        "n_photon": number_operator(trunc),
    }


def integrate_master(rho0: DensityMatrix, H: OperatorMatrix, channels: Iterable[JumpChannel],
                     grid: TimeGrid, observables: dict[str, OperatorMatrix] | None = None,
                     tol_trace: float = TOL_TRACE, sample_every: int = 1, check_every: int = 100,
                     keep_states: bool = False) -> MasterResult:
    """
    Integrates the master equation with fixed-step fourth-order Runge-Kutta.

    Args:
        rho0 (DensityMatrix): Initial state.
        H (OperatorMatrix): Hamiltonian (rotating frame for simulations).
        channels (Iterable[JumpChannel]): Dissipation channels.
        grid (TimeGrid): Integration grid.
        observables (dict[str, OperatorMatrix], optional): Observables to record.
                                                          Defaults to sz, p_plus, n_photon.
        tol_trace (float): Largest tolerated |Tr rho - 1|.
        sample_every (int): Record every this many steps (1 records every grid point).
        check_every (int): Positivity check interval in steps.
        keep_states (bool): Keep the density matrices at the recorded points.

    Returns:
        MasterResult: Recorded expectations, final state and drift diagnostics.

    Raises:
        StepUnstable: If the trace, Hermiticity or positivity drift beyond tolerance.
    """
    channels = list(channels)
    trunc = rho0.truncation
    _check_dims(trunc.dim, H, channels)
    if observables is None:
        observables = standard_observables(trunc)
    kernel = _MasterKernel(H, channels)
    dt = grid.step
    times = grid.times
    sampled = list(range(0, grid.n_steps + 1, sample_every))
    values = {name: np.zeros(len(sampled)) for name in observables}
    states = []

    rho = np.array(rho0.entries)
    max_trace = abs(np.trace(rho) - 1.0)
    max_herm = 0.0
    min_eig = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0])
    slot = 0
    for step in range(grid.n_steps + 1):
        if step > 0:
            rho = kernel.rk4_step(rho, dt)
            trace_drift = abs(np.trace(rho) - 1.0)
            herm_drift = float(np.max(np.abs(rho - rho.conj().T)))
            max_trace = max(max_trace, trace_drift)
            max_herm = max(max_herm, herm_drift)
            if trace_drift > tol_trace:
                raise StepUnstable(
                    f"trace drift {trace_drift:.3e} > {tol_trace:.1e} at t={times[step]:.6g} s; reduce dt"
                )
            if herm_drift > 10 * tol_trace:
                raise StepUnstable(f"Hermiticity drift {herm_drift:.3e} at t={times[step]:.6g} s; reduce dt")
            if step % check_every == 0:
                eig = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0])
                min_eig = min(min_eig, eig)
                if eig < -TOL_POS:
                    raise StepUnstable(f"negative eigenvalue {eig:.3e} at t={times[step]:.6g} s; reduce dt")
        if slot < len(sampled) and step == sampled[slot]:
            for name, O in observables.items():
                values[name][slot] = expectation(rho, O).real
            if keep_states:
                states.append(rho.copy())
            slot += 1

    logger.debug("master equation: %d steps, dim %d, trace drift %.2e, Hermiticity drift %.2e",
                 grid.n_steps, trunc.dim, max_trace, max_herm)
    record = SignalRecord(times=times[sampled], mean=values)
    return MasterResult(record=record, final=DensityMatrix(rho, trunc), max_trace_drift=float(max_trace),
                        max_herm_drift=max_herm, min_eigenvalue=min_eig, states=states)
