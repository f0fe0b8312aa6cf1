"""
This module implements the closed-form predictions for the mesoscopic
Jaynes-Cummings dynamics: the overlap factor of the two Gea-Banacloche
branches, the decoherence factors for free and echo protocols, the Rabi
signal with its envelopes, pointer-state decoherence functionals, the exact
solution of the dispersive model, the telegraph-noise (renewal) dephasing
coefficients and the Fock-state decoherence rates.

All closed forms hold the mean photon number at n̄ and are meaningful for
t much shorter than 1/kappa (see :func:`validity_window`).

Phase convention: the branch amplitudes drift in the Fresnel plane as
lambda_± = sqrt(n̄) exp(±i g t / (4 sqrt(n̄))), which makes the cavity and
relaxation phases of the decoherence factor enter with the same sign.
The Rabi carrier exp(-i g t sqrt(n̄)) R(t) reduces to the exact photon-number
sector sum sum_k p_k exp(-i g t sqrt(k+1)), so that without dissipation the
signal coincides with the Monte-Carlo result point by point.
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.stats import poisson

from ..core.errors import EchoOrdering
from .hamiltonian import SystemParams
from .hilbert import DensityMatrix, Truncation, coherent_kets, coherent_state
from .mcwf import Protocol, ProtocolKind

logger = logging.getLogger(__name__)

# Points per segment used by the echo phase quadrature.
ECHO_QUADRATURE_POINTS = 2001
# Largest RK4 phase increment per substep of the pointer ODE.
POINTER_MAX_PHASE_STEP = 0.05


def _branch_rate(p: SystemParams) -> float:
    """a = g / (2 sqrt(n̄)), the angular speed of the branch separation."""
    if not p.nbar > 0:
        raise ValueError(f"nbar must be positive for the mesoscopic closed forms, got {p.nbar}")
    return p.g / (2 * math.sqrt(p.nbar))


@dataclass(frozen=True)
class DecoherenceFactor:
    """
    Decoherence factor F = exp(-d(t) + i Theta(t)) of the branch coherence.

    Attributes:
        modulus_log (np.ndarray): -d(t).
        phase (np.ndarray): Theta(t) in radians.
    """
    modulus_log: np.ndarray
    phase: np.ndarray

    @property
    def d(self) -> np.ndarray:
        """np.ndarray: The decay exponent d(t)."""
        return -np.asarray(self.modulus_log)

    @property
    def modulus(self) -> np.ndarray:
        """np.ndarray: |F|."""
        return np.exp(self.modulus_log)

    @property
    def value(self) -> np.ndarray:
        """np.ndarray: The complex factor F."""
        return np.exp(np.asarray(self.modulus_log) + 1j * np.asarray(self.phase))


@dataclass(frozen=True, eq=False)
class PointerTrajectoryPair:
    """
    Two coherent-amplitude paths in the Fresnel plane on a shared time grid.

    Attributes:
        times (np.ndarray): Time grid in seconds.
        lambda_plus (np.ndarray): Path of the |+> branch.
        lambda_minus (np.ndarray): Path of the |-> branch.
    """
    times: np.ndarray
    lambda_plus: np.ndarray
    lambda_minus: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        plus = np.asarray(self.lambda_plus, dtype=complex)
        minus = np.asarray(self.lambda_minus, dtype=complex)
        if not times.shape == plus.shape == minus.shape or times.ndim != 1:
            raise ValueError("pointer paths must share a one-dimensional time grid")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "lambda_plus", plus)
        object.__setattr__(self, "lambda_minus", minus)


class Regime(str, Enum):
    """
    Dephasing regime of the renewal coefficients.
    """
    EXACT = "exact"
    STRONG = "strong_dephasing"
    WEAK = "weak_dephasing"


@dataclass(frozen=True)
class RenewalCoefficients:
    """
    Telegraph-noise averages of exp(+i lambda integral X), split by the parity
    of the number of dephasing jumps.

    Attributes:
        even (np.ndarray): Even-parity coefficient.
        odd (np.ndarray): Odd-parity coefficient.
        regime_tag (Regime): Which expression produced the values.
    """
    even: np.ndarray
    odd: np.ndarray
    regime_tag: Regime


@dataclass
class RabiSignal:
    """
    Analytic Rabi signal and its envelopes.

    Attributes:
        times (np.ndarray): Times in seconds.
        p_plus (np.ndarray): Probability of |+>.
        env_hi (np.ndarray): Upper envelope of p_plus.
        env_lo (np.ndarray): Lower envelope of p_plus.
    """
    times: np.ndarray
    p_plus: np.ndarray
    env_hi: np.ndarray
    env_lo: np.ndarray

    @property
    def sz(self) -> np.ndarray:
        """np.ndarray: <sigma_z> = 2 P(+) - 1."""
        return 2 * self.p_plus - 1

    @property
    def sz_envelope(self) -> tuple[np.ndarray, np.ndarray]:
        """tuple[np.ndarray, np.ndarray]: Upper and lower envelopes of <sigma_z>."""
        return 2 * self.env_hi - 1, 2 * self.env_lo - 1


@dataclass
class DispersiveSolution:
    """
    Exact solution of the dissipative dispersive model, by qubit blocks.

    Attributes:
        times (np.ndarray): Times in seconds.
        rho_pp (np.ndarray): (n_t, L, L) field block multiplying |+><+|.
        rho_mm (np.ndarray): (n_t, L, L) field block multiplying |-><-|.
        rho_pm (np.ndarray): (n_t, L, L) field block multiplying |+><-|.
        truncation (Truncation): The truncation, L = n_max + 1.
    """
    times: np.ndarray
    rho_pp: np.ndarray
    rho_mm: np.ndarray
    rho_pm: np.ndarray
    truncation: Truncation

    def density(self, index: int) -> DensityMatrix:
        """Assembles the joint density matrix at ``times[index]``."""
        pm = self.rho_pm[index]
        full = np.block([[self.rho_pp[index], pm], [pm.conj().T, self.rho_mm[index]]])
        return DensityMatrix(full, self.truncation)

    def traces(self) -> np.ndarray:
        """Tr(rho_pp + rho_mm) at every time."""
        return np.real(np.trace(self.rho_pp, axis1=1, axis2=2) + np.trace(self.rho_mm, axis1=1, axis2=2))


def decoherence_rate(p: SystemParams) -> float:
    """Long-time decay rate Gamma = kappa n̄ + (gamma_phi + gamma1)/2 of the branch coherence."""
    return p.kappa * p.nbar + 0.5 * (p.gamma_phi + p.gamma1)


def validity_window(p: SystemParams) -> float:
    """
    Time scale 1/kappa below which the photon number may be held at n̄.

    Returns:
        float: 1/kappa in seconds, or infinity without cavity loss.
    """
    return math.inf if p.kappa == 0 else 1.0 / p.kappa


def overlap_factor(t, nbar: float, g: float, trunc: Truncation | None = None) -> np.ndarray:
    """
    Computes the overlap factor of the two field branches.

    R(t) = exp(i g t sqrt(n̄)) sum_k p_k exp(-i g t sqrt(k+1)), with the
    Poisson weights p_k summed up to n_max and normalized over the truncation.

    Args:
        t (array_like): Times in seconds.
        nbar (float): Mean photon number.
        g (float): Coupling in rad/s.
        trunc (Truncation | None): Truncation; defaults to ``Truncation.for_nbar(nbar)``.

    Returns:
        np.ndarray: Complex R(t), same shape as t.
    """
    if not nbar > 0:
        raise ValueError(f"nbar must be positive, got {nbar}")
    trunc = trunc or Truncation.for_nbar(nbar)
    k = np.arange(trunc.levels)
    weights = poisson.pmf(k, nbar)
    weights = weights / weights.sum()
    t = np.asarray(t, dtype=float)
    sectors = np.exp(-1j * g * np.multiply.outer(t, np.sqrt(k + 1)))
    return np.exp(1j * g * t * math.sqrt(nbar)) * (sectors @ weights)


def free_decoherence(t, p: SystemParams) -> DecoherenceFactor:
    """
    Decoherence factor of the branch coherence during free evolution.

    d(t) = (kappa n̄ + (gamma1 + gamma_phi)/2) t - (2 sqrt(n̄)/g)(kappa n̄ + gamma1/4) sin(phi_t)
    Theta(t) = ((gamma1 + 4 kappa n̄) sqrt(n̄)/g) sin^2(phi_t / 2)
    with phi_t = g t / (2 sqrt(n̄)).

    Args:
        t (array_like): Times in seconds, t >= 0.
        p (SystemParams): Rates and mean photon number.

    Returns:
        DecoherenceFactor: -d(t) and Theta(t).
    """
    a = _branch_rate(p)
    t = np.asarray(t, dtype=float)
    phi = a * t
    root = math.sqrt(p.nbar)
    d = decoherence_rate(p) * t - (2 * root / p.g) * (p.kappa * p.nbar + p.gamma1 / 4) * np.sin(phi)
    theta = ((p.gamma1 + 4 * p.kappa * p.nbar) * root / p.g) * np.sin(phi / 2) ** 2
    return DecoherenceFactor(-d, theta)


def _folded(t_pi, t, a):
    """Echo fold 1 - 2 cos(phi_pi) + cos(2 phi_pi - phi) shared by the echo phases."""
    return 1 - 2 * np.cos(a * t_pi) + np.cos(a * (2 * t_pi - t))


def echo_decoherence(t_pi, t, p: SystemParams, with_phase: bool = True) -> DecoherenceFactor:
    """
    Decoherence factor of the branch coherence after an echo pulse at t_pi.

    d(t_pi, t) = kappa n̄ t + (gamma_phi + gamma1) t / 2
                 - (2 sqrt(n̄)/g)(kappa n̄ + gamma1/4)(2 sin(phi_pi) - sin(2 phi_pi - phi_t))

    The phase is the relaxation part (gamma1 sqrt(n̄)/(2g)) times the echo fold
    plus the cavity part, which is integrated numerically from the
    decoherence functional along the folded pointer paths.

    Args:
        t_pi (array_like): Pulse times in seconds.
        t (array_like): Times in seconds, broadcastable against t_pi.
        p (SystemParams): Rates and mean photon number.
        with_phase (bool): Skip the phase quadrature when False (phase set to zero).

    Returns:
        DecoherenceFactor: -d and Theta.

    Raises:
        EchoOrdering: If some t < t_pi or t_pi <= 0.
    """
    t_pi, t = np.broadcast_arrays(np.asarray(t_pi, dtype=float), np.asarray(t, dtype=float))
    if np.any(t_pi <= 0) or np.any(t < t_pi):
        raise EchoOrdering("echo decoherence needs 0 < t_pi <= t")
    a = _branch_rate(p)
    root = math.sqrt(p.nbar)
    d = (p.kappa * p.nbar * t + 0.5 * (p.gamma_phi + p.gamma1) * t
         - (2 * root / p.g) * (p.kappa * p.nbar + p.gamma1 / 4)
         * (2 * np.sin(a * t_pi) - np.sin(a * (2 * t_pi - t))))
    theta = np.zeros_like(t)
    if with_phase:
        theta = (p.gamma1 * root / (2 * p.g)) * _folded(t_pi, t, a)
        if p.kappa > 0:
            cavity = np.empty_like(t)
            for idx in np.ndindex(t.shape):
                grid = _echo_grid(t_pi[idx], t[idx])
                paths = echo_pointer_paths(p.nbar, p.g, t_pi[idx], grid)
                cavity[idx] = _cavity_phase(paths, p.kappa)
            theta = theta + cavity
    return DecoherenceFactor(-d, theta)


def _echo_grid(t_pi: float, t: float) -> np.ndarray:
    first = np.linspace(0.0, t_pi, ECHO_QUADRATURE_POINTS)
    if t <= t_pi:
        return first
    return np.concatenate([first, np.linspace(t_pi, t, ECHO_QUADRATURE_POINTS)[1:]])


def _cavity_log_modulus(paths: PointerTrajectoryPair, kappa: float) -> float:
    return 0.5 * kappa * trapezoid(np.abs(paths.lambda_plus - paths.lambda_minus) ** 2, paths.times)


def _cavity_phase(paths: PointerTrajectoryPair, kappa: float) -> float:
    return kappa * trapezoid(np.imag(paths.lambda_plus * paths.lambda_minus.conj()), paths.times)


def rabi_signal(t, p: SystemParams, protocol: Protocol | None = None,
                trunc: Truncation | None = None) -> RabiSignal:
    """
    Analytic probability of finding the qubit in |+>, for a qubit starting in
    |+> and a coherent field of mean photon number n̄.

    P(t) = (1 + Re[exp(-i g t sqrt(n̄)) R(t) F(t)]) / 2, envelopes (1 ± |R F|)/2.
    After an echo pulse at t_pi the overlap factor is evaluated at the
    mirrored time 2 t_pi - t and the echo decoherence factor replaces F.

    Args:
        t (array_like): Times in seconds.
        p (SystemParams): Rates and mean photon number.
        protocol (Protocol | None): Free evolution when None.
        trunc (Truncation | None): Truncation of the overlap sum.

    Returns:
        RabiSignal: The signal and its envelopes.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    root = math.sqrt(p.nbar)
    coherence = np.empty(t.shape, dtype=complex)
    magnitude = np.empty(t.shape, dtype=float)

    echo = protocol is not None and protocol.kind == ProtocolKind.ECHO
    before = t < protocol.t_pi if echo else np.ones(t.shape, dtype=bool)

    if np.any(before):
        tf = t[before]
        R = overlap_factor(tf, p.nbar, p.g, trunc)
        F = free_decoherence(tf, p).value
        coherence[before] = np.exp(-1j * p.g * tf * root) * R * F
        magnitude[before] = np.abs(R * F)
    if np.any(~before):
        te = t[~before]
        mirrored = 2 * protocol.t_pi - te
        R = overlap_factor(mirrored, p.nbar, p.g, trunc)
        F = echo_decoherence(protocol.t_pi, te, p).value
        coherence[~before] = np.exp(-1j * p.g * mirrored * root) * R * F
        magnitude[~before] = np.abs(R * F)

    return RabiSignal(times=t, p_plus=0.5 * (1 + coherence.real),
                      env_hi=0.5 * (1 + magnitude), env_lo=0.5 * (1 - magnitude))


def pointer_decoherence_functional(paths: PointerTrajectoryPair, kappa: float) -> complex:
    """
    Decoherence functional of two pointer paths under cavity loss.

    F = exp(-(kappa/2) int |lambda_+ - lambda_-|^2) exp(i kappa int Im(lambda_+ conj(lambda_-))),
    integrated with the trapezoidal rule on the paths' grid.
    """
    if len(paths.times) < 2:
        return 1.0 + 0.0j
    return complex(np.exp(-_cavity_log_modulus(paths, kappa) + 1j * _cavity_phase(paths, kappa)))


def resonant_pointer_paths(nbar: float, g: float, times) -> PointerTrajectoryPair:
    """Free resonant branch paths lambda_± = sqrt(n̄) exp(±i g t / (4 sqrt(n̄)))."""
    times = np.asarray(times, dtype=float)
    half = g * times / (4 * math.sqrt(nbar))
    return PointerTrajectoryPair(times, math.sqrt(nbar) * np.exp(1j * half),
                                 math.sqrt(nbar) * np.exp(-1j * half))


def echo_pointer_paths(nbar: float, g: float, t_pi: float, times) -> PointerTrajectoryPair:
    """
    Branch paths with an echo at t_pi: the drift runs backwards after the pulse,
    so the elapsed angle is folded as f(t) = t before t_pi and 2 t_pi - t after.
    """
    times = np.asarray(times, dtype=float)
    folded = np.where(times <= t_pi, times, 2 * t_pi - times)
    half = g * folded / (4 * math.sqrt(nbar))
    return PointerTrajectoryPair(times, math.sqrt(nbar) * np.exp(1j * half),
                                 math.sqrt(nbar) * np.exp(-1j * half))


def _branch_frequency(p: SystemParams, sign: int) -> float:
    return p.omega0 + sign * p.chi


def _pointer_rhs(omega: float, kappa: float, drive: Callable[[float], complex] | None):
    rate = -1j * omega - 0.5 * kappa

    def rhs(t, alpha):
        out = rate * alpha
        if drive is not None:
            out = out - 1j * drive(t)
        return out

    return rhs


def _rk4_pointer(rhs, y, t0: float, t1: float, omega: float):
    """Advances the pointer ODE from t0 to t1 with enough RK4 substeps."""
    span = t1 - t0
    steps = max(1, math.ceil(abs(omega) * span / POINTER_MAX_PHASE_STEP))
    h = span / steps
    t = t0
    for _ in range(steps):
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return y


def dispersive_pointer_trajectory(alpha0: complex, sign: int, drive: Callable[[float], complex] | None,
                                  p: SystemParams, grid) -> np.ndarray:
    """
    Integrates d alpha/dt = -i omega_± alpha - (kappa/2) alpha - i eps(t) with
    omega_± = omega0 ± chi, the cavity frequency shifted by the qubit state.

    Args:
        alpha0 (complex): Initial amplitude.
        sign (int): +1 for the |+> branch, -1 for |->.
        drive (Callable[[float], complex] | None): Classical drive eps(t), or None.
        p (SystemParams): Parameters; the detuning sets chi.
        grid (array_like): Output times in seconds, starting at the initial time.

    Returns:
        np.ndarray: Complex amplitudes on the grid.

    Raises:
        ZeroDetuning: At zero detuning.
    """
    if sign not in (1, -1):
        raise ValueError(f"sign must be +1 or -1, got {sign}")
    grid = np.asarray(grid, dtype=float)
    omega = _branch_frequency(p, sign)
    rhs = _pointer_rhs(omega, p.kappa, drive)
    path = np.empty(len(grid), dtype=complex)
    path[0] = alpha0
    for i in range(1, len(grid)):
        path[i] = _rk4_pointer(rhs, path[i - 1], grid[i - 1], grid[i], omega)
    return path


def spliced_pointer_paths(alpha_plus: np.ndarray, drive: Callable[[float], complex] | None,
                          p: SystemParams, grid) -> list[np.ndarray]:
    """
    Paths that follow the |+> branch up to a relaxation time tau and the |->
    branch afterwards.

    Args:
        alpha_plus (np.ndarray): |+> branch path on the grid.
        drive (Callable[[float], complex] | None): Classical drive, or None.
        p (SystemParams): Parameters.
        grid (array_like): Time grid in seconds.

    Returns:
        list[np.ndarray]: Entry i holds the amplitudes at grid[i] of the paths
                          spliced at grid[0..i].
    """
    grid = np.asarray(grid, dtype=float)
    omega = _branch_frequency(p, -1)
    rhs = _pointer_rhs(omega, p.kappa, drive)
    spliced = [np.array([alpha_plus[0]], dtype=complex)]
    for i in range(1, len(grid)):
        moved = _rk4_pointer(rhs, spliced[-1], grid[i - 1], grid[i], omega)
        spliced.append(np.append(moved, alpha_plus[i]))
    return spliced


def _exponential_weights(times: np.ndarray, rate: float) -> np.ndarray:
    """
    Weights w_j with sum_j w_j f(t_j) = int exp(-rate tau) f(tau) d tau for f
    linear between grid points.
    """
    if len(times) == 1:
        return np.zeros(1)
    h = np.diff(times)
    weights = np.zeros(len(times))
    if rate == 0:
        weights[:-1] += 0.5 * h
        weights[1:] += 0.5 * h
        return weights
    x = rate * h
    start = np.exp(-rate * times[:-1])
    total = -np.expm1(-x) / rate
    right = (1 - np.exp(-x) * (1 + x)) / (rate * x)
    weights[:-1] += start * (total - right)
    weights[1:] += start * right
    return weights


def _drive_phase(drive, times: np.ndarray, path: np.ndarray) -> np.ndarray:
    if drive is None:
        return np.zeros(len(times))
    eps = np.array([drive(t) for t in times], dtype=complex)
    return cumulative_trapezoid(np.real(eps.conj() * path), times, initial=0.0)


def dispersive_solution(A_plus: complex, A_minus: complex, alpha0: complex,
                        drive: Callable[[float], complex] | None, p: SystemParams, grid,
                        trunc: Truncation | None = None, leak_tol: float = 1e-6) -> DispersiveSolution:
    """
    Exact density matrix of the dissipative dispersive model for the initial
    state (A_+ |+> + A_- |->) ⊗ |alpha0>.

    rho_++ = |A_+|^2 e^{-gamma1 t} |alpha_+><alpha_+|
    rho_-- = |A_-|^2 |alpha_-><alpha_-| + gamma1 |A_+|^2 int_0^t e^{-gamma1 tau} |a(t,tau)><a(t,tau)| d tau
    rho_+- = A_+ conj(A_-) e^{-(gamma_phi + gamma1/2) t} F_+-(t) e^{i(theta_+ - theta_-)} |alpha_+><alpha_-|

    a(t, tau) is the path spliced at the relaxation time tau. The tau
    integral uses exact exponential weights for kets interpolated linearly
    between grid points, so the trace is conserved to rounding.

    Args:
        A_plus (complex): Initial |+> amplitude.
        A_minus (complex): Initial |-> amplitude.
        alpha0 (complex): Initial coherent amplitude.
        drive (Callable[[float], complex] | None): Classical drive eps(t), or None.
        p (SystemParams): Parameters with a nonzero detuning.
        grid (array_like): Time grid in seconds, starting at 0.
        trunc (Truncation | None): Truncation; defaults to ``Truncation.for_nbar(|alpha0|^2)``.
        leak_tol (float): Largest norm of the initial field allowed beyond n_max.

    Returns:
        DispersiveSolution: The three field blocks at every grid time.

    Raises:
        ValueError: If |A_+|^2 + |A_-|^2 differs from 1.
        ZeroDetuning: At zero detuning.
    """
    if abs(abs(A_plus) ** 2 + abs(A_minus) ** 2 - 1) > 1e-9:
        raise ValueError("qubit amplitudes must be normalized")
    grid = np.asarray(grid, dtype=float)
    nbar0 = abs(alpha0) ** 2
    trunc = trunc or Truncation.for_nbar(nbar0)
    if abs(p.detuning) < 10 * p.g * math.sqrt(max(nbar0, 1.0)):
        logger.warning("|Delta| = %.3g is below 10 g sqrt(n̄) = %.3g; the dispersive model may be inaccurate",
                       abs(p.detuning), 10 * p.g * math.sqrt(max(nbar0, 1.0)))
    coherent_state(alpha0, trunc, leak_tol=leak_tol, strict=False)

    alpha_p = dispersive_pointer_trajectory(alpha0, +1, drive, p, grid)
    alpha_m = dispersive_pointer_trajectory(alpha0, -1, drive, p, grid)
    kets_p = coherent_kets(alpha_p, trunc)
    kets_m = coherent_kets(alpha_m, trunc)

    n_t, levels = len(grid), trunc.levels
    rho_pp = np.einsum("ti,tj->tij", kets_p, kets_p.conj())
    rho_pp *= (abs(A_plus) ** 2 * np.exp(-p.gamma1 * grid))[:, None, None]

    rho_mm = abs(A_minus) ** 2 * np.einsum("ti,tj->tij", kets_m, kets_m.conj())
    if p.gamma1 > 0 and A_plus != 0:
        spliced = spliced_pointer_paths(alpha_p, drive, p, grid)
        for i in range(1, n_t):
            weights = _exponential_weights(grid[: i + 1], p.gamma1)
            kets = coherent_kets(spliced[i], trunc)
            rho_mm[i] += p.gamma1 * abs(A_plus) ** 2 * (kets.T * weights) @ kets.conj()

    cavity = np.ones(n_t, dtype=complex)
    if p.kappa > 0:
        diff2 = np.abs(alpha_p - alpha_m) ** 2
        cross = np.imag(alpha_p * alpha_m.conj())
        cavity = np.exp(-0.5 * p.kappa * cumulative_trapezoid(diff2, grid, initial=0.0)
                        + 1j * p.kappa * cumulative_trapezoid(cross, grid, initial=0.0))
    qubit_phase = -0.5 * (p.omega_qb + p.chi) * grid
    theta_p = qubit_phase - _drive_phase(drive, grid, alpha_p)
    theta_m = -qubit_phase - _drive_phase(drive, grid, alpha_m)
    prefactor = (A_plus * np.conj(A_minus) * np.exp(-(p.gamma_phi + 0.5 * p.gamma1) * grid)
                 * cavity * np.exp(1j * (theta_p - theta_m)))
    rho_pm = prefactor[:, None, None] * np.einsum("ti,tj->tij", kets_p, kets_m.conj())

    return DispersiveSolution(times=grid, rho_pp=rho_pp, rho_mm=rho_mm, rho_pm=rho_pm, truncation=trunc)


def regime_of(lambda_coupling: float, gamma_phi: float) -> Regime:
    """
    Classifies the dephasing regime by g~ = lambda / gamma_phi: strong above
    10, weak below 0.1, otherwise only the exact form applies.
    """
    if gamma_phi == 0:
        return Regime.STRONG
    ratio = abs(lambda_coupling) / gamma_phi
    if ratio >= 10:
        return Regime.STRONG
    if ratio <= 0.1:
        return Regime.WEAK
    return Regime.EXACT


def renewal_dephasing(lambda_coupling: float, gamma_phi: float, t, mode: str = "exact") -> RenewalCoefficients:
    """
    Average of exp(i lambda int_0^t X) over a telegraph process X = ±1 that
    starts at +1 and switches at rate gamma_phi/2, split by the parity of the
    number of switches.

    Exact form, with w = sqrt(lambda^2 - gamma_phi^2/4) (branch Im w >= 0):
        even = e^{-gamma_phi t/2} (cos(w t) + i lambda sin(w t)/w)
        odd  = (gamma_phi/2) e^{-gamma_phi t/2} sin(w t)/w
    sin(w t)/w is continued by t at the confluent point w = 0.

    With ``mode="auto"`` the strong (e^{-gamma_phi t/2} e^{i lambda t}) or
    weak (e^{-lambda^2 t / gamma_phi}/2) limiting forms are returned inside
    their regimes.

    Args:
        lambda_coupling (float): Coupling lambda in rad/s.
        gamma_phi (float): Dephasing rate, >= 0.
        t (array_like): Times in seconds.
        mode (str): 'exact' or 'auto'.

    Returns:
        RenewalCoefficients: Even and odd coefficients with their regime tag.
    """
    if gamma_phi < 0:
        raise ValueError(f"gamma_phi must be >= 0, got {gamma_phi}")
    if mode not in ("exact", "auto"):
        raise ValueError(f"mode must be 'exact' or 'auto', got {mode!r}")
    t = np.asarray(t, dtype=float)
    lam = float(lambda_coupling)
    decay = np.exp(-0.5 * gamma_phi * t)

    regime = regime_of(lam, gamma_phi) if mode == "auto" else Regime.EXACT
    if regime == Regime.STRONG:
        even = decay * np.exp(1j * lam * t)
        odd = np.zeros_like(t, dtype=complex)
        if lam != 0:
            odd = odd + (0.5 * gamma_phi / lam) * decay * np.sin(lam * t)
        return RenewalCoefficients(even, odd, regime)
    if regime == Regime.WEAK:
        half = 0.5 * np.exp(-lam ** 2 * t / gamma_phi) + 0j
        return RenewalCoefficients(half, half.copy(), regime)

    w = np.sqrt(complex(lam ** 2 - gamma_phi ** 2 / 4))
    sinc = t * np.sinc(w * t / np.pi)
    even = decay * (np.cos(w * t) + 1j * lam * sinc)
    odd = 0.5 * gamma_phi * decay * sinc
    return RenewalCoefficients(np.asarray(even, dtype=complex), np.asarray(odd, dtype=complex), Regime.EXACT)


def telegraph_average(lambda_coupling: float, gamma_phi: float, t: float, n_samples: int,
                      rng: np.random.Generator) -> tuple[complex, complex, float, float]:
    """
    Brute-force telegraph-noise estimate of the renewal coefficients.

    Args:
        lambda_coupling (float): Coupling lambda.
        gamma_phi (float): Dephasing rate; switches occur at gamma_phi/2.
        t (float): Time.
        n_samples (int): Number of telegraph histories.
        rng (np.random.Generator): Random source.

    Returns:
        tuple[complex, complex, float, float]: Even mean, odd mean and their
                                               standard errors (complex modulus).
    """
    counts = rng.poisson(0.5 * gamma_phi * t, n_samples)
    width = int(counts.max()) if n_samples else 0
    switches = rng.random((n_samples, width)) * t
    switches[np.arange(width)[None, :] >= counts[:, None]] = t
    switches.sort(axis=1)
    edges = np.concatenate([np.zeros((n_samples, 1)), switches, np.full((n_samples, 1), t)], axis=1)
    signs = (-1.0) ** np.arange(width + 1)
    area = np.diff(edges, axis=1) @ signs
    phase = np.exp(1j * lambda_coupling * area)
    even_mask = counts % 2 == 0

    def stats(values):
        mean = values.mean()
        err = math.sqrt((values.real.var(ddof=1) + values.imag.var(ddof=1)) / n_samples)
        return complex(mean), err

    even, even_err = stats(np.where(even_mask, phase, 0))
    odd, odd_err = stats(np.where(even_mask, 0, phase))
    return even, odd, even_err, odd_err


def relaxation_decoherence(t, p: SystemParams) -> np.ndarray:
    """
    Decoherence coefficient of qubit relaxation,
    exp((gamma1/2) int_0^t (exp(i a tau)/2 - 1) d tau) with a = g / (2 sqrt(n̄)),
    assembled from its antiderivative.
    """
    a = _branch_rate(p)
    t = np.asarray(t, dtype=float)
    return np.exp(-0.5 * p.gamma1 * t + 0.25 * p.gamma1 * np.expm1(1j * a * t) / (1j * a))


def fock_decoherence_rate(p_plus: float, p_minus: float, nbar: float, gamma_phi: float, g: float) -> float:
    """
    Decoherence rate between two Fock-like branches under strong-coupling dephasing.

    Gamma = min(gamma_phi, (gamma_phi/64)(n̄_c/n̄)(p_+ - p_-)^2) with n̄_c = (2g/gamma_phi)^2.
    """
    if gamma_phi == 0:
        return 0.0
    critical = (2 * g / gamma_phi) ** 2
    if nbar < critical:
        logger.warning("n̄ = %.3g is below n̄_c = %.3g; the Fock decoherence rate is outside its regime",
                       nbar, critical)
    return min(gamma_phi, (gamma_phi / 64) * (critical / nbar) * (p_plus - p_minus) ** 2)


def contrast_coefficient(t, nbar: float, p: SystemParams, protocol: ProtocolKind | str = ProtocolKind.FREE):
    """
    Effective decoherence coefficient |F| used for contour maps: |F(t)| for
    free evolution, |F(t/2, t)| for an echo recombining at t.

    Args:
        t (array_like): Times in seconds.
        nbar (float): Mean photon number.
        p (SystemParams): Rates (their nbar is replaced).
        protocol (ProtocolKind | str): 'free' or 'echo'.

    Returns:
        np.ndarray: The contrast, shape of t.
    """
    params = p.with_nbar(nbar)
    t = np.asarray(t, dtype=float)
    if ProtocolKind(protocol) == ProtocolKind.FREE:
        return free_decoherence(t, params).modulus
    out = np.ones_like(t)
    positive = t > 0
    out[positive] = echo_decoherence(t[positive] / 2, t[positive], params, with_phase=False).modulus
    return out


def cubic_contour_coefficient(kappa: float, g: float) -> float:
    """
    Coefficient c of the large-n̄ cavity asymptote -log C ≈ c (t/t_R)^3,
    c = (pi^3/3)(kappa/g).
    """
    return (math.pi ** 3 / 3) * kappa / g


def fitted_decay_rate(p: SystemParams, periods: int = 8, n_points: int = 4000) -> float:
    """
    Least-squares slope of d(t) over ``periods`` full turns of the branch
    separation angle; the bounded oscillating part of d averages out.
    """
    a = _branch_rate(p)
    t = np.linspace(0.0, 2 * math.pi * periods / a, n_points)
    slope, _ = np.polyfit(t, free_decoherence(t, p).d, 1)
    return float(slope)
