"""
This module implements the quantum-jump (Monte-Carlo wave function) engine.

Between jumps a trajectory follows d psi/dt = -i H_eff psi with the
non-Hermitian effective Hamiltonian, integrated with a fourth-order
Adams-Bashforth scheme bootstrapped by Runge-Kutta steps. A jump fires when
the squared norm falls to a uniform random threshold; the jump instant is
located inside the step by root finding, a channel is drawn with probability
proportional to <L_j^dag L_j>, and the state is renormalized.

Every trajectory draws from its own counter-based random stream keyed by
(seed, trajectory index), so an ensemble gives bit-identical results for any
number of workers.
"""
import logging
import math
from collections import Counter, deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from itertools import repeat

import numpy as np
from scipy.optimize import brentq

from ..core.errors import EchoOrdering, MaxJumpsExceeded, NullJump, QJCError, StepUnstable, \
    TrajectoryFailed
from ..core.results import SignalRecord
from .hamiltonian import Frame, OperatorMatrix, SystemParams, effective_nonhermitian, jaynes_cummings
from .hilbert import JointState, Truncation
from .lindblad import JumpChannel, TimeGrid, default_time_step, jump_channels

logger = logging.getLogger(__name__)

NORM_GROWTH_TOL = 1e-8
NULL_JUMP_TOL = 1e-30
JUMP_TIME_RTOL = 1e-6
MAX_JUMPS = 10 ** 6


class ProtocolKind(str, Enum):
    """
    Enumeration of the supported protocols.
    """
    FREE = "free"
    ECHO = "echo"


class Integrator(str, Enum):
    """
    Propagation scheme between jumps.
    """
    AB4 = "ab4"
    RK4 = "rk4"


@dataclass(frozen=True)
class Protocol:
    """
    Time schedule of a simulation.

    Attributes:
        kind (ProtocolKind): Free evolution or echo.
        t_end (float): Final time in seconds.
        sample_dt (float): Interval between recorded samples in seconds.
        t_pi (float | None): Echo pulse time in seconds, required for echo.
    """
    kind: ProtocolKind
    t_end: float
    sample_dt: float
    t_pi: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ProtocolKind(self.kind))
        if not self.t_end > 0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if not 0 < self.sample_dt <= self.t_end:
            raise ValueError(f"sample_dt must lie in (0, t_end], got {self.sample_dt}")
        if self.kind == ProtocolKind.ECHO:
            if self.t_pi is None or not 0 < self.t_pi < self.t_end:
                raise EchoOrdering(f"echo needs 0 < t_pi < t_end, got t_pi={self.t_pi}, t_end={self.t_end}")
        elif self.t_pi is not None:
            raise ValueError("t_pi is only meaningful for the echo protocol")

    @classmethod
    def free(cls, t_end: float, sample_dt: float) -> "Protocol":
        """Free evolution up to t_end."""
        return cls(ProtocolKind.FREE, t_end, sample_dt)

    @classmethod
    def echo(cls, t_pi: float, t_end: float, sample_dt: float) -> "Protocol":
        """Free evolution with an instantaneous sigma_z pulse at t_pi."""
        return cls(ProtocolKind.ECHO, t_end, sample_dt, t_pi)


@dataclass(frozen=True, eq=False)
class TrajectoryConfig:
    """
    Everything needed to run an ensemble of trajectories.

    Attributes:
        seed (int): 64-bit base seed.
        n_traj (int): Number of trajectories.
        params (SystemParams): System parameters (dissipation rates build the channels).
        trunc (Truncation): The truncation.
        initial (JointState): Initial state, normalized.
        protocol (Protocol): Time schedule.
        dt (float | None): Requested step; defaults to the shared default step.
        method (Integrator): AB4 (default) or RK4 propagation.
        max_jumps (int): Per-trajectory jump guard.
        chunk_size (int): Trajectories per reduction chunk; fixes the summation order.
        hamiltonian (OperatorMatrix | None): Hamiltonian override; defaults to the
                                             rotating-frame Jaynes-Cummings Hamiltonian.
    """
    seed: int
    n_traj: int
    params: SystemParams
    trunc: Truncation
    initial: JointState
    protocol: Protocol
    dt: float | None = None
    method: Integrator = Integrator.AB4
    max_jumps: int = MAX_JUMPS
    chunk_size: int = 64
    hamiltonian: OperatorMatrix | None = None

    def __post_init__(self):
        object.__setattr__(self, "method", Integrator(self.method))
        if self.n_traj < 1:
            raise ValueError(f"n_traj must be >= 1, got {self.n_traj}")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.chunk_size < 1:
            raise ValueError(f"chunk_size must be >= 1, got {self.chunk_size}")
        if self.initial.truncation != self.trunc:
            raise ValueError("initial state and config use different truncations")


@dataclass
class TrajectoryResult:
    """
    Output of one trajectory.

    Attributes:
        times (np.ndarray): Sample times in seconds.
        values (dict[str, np.ndarray]): Observable name -> normalized expectation per sample.
        jumps (list[tuple[float, str]]): (time, channel kind) for every jump, in order.
    """
    times: np.ndarray
    values: dict[str, np.ndarray]
    jumps: list[tuple[float, str]] = field(default_factory=list)

    def jump_times(self, kind: str) -> list[float]:
        """Times of the jumps through one channel kind."""
        return [t for t, k in self.jumps if k == kind]


def trajectory_rng(seed: int, traj_index: int) -> np.random.Generator:
    """
    Counter-based random stream for one trajectory, keyed by (seed, traj_index).
    Successive draws advance the Philox counter.
    """
    return np.random.Generator(np.random.Philox(key=np.array([seed, traj_index], dtype=np.uint64)))


def _rk4(A: np.ndarray, y: np.ndarray, h: float, k1: np.ndarray | None = None) -> np.ndarray:
    if k1 is None:
        k1 = A @ y
    k2 = A @ (y + 0.5 * h * k1)
    k3 = A @ (y + 0.5 * h * k2)
    k4 = A @ (y + h * k3)
    return y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _norm2(y: np.ndarray) -> float:
    return float(np.vdot(y, y).real)


def _multistep(A: np.ndarray, y: np.ndarray, dt: float, history: deque, method: Integrator) -> np.ndarray:
    """One step of AB4 (RK4 while fewer than three past derivatives are known)."""
    f = A @ y
    if method == Integrator.RK4 or len(history) < 3:
        y_new = _rk4(A, y, dt, k1=f)
    else:
        f1, f2, f3 = history[-1], history[-2], history[-3]
        y_new = y + (dt / 24.0) * (55 * f - 59 * f1 + 37 * f2 - 9 * f3)
    history.append(f)
    return y_new


def _check_growth(before: float, after: float, t: float):
    if after > before * (1 + NORM_GROWTH_TOL) ** 2:
        raise StepUnstable(
            f"norm grew by {math.sqrt(after / before) - 1:.3e} in one step at t={t:.6g} s; reduce dt"
        )


def evolve_no_jump(psi: JointState, H_eff: OperatorMatrix, dt: float, history: deque,
                   method: Integrator = Integrator.AB4) -> JointState:
    """
    Advances psi by one step of d psi/dt = -i H_eff psi without jumps.

    Args:
        psi (JointState): Current (unnormalized) state.
        H_eff (OperatorMatrix): Effective non-Hermitian Hamiltonian.
        dt (float): Step in seconds.
        history (deque): Past derivatives, most recent last; updated in place.
                         An empty history bootstraps with Runge-Kutta steps.
        method (Integrator): AB4 or RK4.

    Returns:
        JointState: The propagated, unnormalized state.

    Raises:
        StepUnstable: If the norm grows by more than 1e-8 relative in the step.
    """
    A = -1j * H_eff.entries
    y = psi.amplitudes
    y_new = _multistep(A, y, dt, history, Integrator(method))
    _check_growth(_norm2(y), _norm2(y_new), dt)
    return JointState(y_new, psi.truncation, psi.leakage)


def _jump(y: np.ndarray, channel: JumpChannel) -> np.ndarray:
    rate = channel.jump_rate(y)
    if rate < NULL_JUMP_TOL:
        raise NullJump(f"{channel.kind.value} jump has probability {rate:.3e} on this state")
    return channel.operator.entries @ y / math.sqrt(rate)


def apply_jump(psi: JointState, channel: JumpChannel) -> JointState:
    """
    Applies a quantum jump L psi / sqrt(<L^dag L>).

    Raises:
        NullJump: If <L^dag L> < 1e-30, i.e. the channel cannot fire on psi.
    """
    return JointState(_jump(psi.amplitudes, channel), psi.truncation, psi.leakage)


class TrajectoryEngine:
    """
    Precomputed propagator data shared by all trajectories of a config.

    Attributes:
        cfg (TrajectoryConfig): The configuration.
        channels (list[JumpChannel]): Channels with a positive rate.
        h_eff (OperatorMatrix): Effective Hamiltonian.
        dt (float): Integration step, an exact divisor of the sample interval.
        sample_every (int): Integration steps per recorded sample.
        n_steps (int): Total number of integration steps.
        pulse_step (int | None): Step index at which the echo pulse is applied.
    """

    def __init__(self, cfg: TrajectoryConfig):
        self.cfg = cfg
        trunc = cfg.trunc
        H = cfg.hamiltonian or jaynes_cummings(cfg.params, trunc, Frame.ROTATING)
        self.channels = jump_channels(cfg.params, trunc)
        self.h_eff = effective_nonhermitian(H, self.channels)
        self._A = -1j * self.h_eff.entries

        protocol = cfg.protocol
        requested = cfg.dt or default_time_step(cfg.params.g, trunc)
        self.sample_every = max(1, round(protocol.sample_dt / requested))
        self.dt = protocol.sample_dt / self.sample_every
        n_samples = max(1, round(protocol.t_end / protocol.sample_dt))
        if abs(n_samples * protocol.sample_dt - protocol.t_end) > 1e-9 * protocol.t_end:
            logger.warning("t_end %.6g s is not a multiple of sample_dt; running to %.6g s",
                           protocol.t_end, n_samples * protocol.sample_dt)
        self.n_steps = n_samples * self.sample_every
        self.times = protocol.sample_dt * np.arange(n_samples + 1)

        self.pulse_step = None
        if protocol.kind == ProtocolKind.ECHO:
            self.pulse_step = round(protocol.t_pi / self.dt)
            if abs(self.pulse_step * self.dt - protocol.t_pi) > 1e-9 * self.dt:
                logger.warning("echo pulse moved from %.6g s to the grid point %.6g s",
                               protocol.t_pi, self.pulse_step * self.dt)

        levels = trunc.levels
        self._observables = {
            "sz": np.concatenate([np.ones(levels), -np.ones(levels)]),
            "p_plus": np.concatenate([np.ones(levels), np.zeros(levels)]),
            "n_photon": np.tile(np.arange(levels, dtype=float), 2),
        }

    @property
    def observables(self) -> list[str]:
        """list[str]: Names of the recorded observables."""
        return list(self._observables)

    def time_grid(self) -> TimeGrid:
        """Returns the integration grid, for running the master equation on the same points."""
        return TimeGrid(0.0, self.n_steps * self.dt, self.dt)

    def _record(self, y: np.ndarray, values: dict, slot: int):
        weights = np.abs(y) ** 2
        total = weights.sum()
        for name, diag in self._observables.items():
            values[name][slot] = float(weights @ diag) / total

    def _locate(self, start: np.ndarray, h: float, threshold: float) -> float | None:
        """Time in (0, h] at which the RK4-propagated norm reaches the threshold, if it does."""
        def excess(s):
            return _norm2(_rk4(self._A, start, s)) - threshold

        if excess(h) > 0:
            return None
        return brentq(excess, 0.0, h, xtol=JUMP_TIME_RTOL * self.dt)

    def _fire(self, y: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, JumpChannel]:
        rates = np.array([c.jump_rate(y) for c in self.channels])
        total = rates.sum()
        if total < NULL_JUMP_TOL:
            raise NullJump(f"no channel can fire (total rate {total:.3e})")
        channel = self.channels[int(rng.choice(len(rates), p=rates / total))]
        return _jump(y, channel), channel

    def run(self, traj_index: int) -> TrajectoryResult:
        """
        Runs one trajectory.

        Args:
            traj_index (int): Index of the trajectory, which keys its random stream.

        Returns:
            TrajectoryResult: Sampled observables and the jump log.

        Raises:
            StepUnstable: If the propagation is unstable at this step size.
            MaxJumpsExceeded: If the trajectory exceeds ``max_jumps``.
            NullJump: If a jump is drawn through a channel that cannot fire.
        """
        cfg = self.cfg
        rng = trajectory_rng(cfg.seed, traj_index)
        values = {name: np.zeros(len(self.times)) for name in self._observables}
        jumps = []
        history = deque(maxlen=3)
        y = np.array(cfg.initial.amplitudes)
        threshold = rng.random()
        detect = bool(self.channels)
        dt = self.dt
        levels = cfg.trunc.levels

        self._record(y, values, 0)
        for step in range(self.n_steps):
            t = step * dt
            if step == self.pulse_step:
                y = y.copy()
                y[levels:] *= -1
                history.clear()

            before = _norm2(y)
            y_new = _multistep(self._A, y, dt, history, cfg.method)
            after = _norm2(y_new)
            _check_growth(before, after, t)

            if detect and after <= threshold:
                start, remaining, elapsed = y, dt, 0.0
                while True:
                    tau = self._locate(start, remaining, threshold)
                    if tau is None:
                        y_new = _rk4(self._A, start, remaining)
                        break
                    start, channel = self._fire(_rk4(self._A, start, tau), rng)
                    elapsed += tau
                    remaining -= tau
                    jumps.append((t + elapsed, channel.kind.value))
                    if len(jumps) > cfg.max_jumps:
                        raise MaxJumpsExceeded(f"more than {cfg.max_jumps} jumps by t={t + elapsed:.6g} s")
                    threshold = rng.random()
                    if remaining <= JUMP_TIME_RTOL * dt:
                        y_new = start
                        break
                    trial = _rk4(self._A, start, remaining)
                    if _norm2(trial) > threshold:
                        y_new = trial
                        break
                history.clear()
            y = y_new

            if (step + 1) % self.sample_every == 0:
                self._record(y, values, (step + 1) // self.sample_every)

        return TrajectoryResult(times=self.times.copy(), values=values, jumps=jumps)


def sample_trajectory(cfg: TrajectoryConfig, traj_index: int) -> TrajectoryResult:
    """
    Runs the trajectory ``traj_index`` of a configuration.

    Identical (seed, traj_index) pairs give bit-identical results.
    """
    return TrajectoryEngine(cfg).run(traj_index)


@dataclass
class _ChunkSums:
    start: int
    stop: int
    sums: dict[str, np.ndarray]
    squares: dict[str, np.ndarray]
    jump_counts: dict[str, int]


def _run_chunk(cfg: TrajectoryConfig, start: int, stop: int) -> _ChunkSums:
    engine = TrajectoryEngine(cfg)
    sums = {name: np.zeros(len(engine.times)) for name in engine.observables}
    squares = {name: np.zeros(len(engine.times)) for name in engine.observables}
    counts = Counter()
    for index in range(start, stop):
        try:
            result = engine.run(index)
        except QJCError as exc:
            raise TrajectoryFailed(index, cfg.seed, exc) from exc
        for name, v in result.values.items():
            sums[name] += v
            squares[name] += v * v
        counts.update(kind for _, kind in result.jumps)
    return _ChunkSums(start, stop, sums, squares, dict(counts))


def ensemble_average(cfg: TrajectoryConfig, threads: int = 1) -> SignalRecord:
    """
    Averages ``cfg.n_traj`` trajectories.

    Trajectories are split into fixed chunks of ``cfg.chunk_size`` indices;
    per-chunk sums are combined in index order, so the result does not depend
    on the number of workers.

    Args:
        cfg (TrajectoryConfig): The configuration.
        threads (int): Number of worker processes; 1 runs inline.

    Returns:
        SignalRecord: Means and standard errors of sz, p_plus and n_photon, with
                      per-channel jump totals.

    Raises:
        TrajectoryFailed: Wrapping the first engine error, with the trajectory index and seed.
    """
    bounds = [(s, min(s + cfg.chunk_size, cfg.n_traj)) for s in range(0, cfg.n_traj, cfg.chunk_size)]
    starts = [b[0] for b in bounds]
    stops = [b[1] for b in bounds]

    if threads <= 1 or len(bounds) == 1:
        chunks = (_run_chunk(cfg, a, b) for a, b in bounds)
        return _reduce(cfg, chunks)
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return _reduce(cfg, pool.map(_run_chunk, repeat(cfg), starts, stops))


def _reduce(cfg: TrajectoryConfig, chunks) -> SignalRecord:
    sums = squares = None
    counts = Counter()
    for chunk in chunks:
        if sums is None:
            sums = {k: v.copy() for k, v in chunk.sums.items()}
            squares = {k: v.copy() for k, v in chunk.squares.items()}
        else:
            for name in sums:
                sums[name] += chunk.sums[name]
                squares[name] += chunk.squares[name]
        counts.update(chunk.jump_counts)
        logger.info("trajectories %d-%d of %d done", chunk.start, chunk.stop - 1, cfg.n_traj)

    n = cfg.n_traj
    mean, stderr = {}, {}
    for name in sums:
        mean[name] = sums[name] / n
        if n > 1:
            var = np.clip((squares[name] - sums[name] * mean[name]) / (n - 1), 0.0, None)
            stderr[name] = np.sqrt(var / n)
        else:
            stderr[name] = np.zeros_like(mean[name])
    times = TrajectoryEngine(cfg).times
    return SignalRecord(times=times, mean=mean, stderr=stderr, n_traj=n,
                        jump_counts={k: int(v) for k, v in sorted(counts.items())})
