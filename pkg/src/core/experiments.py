"""
This module defines the ExperimentRunner class, which drives the engines
through the standard protocols: free evolution of a qubit in a mesoscopic
coherent field, echo runs, contour sweeps of the decoherence coefficient,
and Monte-Carlo versus master-equation comparisons.

User-facing times are multiples of the vacuum Rabi period t_R; the runner
converts them to seconds with its UnitSystem before calling the engines.
"""
import logging
import math

import numpy as np
import pandas as pd

from ..models import analytic
from ..models.hamiltonian import Frame, SystemParams, jaynes_cummings
from ..models.hilbert import JointState, Truncation, coherent_state, joint_density
from ..models.lindblad import integrate_master, jump_channels
from ..models.mcwf import Integrator, Protocol, ProtocolKind, TrajectoryConfig, TrajectoryEngine, \
    ensemble_average
from ..models.preset import ParameterPreset
from .database import get_preset_db
from .errors import ConfigParse
from .results import ComparisonReport, ContourGrid, SignalRecord
from .units import TimeUnits, UnitSystem

logger = logging.getLogger(__name__)

# Largest truncation for which the master-equation oracle runs without being forced.
ORACLE_MAX_NMAX = 64
# Norm of the initial coherent field allowed beyond n_max.
INITIAL_LEAK_TOL = 1e-6
# Smallest mean photon number for which the mesoscopic contour map is meaningful.
CONTOUR_MIN_NBAR = 5.0
DEFAULT_SAMPLE_DT = 0.05
DEFAULT_N_TRAJ = 2000


def revival_contrast(times, signal, center: float, width: float) -> float:
    """
    Half the peak-to-peak excursion of a signal inside a window.

    Args:
        times (array_like): Sample times.
        signal (array_like): Signal values (e.g. S^z).
        center (float): Window center, same unit as ``times``.
        width (float): Full window width.

    Returns:
        float: (max - min)/2 inside [center - width/2, center + width/2]; 0 if the
               window holds no sample.
    """
    times = np.asarray(times, dtype=float)
    signal = np.asarray(signal, dtype=float)
    window = np.abs(times - center) <= 0.5 * width
    if not np.any(window):
        return 0.0
    return 0.5 * float(signal[window].max() - signal[window].min())


def z_scores(mc: SignalRecord, me: SignalRecord, observable: str = "sz") -> np.ndarray:
    """
    Pointwise |MC - ME| / stderr. Points with zero standard error score 0 when
    the two signals agree to 1e-12 and infinity otherwise.
    """
    diff = np.abs(mc.mean[observable] - me.mean[observable])
    err = mc.stderr[observable]
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(err > 0, diff / err, np.where(diff <= 1e-12, 0.0, np.inf))
    return z


def preset_table(db_session=None) -> list[ParameterPreset]:
    """
    Lists the parameter presets, in library order.

    Args:
        db_session (Session, optional): Session to query; a library session is
                                        opened when omitted.

    Returns:
        list[ParameterPreset]: The published presets followed by the
                               zero-dissipation preset and any custom ones.
    """
    if db_session is not None:
        return db_session.query(ParameterPreset).order_by(ParameterPreset.id).all()
    db = next(get_preset_db())
    try:
        return db.query(ParameterPreset).order_by(ParameterPreset.id).all()
    finally:
        db.close()


class ExperimentRunner:
    """
    Runs the standard protocols for one configuration of the engines.

    Attributes:
        units (UnitSystem): Time unit (t/t_R) and absolute coupling.
        db_session (Session): Session used to look presets up.
        threads (int): Worker processes for the trajectory ensembles.
        n_max (int | None): Truncation override; defaults to the n̄-based rule.
        dt (float | None): Step override in t_R; defaults to the shared default step.
        method (Integrator): Trajectory propagation scheme.
        chunk_size (int): Trajectories per reduction chunk.
        initial_qubit (str): '+' or '-', the initial qubit state.
    """

    def __init__(self, units: UnitSystem | None = None, db_session=None, threads: int = 1,
                 n_max: int | None = None, dt: float | None = None,
                 method: Integrator | str = Integrator.AB4, chunk_size: int = 64,
                 initial_qubit: str = "+"):
        """
        Initializes the ExperimentRunner.

        Args:
            units (UnitSystem, optional): Defaults to t/t_R with g/2pi = 100 MHz.
            db_session (Session, optional): Preset session; a new one is opened if omitted.
            threads (int): Worker processes for trajectory ensembles.
            n_max (int, optional): Truncation override.
            dt (float, optional): Integration step override, in t_R.
            method (Integrator | str): 'ab4' or 'rk4'.
            chunk_size (int): Trajectories per reduction chunk.
            initial_qubit (str): '+' (excited, default) or '-'.
        """
        if initial_qubit not in ("+", "-"):
            raise ConfigParse(f"initial qubit must be '+' or '-', got {initial_qubit!r}", field="initial_qubit")
        self.units = units or UnitSystem(TimeUnits.RabiPeriods)
        # a library session opened here is closed by close(); a caller's session is left alone
        self._db_source = None
        if db_session is None:
            self._db_source = get_preset_db()
            db_session = next(self._db_source)
        self.db_session = db_session
        self.threads = max(1, int(threads))
        self.n_max = n_max
        self.dt = dt
        self.method = Integrator(method)
        self.chunk_size = chunk_size
        self.initial_qubit = initial_qubit

    def close(self):
        """Closes the preset session if this runner opened it."""
        if self._db_source is not None:
            self._db_source.close()
            self._db_source = None

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()

    def get_preset(self, preset: ParameterPreset | str) -> ParameterPreset:
        """
        Resolves a preset name.

        Raises:
            ConfigParse: If no preset has that name; the message lists the valid names.
        """
        if isinstance(preset, ParameterPreset):
            return preset
        found = self.db_session.query(ParameterPreset).filter_by(name=preset).first()
        if found is None:
            names = ", ".join(p.name for p in preset_table(self.db_session))
            raise ConfigParse(f"unknown preset {preset!r}; valid names: {names}", field="preset")
        return found

    def add_preset(self, preset: ParameterPreset) -> ParameterPreset:
        """Adds a custom preset to the session."""
        self.db_session.add(preset)
        self.db_session.commit()
        return preset

    def _truncation(self, nbar: float) -> Truncation:
        return Truncation(self.n_max) if self.n_max else Truncation.for_nbar(nbar)

    def _initial_state(self, nbar: float, trunc: Truncation) -> JointState:
        field, leakage = coherent_state(math.sqrt(nbar), trunc, leak_tol=INITIAL_LEAK_TOL, strict=False)
        qubit = np.array([1.0, 0.0]) if self.initial_qubit == "+" else np.array([0.0, 1.0])
        return JointState(np.kron(qubit, field), trunc, leakage)

    def _config(self, params: SystemParams, trunc: Truncation, protocol: Protocol,
                n_traj: int, seed: int) -> TrajectoryConfig:
        return TrajectoryConfig(
            seed=seed,
            n_traj=n_traj,
            params=params,
            trunc=trunc,
            initial=self._initial_state(params.nbar, trunc),
            protocol=protocol,
            dt=self.units.to_seconds(self.dt) if self.dt else None,
            method=self.method,
            chunk_size=self.chunk_size,
        )

    def _metadata(self, preset: ParameterPreset, cfg: TrajectoryConfig, engine: TrajectoryEngine) -> dict:
        p = cfg.params
        window = analytic.validity_window(p)
        return {
            "preset": preset.to_dict(),
            "nbar": p.nbar,
            "n_traj": cfg.n_traj,
            "seed": cfg.seed,
            "n_max": cfg.trunc.n_max,
            "leakage": cfg.initial.leakage,
            "initial_qubit": self.initial_qubit,
            "g_over_2pi_hz": self.units.g_over_2pi_hz,
            "rabi_period_s": p.rabi_period,
            "dt_s": engine.dt,
            "sample_every": engine.sample_every,
            "method": cfg.method.value,
            "validity_window_tR": None if math.isinf(window) else window / p.rabi_period,
        }

    def _oracle(self, cfg: TrajectoryConfig, engine: TrajectoryEngine):
        H = jaynes_cummings(cfg.params, cfg.trunc, Frame.ROTATING)
        return integrate_master(joint_density(cfg.initial), H, jump_channels(cfg.params, cfg.trunc),
                                engine.time_grid(), sample_every=engine.sample_every)

    def _report(self, mc: SignalRecord, signal: analytic.RabiSignal, p: SystemParams,
                metadata: dict) -> ComparisonReport:
        hi, lo = signal.sz_envelope
        sz = mc.mean["sz"]
        metrics = {
            "envelope_excess": float(max(np.max(sz - hi), np.max(lo - sz))),
            "jump_counts": dict(mc.jump_counts),
        }
        return ComparisonReport(monte_carlo=mc, analytic_signal=signal.sz, envelope_hi=hi, envelope_lo=lo,
                                rabi_period=p.rabi_period, metrics=metrics, metadata=metadata)

    def run_free_evolution(self, preset: ParameterPreset | str, nbar: float, n_traj: int = DEFAULT_N_TRAJ,
                           t_end: float = 8.0, seed: int = 0, with_oracle: bool = False,
                           force_oracle: bool = False, sample_dt: float = DEFAULT_SAMPLE_DT) -> ComparisonReport:
        """
        Free evolution of |+> ⊗ |alpha = sqrt(n̄)> compared with the analytic signal.

        Args:
            preset (ParameterPreset | str): Dissipation preset or its name.
            nbar (float): Mean photon number, > 0.
            n_traj (int): Number of trajectories.
            t_end (float): Final time in t_R.
            seed (int): Base seed.
            with_oracle (bool): Also integrate the master equation.
            force_oracle (bool): Run the oracle even above n_max = 64.
            sample_dt (float): Sampling interval in t_R.

        Returns:
            ComparisonReport: Monte-Carlo, analytic and optional master-equation signals.
        """
        preset = self.get_preset(preset)
        params = preset.to_params(self.units, nbar)
        trunc = self._truncation(nbar)
        protocol = Protocol.free(self.units.to_seconds(t_end), self.units.to_seconds(sample_dt))
        cfg = self._config(params, trunc, protocol, n_traj, seed)
        engine = TrajectoryEngine(cfg)
        logger.info("free evolution: preset %s, n̄=%g, n_max=%d, %d trajectories, %d steps",
                    preset.name, nbar, trunc.n_max, n_traj, engine.n_steps)

        mc = ensemble_average(cfg, threads=self.threads)
        signal = analytic.rabi_signal(mc.times, params, None, trunc)
        report = self._report(mc, signal, params, self._metadata(preset, cfg, engine))

        t_R = params.rabi_period
        center = 2 * t_R * math.sqrt(nbar)
        report.metrics["revival_contrast_mc"] = revival_contrast(mc.times, mc.mean["sz"], center, t_R)
        report.metrics["revival_contrast_analytic"] = revival_contrast(mc.times, signal.sz, center, t_R)
        report.metrics["decoherence_rate"] = analytic.decoherence_rate(params)

        if with_oracle:
            if trunc.n_max > ORACLE_MAX_NMAX and not force_oracle:
                logger.warning("master-equation oracle disabled for n_max=%d > %d; force it to run anyway",
                               trunc.n_max, ORACLE_MAX_NMAX)
                report.metadata["oracle"] = "skipped"
            else:
                result = self._oracle(cfg, engine)
                report.master_equation = result.record
                z = z_scores(mc, result.record)
                report.metrics["z_max"] = float(np.max(z))
                report.metrics["z_fraction_below_5"] = float(np.mean(z < 5))
                report.metadata["oracle"] = "run"
                report.metadata["max_trace_drift"] = result.max_trace_drift
                report.metadata["max_herm_drift"] = result.max_herm_drift
        return report

    def run_compare(self, preset: ParameterPreset | str, nbar: float, n_traj: int = DEFAULT_N_TRAJ,
                    t_end: float = 5.0, seed: int = 0, sample_dt: float = DEFAULT_SAMPLE_DT) -> ComparisonReport:
        """Free evolution with the master-equation oracle forced on."""
        return self.run_free_evolution(preset, nbar, n_traj, t_end, seed, with_oracle=True,
                                       force_oracle=True, sample_dt=sample_dt)

    def run_echo(self, preset: ParameterPreset | str, nbar: float, t_pi: float, n_traj: int = DEFAULT_N_TRAJ,
                 t_end: float | None = None, seed: int = 0, sample_dt: float = DEFAULT_SAMPLE_DT) -> ComparisonReport:
        """
        Echo protocol: a sigma_z pulse at t_pi induces a revival at 2 t_pi.

        Args:
            preset (ParameterPreset | str): Dissipation preset or its name.
            nbar (float): Mean photon number, > 0.
            t_pi (float): Pulse time in t_R.
            n_traj (int): Number of trajectories.
            t_end (float, optional): Final time in t_R; defaults to 2 t_pi + 1.
            seed (int): Base seed.
            sample_dt (float): Sampling interval in t_R.

        Returns:
            ComparisonReport: Signals plus the induced-revival contrasts.

        Raises:
            EchoOrdering: If t_pi is not inside (0, t_end).
        """
        preset = self.get_preset(preset)
        params = preset.to_params(self.units, nbar)
        trunc = self._truncation(nbar)
        t_end = 2 * t_pi + 1.0 if t_end is None else t_end
        protocol = Protocol.echo(self.units.to_seconds(t_pi), self.units.to_seconds(t_end),
                                 self.units.to_seconds(sample_dt))
        cfg = self._config(params, trunc, protocol, n_traj, seed)
        engine = TrajectoryEngine(cfg)
        logger.info("echo: preset %s, n̄=%g, t_pi=%g t_R, %d trajectories", preset.name, nbar, t_pi, n_traj)

        mc = ensemble_average(cfg, threads=self.threads)
        pulse = engine.pulse_step * engine.dt
        signal = analytic.rabi_signal(mc.times, params, Protocol.echo(pulse, protocol.t_end, protocol.sample_dt),
                                      trunc)
        metadata = self._metadata(preset, cfg, engine)
        metadata["t_pi_tR"] = pulse / params.rabi_period
        report = self._report(mc, signal, params, metadata)

        t_R = params.rabi_period
        report.metrics["induced_revival_contrast_mc"] = revival_contrast(mc.times, mc.mean["sz"], 2 * pulse, t_R)
        report.metrics["induced_revival_contrast_analytic"] = revival_contrast(mc.times, signal.sz, 2 * pulse, t_R)
        if 2 * pulse <= protocol.t_end:
            factor = analytic.echo_decoherence(pulse, 2 * pulse, params, with_phase=False)
            report.metrics["echo_decoherence_modulus"] = float(factor.modulus)
        return report

    def contour_sweep(self, preset: ParameterPreset | str, nbar_values, t_values,
                      protocol: ProtocolKind | str = ProtocolKind.FREE) -> ContourGrid:
        """
        Evaluates the effective decoherence coefficient on an (n̄, t/t_R) grid.

        Args:
            preset (ParameterPreset | str): Dissipation preset or its name.
            nbar_values (array_like): Mean photon numbers, each >= 5.
            t_values (array_like): Times in t_R.
            protocol (ProtocolKind | str): 'free' gives |F(t)|, 'echo' gives |F(t/2, t)|.

        Returns:
            ContourGrid: Long-format grid with the cat-preparation (t = t_R sqrt(n̄))
                         and first-revival (t = 2 t_R sqrt(n̄)) loci flagged.

        Raises:
            ConfigParse: If some n̄ is below 5.
        """
        preset = self.get_preset(preset)
        protocol = ProtocolKind(protocol)
        nbar_values = np.asarray(nbar_values, dtype=float)
        t_values = np.asarray(t_values, dtype=float)
        if np.any(nbar_values < CONTOUR_MIN_NBAR):
            raise ConfigParse(f"contour maps need n̄ >= {CONTOUR_MIN_NBAR:g}", field="nbar")

        rows = []
        for nbar in nbar_values:
            params = preset.to_params(self.units, nbar)
            contrast = analytic.contrast_coefficient(self.units.to_seconds(t_values), nbar, params, protocol)
            cat = np.zeros(len(t_values), dtype=bool)
            revival = np.zeros(len(t_values), dtype=bool)
            cat[np.argmin(np.abs(t_values - math.sqrt(nbar)))] = True
            revival[np.argmin(np.abs(t_values - 2 * math.sqrt(nbar)))] = True
            rows.append(pd.DataFrame({
                "nbar": nbar,
                "t_over_tR": t_values,
                "contrast": contrast,
                "cat_locus": cat,
                "revival_locus": revival,
            }))
        logger.info("contour sweep: preset %s, %d x %d points", preset.name, len(nbar_values), len(t_values))
        metadata = {
            "preset": preset.to_dict(),
            "protocol": protocol.value,
            "nbar_range": [float(nbar_values.min()), float(nbar_values.max())],
            "t_range_tR": [float(t_values.min()), float(t_values.max())],
            "cubic_coefficient": analytic.cubic_contour_coefficient(self.units.g / preset.g_over_kappa,
                                                                    self.units.g),
        }
        return ContourGrid(frame=pd.concat(rows, ignore_index=True), metadata=metadata)


def run_free_evolution(preset, nbar: float, n_traj: int, t_end: float, seed: int,
                       with_oracle: bool = False, **options) -> ComparisonReport:
    """Module-level shortcut for :meth:`ExperimentRunner.run_free_evolution`."""
    with ExperimentRunner(**options) as runner:
        return runner.run_free_evolution(preset, nbar, n_traj, t_end, seed, with_oracle)


def run_echo(preset, nbar: float, t_pi: float, n_traj: int, t_end: float, seed: int, **options) -> ComparisonReport:
    """Module-level shortcut for :meth:`ExperimentRunner.run_echo`."""
    with ExperimentRunner(**options) as runner:
        return runner.run_echo(preset, nbar, t_pi, n_traj, t_end, seed)


def contour_sweep(preset, nbar_range, t_range, protocol: ProtocolKind | str = ProtocolKind.FREE,
                  **options) -> ContourGrid:
    """Module-level shortcut for :meth:`ExperimentRunner.contour_sweep`."""
    with ExperimentRunner(**options) as runner:
        return runner.contour_sweep(preset, nbar_range, t_range, protocol)
