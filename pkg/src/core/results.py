"""
This module defines the result containers passed from the engines to the
experiment drivers and the serializers: the per-time observable record of a
simulation, the free/echo comparison report, and the contour grid.
"""
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import pandas as pd


@dataclass
class SignalRecord:
    """
    Time series of observable averages with their statistical errors.

    A master-equation run produces a record with ``n_traj = 1`` and zero errors;
    a Monte-Carlo ensemble fills ``stderr`` with the standard error of the mean.

    Attributes:
        times (np.ndarray): Sample times in seconds.
        mean (dict[str, np.ndarray]): Observable name -> averaged values.
        stderr (dict[str, np.ndarray]): Observable name -> standard error of the mean.
        n_traj (int): Number of trajectories averaged.
        jump_counts (dict[str, int]): Channel kind -> total number of jumps.
    """
    times: np.ndarray
    mean: dict[str, np.ndarray]
    stderr: dict[str, np.ndarray] = field(default_factory=dict)
    n_traj: int = 1
    jump_counts: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        for name, values in self.mean.items():
            if len(values) != len(self.times):
                raise ValueError(f"observable '{name}' has {len(values)} samples for {len(self.times)} times")
            self.stderr.setdefault(name, np.zeros(len(self.times)))
        for name, err in self.stderr.items():
            if len(err) != len(self.times):
                raise ValueError(f"stderr of '{name}' has wrong length")
            if np.any(np.asarray(err) < 0):
                raise ValueError(f"stderr of '{name}' is negative")

    @property
    def observables(self) -> list[str]:
        """list[str]: Names of the recorded observables."""
        return list(self.mean)


@dataclass
class ComparisonReport:
    """
    Side-by-side Monte-Carlo, master-equation and analytic Rabi signals.

    All signals are expressed as the qubit polarization S^z = 2P(+) - 1 on the
    shared time grid of the Monte-Carlo record.

    Attributes:
        monte_carlo (SignalRecord): Ensemble averages ("sz", "p_plus", "n_photon").
        analytic_signal (np.ndarray): Closed-form S^z(t).
        envelope_hi (np.ndarray): Upper analytic envelope of S^z.
        envelope_lo (np.ndarray): Lower analytic envelope of S^z.
        rabi_period (float): t_R in seconds, used for the dimensionless time axis.
        master_equation (SignalRecord | None): Master-equation oracle, if it was run.
        metrics (dict[str, Any]): Agreement metrics (envelope excess, z-scores, contrasts).
        metadata (dict[str, Any]): Run metadata (truncation, leakage, drifts, validity window).
    """
    monte_carlo: SignalRecord
    analytic_signal: np.ndarray
    envelope_hi: np.ndarray
    envelope_lo: np.ndarray
    rabi_period: float
    master_equation: SignalRecord | None = None
    metrics: dict[str, Any] = field(default_factory=dict)
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        """np.ndarray: The shared time grid in seconds."""
        return self.monte_carlo.times

    def to_frame(self) -> pd.DataFrame:
        """
        Lays the report out in the output column order.

        Returns:
            pd.DataFrame: Columns t_over_tR, sz_mc, sz_stderr, p_plus_mc,
                          sz_analytic, env_hi, env_lo and, when available, sz_me.
        """
        mc = self.monte_carlo
        frame = pd.DataFrame({
            't_over_tR': mc.times / self.rabi_period,
            'sz_mc': mc.mean['sz'],
            'sz_stderr': mc.stderr['sz'],
            'p_plus_mc': mc.mean['p_plus'],
            'sz_analytic': self.analytic_signal,
            'env_hi': self.envelope_hi,
            'env_lo': self.envelope_lo,
        })
        if self.master_equation is not None:
            frame['sz_me'] = self.master_equation.mean['sz']
        return frame


@dataclass
class ContourGrid:
    """
    Effective decoherence coefficient sampled on an (n̄, t/t_R) grid.

    Attributes:
        frame (pd.DataFrame): Long-format table with columns nbar, t_over_tR,
                              contrast, cat_locus and revival_locus.
        metadata (dict[str, Any]): Preset name, protocol and grid description.
    """
    frame: pd.DataFrame
    metadata: dict[str, Any] = field(default_factory=dict)

    def pivot(self) -> pd.DataFrame:
        """
        Reshapes the grid to a matrix indexed by n̄ with one column per time.

        Returns:
            pd.DataFrame: The contrast matrix.
        """
        return self.frame.pivot(index='nbar', columns='t_over_tR', values='contrast')
