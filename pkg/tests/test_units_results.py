import math

import numpy as np
import pandas as pd
import pytest

from src.core.results import ComparisonReport, ContourGrid, SignalRecord
from src.core.units import TimeUnits, UnitSystem


def test_rabi_period_conversions(units):
    """t_R = 1/(g/2pi) = 10 ns at the default coupling."""
    assert units.rabi_period == pytest.approx(1e-8)
    assert units.to_seconds(2.5) == pytest.approx(2.5e-8)
    np.testing.assert_allclose(units.from_seconds(np.array([1e-8, 3e-8])), [1.0, 3.0])


def test_seconds_system_is_identity():
    """With SI display units times pass through unchanged."""
    si = UnitSystem(TimeUnits.Seconds)
    assert si.to_seconds(3e-7) == 3e-7
    assert si.get_display_unit("time") == "s"
    assert UnitSystem().get_display_unit("time") == "t/t_R"


def test_rate_ratios(units):
    """g/rate ratios convert both ways; inf means no channel."""
    assert units.rate_from_ratio(100) == pytest.approx(units.g / 100)
    assert units.rate_from_ratio(math.inf) == 0.0
    assert units.ratio_from_rate(0.0) == math.inf
    assert units.ratio_from_rate(units.rate_from_ratio(215)) == pytest.approx(215)
    with pytest.raises(ValueError):
        units.rate_from_ratio(0)


def test_unit_system_rejects_bad_coupling():
    with pytest.raises(ValueError):
        UnitSystem(g_over_2pi_hz=-1.0)


def test_signal_record_fills_missing_errors():
    """Observables without an error get zeros."""
    record = SignalRecord(times=[0, 1, 2], mean={"sz": np.array([1.0, 0.0, -1.0])})
    np.testing.assert_array_equal(record.stderr["sz"], 0.0)
    assert record.observables == ["sz"]


def test_signal_record_validation():
    """Length mismatches and negative errors are rejected."""
    with pytest.raises(ValueError):
        SignalRecord(times=[0, 1], mean={"sz": np.zeros(3)})
    with pytest.raises(ValueError):
        SignalRecord(times=[0, 1], mean={"sz": np.zeros(2)}, stderr={"sz": np.array([0.1, -0.1])})


def test_comparison_report_frame():
    """The frame has the output column order, sz_me only with an oracle."""
    times = np.array([0.0, 1e-8, 2e-8])
    mc = SignalRecord(times, {"sz": np.array([1.0, 0.5, 0.0]), "p_plus": np.array([1.0, 0.75, 0.5])},
                      stderr={"sz": np.array([0.0, 0.1, 0.1]), "p_plus": np.zeros(3)}, n_traj=10)
    report = ComparisonReport(mc, np.array([1.0, 0.4, 0.1]), np.ones(3), -np.ones(3), rabi_period=1e-8)
    frame = report.to_frame()
    assert list(frame.columns) == ["t_over_tR", "sz_mc", "sz_stderr", "p_plus_mc", "sz_analytic", "env_hi", "env_lo"]
    np.testing.assert_allclose(frame["t_over_tR"], [0, 1, 2])

    report.master_equation = SignalRecord(times, {"sz": np.array([1.0, 0.45, 0.05])})
    assert report.to_frame().columns[-1] == "sz_me"


def test_contour_pivot():
    """The long table reshapes to an n̄ x t matrix."""
    frame = pd.DataFrame({
        "nbar": [5.0, 5.0, 6.0, 6.0],
        "t_over_tR": [0.0, 1.0, 0.0, 1.0],
        "contrast": [1.0, 0.9, 1.0, 0.8],
    })
    matrix = ContourGrid(frame).pivot()
    assert matrix.shape == (2, 2)
    assert matrix.loc[6.0, 1.0] == pytest.approx(0.8)
