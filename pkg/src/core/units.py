"""
This module defines the unit handling for the simulator.

All engines work in SI seconds and angular frequencies (rad/s, with hbar = 1).
User-facing times are expressed in units of the vacuum Rabi period
t_R = 2*pi/g, and dissipation rates are given as ratios g/rate, as in the
published parameter tables. ``UnitSystem`` converts between the two.
"""
import math
from enum import Enum

# Reference coupling g/2pi used to turn ratios into absolute rates.
DEFAULT_G_OVER_2PI_HZ = 100e6


class TimeUnits(Enum):
    """
    Enumeration for the available time units.
    """
    Seconds = 0
    RabiPeriods = 1


class UnitSystem:
    """
    Converts times and rates between the display units and SI units.

    Attributes:
        system (TimeUnits): The unit used for user-facing times.
        g_over_2pi_hz (float): The coupling g/2pi in Hz that fixes the absolute scale.
    """

    # quantity: (si_unit, display_unit)
    _LABELS = {
        'time': ('s', 't/t_R'),
        'rate': ('1/s', 'g/rate'),
    }

    def __init__(self, system: TimeUnits = TimeUnits.RabiPeriods,
                 g_over_2pi_hz: float = DEFAULT_G_OVER_2PI_HZ):
        """
        Initializes the UnitSystem.

        Args:
            system (TimeUnits): The unit for user-facing times.
            g_over_2pi_hz (float): Coupling frequency g/2pi in Hz. Must be positive.
        """
        if not g_over_2pi_hz > 0:
            raise ValueError(f"g/2pi must be positive, got {g_over_2pi_hz}")
        self.system = system
        self.g_over_2pi_hz = float(g_over_2pi_hz)

    @property
    def g(self) -> float:
        """float: The coupling as an angular frequency (rad/s)."""
        return 2.0 * math.pi * self.g_over_2pi_hz

    @property
    def rabi_period(self) -> float:
        """float: The vacuum Rabi period t_R = 2*pi/g in seconds."""
        return 2.0 * math.pi / self.g

    def to_seconds(self, value):
        """
        Converts a time from the display unit to seconds.

        Args:
            value: A scalar or numpy array of times in the display unit.

        Returns:
            The time(s) in seconds.
        """
        if self.system == TimeUnits.RabiPeriods:
            return value * self.rabi_period
        return value

    def from_seconds(self, value):
        """
        Converts a time in seconds to the display unit.

        Args:
            value: A scalar or numpy array of times in seconds.

        Returns:
            The time(s) in the display unit.
        """
        if self.system == TimeUnits.RabiPeriods:
            return value / self.rabi_period
        return value

    def rate_from_ratio(self, ratio: float) -> float:
        """
        Converts a ratio g/rate into an absolute rate in 1/s.

        An infinite ratio means the channel is absent and maps to a zero rate.

        Args:
            ratio (float): The ratio g/rate. Must be positive or infinite.

        Returns:
            float: The rate in 1/s.
        """
        if math.isinf(ratio):
            return 0.0
        if not ratio > 0:
            raise ValueError(f"rate ratio must be positive or infinite, got {ratio}")
        return self.g / ratio

    def ratio_from_rate(self, rate: float) -> float:
        """
        Converts an absolute rate in 1/s back into the ratio g/rate.

        Args:
            rate (float): The rate in 1/s. Zero maps to an infinite ratio.

        Returns:
            float: The ratio g/rate.
        """
        if rate == 0:
            return math.inf
        return self.g / rate

    def get_display_unit(self, quantity: str) -> str:
        """
        Gets the display unit label for a given quantity type.

        Args:
            quantity (str): Either 'time' or 'rate'.

        Returns:
            str: The unit label.
        """
        if quantity == 'time' and self.system == TimeUnits.Seconds:
            return self._LABELS[quantity][0]
        return self._LABELS[quantity][1]
