"""
This module defines the SQLAlchemy model for dissipation parameter presets.

A preset stores the three dissipation rates of an experimental platform as
ratios to the coupling g, the form in which they are usually published.
"""
import math

from sqlalchemy import Column, Float, Integer, String

from ..core.database import Base
from ..core.units import UnitSystem
from .hamiltonian import SystemParams


class ParameterPreset(Base):
    """
    Represents a named set of dissipation ratios in the database.

    This SQLAlchemy model maps to the 'parameter_presets' table. An infinite
    ratio means the corresponding channel is absent.

    Attributes:
        id (int): The primary key.
        name (str): Identifier used on the command line (e.g. "circuit-qed-2").
        label (str): Display name (e.g. "Circuit QED (2)").
        g_over_kappa (float): g / kappa.
        g_over_gamma1 (float): g / gamma1.
        g_over_gamma_phi (float): g / gamma_phi.
        reference (str): Where the values come from.
    """
    __tablename__ = 'parameter_presets'

    id = Column(Integer, primary_key=True)
    name = Column(String, unique=True, nullable=False)
    label = Column(String)
    g_over_kappa = Column(Float, nullable=False)
    g_over_gamma1 = Column(Float, nullable=False)
    g_over_gamma_phi = Column(Float, nullable=False)
    reference = Column(String, default="")

    def to_params(self, units: UnitSystem, nbar: float, detuning: float = 0.0) -> SystemParams:
        """
        Converts the ratios into absolute rates at the coupling of ``units``.

        Args:
            units (UnitSystem): Fixes g.
            nbar (float): Mean photon number of the initial field.
            detuning (float): Qubit-cavity detuning in rad/s.

        Returns:
            SystemParams: Rotating-frame parameters.
        """
        return SystemParams(
            g=units.g,
            omega_qb=detuning,
            kappa=units.rate_from_ratio(self.g_over_kappa),
            gamma1=units.rate_from_ratio(self.g_over_gamma1),
            gamma_phi=units.rate_from_ratio(self.g_over_gamma_phi),
            nbar=nbar,
        )

    def to_dict(self) -> dict:
        """Serializable form; infinite ratios are written as the string "inf"."""
        def ratio(value):
            return "inf" if math.isinf(value) else value

        return {
            "name": self.name,
            "label": self.label,
            "g_over_kappa": ratio(self.g_over_kappa),
            "g_over_gamma1": ratio(self.g_over_gamma1),
            "g_over_gamma_phi": ratio(self.g_over_gamma_phi),
            "reference": self.reference or "",
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ParameterPreset":
        """Inverse of :meth:`to_dict`; raises ValueError on a non-positive ratio."""
        ratios = {}
        for key in ("g_over_kappa", "g_over_gamma1", "g_over_gamma_phi"):
            value = float(data[key])
            if not (value > 0 or math.isinf(value)):
                raise ValueError(f"{key} must be positive or inf, got {data[key]!r}")
            ratios[key] = value
        return cls(name=data["name"], label=data.get("label", data["name"]),
                   reference=data.get("reference", ""), **ratios)

    def __repr__(self):
        """Provides a developer-friendly string representation of the object."""
        return (f"<ParameterPreset(name='{self.name}', g/kappa={self.g_over_kappa}, "
                f"g/gamma1={self.g_over_gamma1}, g/gamma_phi={self.g_over_gamma_phi})>")
