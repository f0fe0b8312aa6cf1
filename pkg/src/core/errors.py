"""
This module defines the exception hierarchy used throughout qjc.

Input problems derive from ``ValueError`` and numerical failures from
``RuntimeError`` so that callers can catch them with the builtin types as
well as with :class:`QJCError`.
"""


class QJCError(Exception):
    """Base class for every error raised by the simulator."""


class TruncationOverflow(QJCError, ValueError):
    """
    Raised when a state does not fit in the truncated Fock space.

    Attributes:
        leakage (float): Norm lost beyond ``n_max`` before renormalization.
        n_max (int): The truncation that was too small.
    """

    def __init__(self, message: str, leakage: float = 0.0, n_max: int = 0):
        super().__init__(message)
        self.leakage = leakage
        self.n_max = n_max


class DimensionMismatch(QJCError, ValueError):
    """Raised when two states or operators live on different spaces."""


class ZeroDetuning(QJCError, ValueError):
    """Raised when a dispersive quantity is requested at zero detuning."""


class EchoOrdering(QJCError, ValueError):
    """Raised when an echo quantity is evaluated before the echo pulse."""


class ConfigParse(QJCError, ValueError):
    """
    Raised when a run configuration cannot be parsed or validated.

    Attributes:
        field (str | None): Name of the offending configuration field.
        line (int | None): Line number in the source file, for syntax errors.
    """

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        where = []
        if field is not None:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.field = field
        self.line = line


class StepUnstable(QJCError, RuntimeError):
    """Raised when an integrator drifts beyond its tolerance (time step too large)."""


class MaxJumpsExceeded(QJCError, RuntimeError):
    """Raised when a single trajectory performs more jumps than allowed."""


class NullJump(QJCError, RuntimeError):
    """Raised when a jump is applied through a channel that cannot fire on the state."""


class TrajectoryFailed(QJCError, RuntimeError):
    """
    Wraps an engine error raised inside one Monte-Carlo trajectory.

    Attributes:
        traj_index (int): Index of the failing trajectory.
        seed (int): Base seed of the ensemble, so the trajectory can be replayed.
        cause (Exception): The original error.
    """

    def __init__(self, traj_index: int, seed: int, cause: Exception):
        super().__init__(
            f"trajectory {traj_index} (seed {seed}) failed: {type(cause).__name__}: {cause}"
        )
        self.traj_index = traj_index
        self.seed = seed
        self.cause = cause

    def __reduce__(self):
        return (TrajectoryFailed, (self.traj_index, self.seed, self.cause))
