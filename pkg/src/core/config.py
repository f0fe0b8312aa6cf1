"""
This module defines the run configuration of the command-line application
and the serializers for its results.

A run is described by a ``RunConfig``: which experiment to run, with which
preset (or explicit rate ratios), photon number, trajectory count and seed.
Times are multiples of the vacuum Rabi period t_R. Configurations round-trip
through JSON; results are written as CSV (full double precision, '\\n' line
endings) or JSON, with a ``<out>.meta.json`` sidecar holding the resolved
configuration and the run metadata.
"""
import json
import math
from dataclasses import asdict, dataclass, fields
from importlib import metadata as importlib_metadata
from pathlib import Path

import numpy as np
import pandas as pd

from ..models.preset import ParameterPreset
from .errors import ConfigParse
from .results import ComparisonReport, ContourGrid

COMMANDS = ("free", "echo", "contour", "compare", "presets")
FORMATS = ("csv", "json")
CSV_FLOAT_FORMAT = "%.17g"


@dataclass
class RunConfig:
    """
    Fully resolved description of one run.

    Attributes:
        command (str): One of free, echo, contour, compare, presets.
        preset (str | None): Preset name; ignored when ``rates`` is given.
        rates (dict | None): Custom ratios g_over_kappa, g_over_gamma1, g_over_gamma_phi.
        nbar (float | None): Mean photon number.
        n_traj (int): Number of trajectories.
        seed (int): Base seed.
        t_end (float): Final time in t_R.
        t_pi (float | None): Echo pulse time in t_R.
        sample_dt (float): Sampling interval in t_R.
        dt (float | None): Integration step override in t_R.
        method (str): Trajectory integrator, 'ab4' or 'rk4'.
        out (str | None): Output path; standard output when None.
        format (str): 'csv' or 'json'.
        with_oracle (bool): Also integrate the master equation.
        n_max (int | None): Truncation override.
        threads (int): Worker processes.
        protocol (str): Contour protocol, 'free' or 'echo'.
        nbar_min (float): Smallest n̄ of a contour sweep.
        nbar_max (float): Largest n̄ of a contour sweep.
        nbar_step (float): n̄ spacing of a contour sweep.
        t_min (float): First time of a contour sweep, in t_R.
        t_max (float): Last time of a contour sweep, in t_R.
        t_points (int): Number of times in a contour sweep.
        g_over_2pi_hz (float): Absolute coupling scale.
        initial_qubit (str): '+' or '-'.
    """
    command: str
    preset: str | None = None
    rates: dict | None = None
    nbar: float | None = None
    n_traj: int = 2000
    seed: int = 0
    t_end: float = 8.0
    t_pi: float | None = None
    sample_dt: float = 0.05
    dt: float | None = None
    method: str = "ab4"
    out: str | None = None
    format: str = "csv"
    with_oracle: bool = False
    n_max: int | None = None
    threads: int = 1
    protocol: str = "free"
    nbar_min: float = 5.0
    nbar_max: float = 30.0
    nbar_step: float = 1.0
    t_min: float = 0.0
    t_max: float = 10.0
    t_points: int = 201
    g_over_2pi_hz: float = 100e6
    initial_qubit: str = "+"

    def validate(self) -> "RunConfig":
        """
        Checks that the fields required by the command are present and consistent.

        Raises:
            ConfigParse: Naming the offending field.
        """
        if self.command not in COMMANDS:
            raise ConfigParse(f"unknown command {self.command!r}; expected one of {', '.join(COMMANDS)}",
                              field="command")
        if self.format not in FORMATS:
            raise ConfigParse(f"format must be csv or json, got {self.format!r}", field="format")
        if self.command == "presets":
            return self
        if self.preset is None and self.rates is None:
            raise ConfigParse("a preset name or explicit rates are required", field="preset")
        if self.rates is not None:
            try:
                ParameterPreset.from_dict({"name": "custom", **self.rates})
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigParse(f"invalid rates: {exc}", field="rates") from exc
        if self.command in ("free", "echo", "compare"):
            if self.nbar is None:
                raise ConfigParse("required for this command", field="nbar")
            if not self.nbar > 0:
                raise ConfigParse(f"must be positive, got {self.nbar}", field="nbar")
            if self.n_traj < 1:
                raise ConfigParse(f"must be >= 1, got {self.n_traj}", field="n_traj")
            if not self.t_end > 0:
                raise ConfigParse(f"must be positive, got {self.t_end}", field="t_end")
            if not 0 < self.sample_dt <= self.t_end:
                raise ConfigParse(f"must lie in (0, t_end], got {self.sample_dt}", field="sample_dt")
            if not 0 <= self.seed < 2 ** 64:
                raise ConfigParse(f"must be a 64-bit unsigned integer, got {self.seed}", field="seed")
            if self.method not in ("ab4", "rk4"):
                raise ConfigParse(f"must be ab4 or rk4, got {self.method!r}", field="method")
        if self.command == "echo":
            if self.t_pi is None:
                raise ConfigParse("required for the echo command", field="t_pi")
            if not 0 < self.t_pi < self.t_end:
                raise ConfigParse(f"must lie in (0, t_end), got {self.t_pi}", field="t_pi")
        if self.command == "contour":
            if self.protocol not in ("free", "echo"):
                raise ConfigParse(f"must be free or echo, got {self.protocol!r}", field="protocol")
            if self.nbar_min < 5:
                raise ConfigParse(f"contour maps need n̄ >= 5, got {self.nbar_min}", field="nbar_min")
            if self.nbar_max < self.nbar_min:
                raise ConfigParse("must not be below nbar_min", field="nbar_max")
            if self.t_points < 2 or self.t_max <= self.t_min:
                raise ConfigParse("the time range needs t_max > t_min and at least 2 points", field="t_points")
        if self.n_max is not None and self.n_max < 1:
            raise ConfigParse(f"must be >= 1, got {self.n_max}", field="n_max")
        if self.initial_qubit not in ("+", "-"):
            raise ConfigParse(f"must be '+' or '-', got {self.initial_qubit!r}", field="initial_qubit")
        return self

    def to_dict(self) -> dict:
        """Returns every field, defaults included, as plain JSON-compatible values."""
        return _jsonable(asdict(self))

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        """
        Builds and validates a configuration from a mapping.

        Raises:
            ConfigParse: For unknown or missing fields and failed validation.
        """
        if not isinstance(data, dict):
            raise ConfigParse("the configuration must be a JSON object")
        known = {f.name for f in fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigParse("unknown field", field=key)
        if "command" not in data:
            raise ConfigParse("missing required field", field="command")
        values = dict(data)
        for key, kind in (("n_traj", int), ("seed", int), ("t_points", int), ("threads", int)):
            if key in values:
                values[key] = _coerce(key, values[key], kind)
        for key in ("nbar", "t_end", "t_pi", "sample_dt", "dt", "nbar_min", "nbar_max", "nbar_step",
                    "t_min", "t_max", "g_over_2pi_hz"):
            if values.get(key) is not None:
                values[key] = _coerce(key, values[key], float)
        if values.get("n_max") is not None:
            values["n_max"] = _coerce("n_max", values["n_max"], int)
        return cls(**values).validate()

    def custom_preset(self) -> ParameterPreset | None:
        """The preset described by ``rates``, if any."""
        if self.rates is None:
            return None
        return ParameterPreset.from_dict({"name": self.preset or "custom", **self.rates})


def _coerce(key: str, value, kind):
    if isinstance(value, bool):
        raise ConfigParse(f"expected a number, got {value!r}", field=key)
    try:
        converted = kind(value)
    except (TypeError, ValueError) as exc:
        raise ConfigParse(f"expected {kind.__name__}, got {value!r}", field=key) from exc
    if kind is int and converted != float(value):
        raise ConfigParse(f"expected an integer, got {value!r}", field=key)
    return converted


def _jsonable(value):
    """Converts numpy scalars and non-finite floats into JSON-safe values."""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return value


def load_config(path) -> RunConfig:
    """
    Reads a JSON run configuration.

    A result sidecar (`<out>.meta.json`) is accepted as well: its `config`
    block is the fully resolved configuration of the run that wrote it.

    Args:
        path: Path of the JSON file.

    Returns:
        RunConfig: The validated configuration with defaults applied.

    Raises:
        ConfigParse: With the line number for JSON syntax errors and the field
                     name for validation errors.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigParse(f"cannot read {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParse(exc.msg, line=exc.lineno) from exc
    if isinstance(data, dict) and "config" in data and "code_version" in data:
        data = data["config"]
    return RunConfig.from_dict(data)


def save_config(config: RunConfig, path):
    """Writes a configuration as JSON."""
    Path(path).write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")


def result_frame(result) -> pd.DataFrame:
    """Tabulates a report, a contour grid or a preset list."""
    if isinstance(result, ComparisonReport):
        return result.to_frame()
    if isinstance(result, ContourGrid):
        return result.frame[["nbar", "t_over_tR", "contrast", "cat_locus", "revival_locus"]]
    if isinstance(result, list):
        return pd.DataFrame([p.to_dict() for p in result])
    raise TypeError(f"cannot serialize {type(result).__name__}")


def _result_meta(result) -> tuple[dict, dict]:
    return getattr(result, "metrics", {}), getattr(result, "metadata", {})


def render_result(result, fmt: str) -> str:
    """
    Serializes a result.

    CSV has a header row, '.' decimals, '\\n' line endings and 17 significant
    digits; JSON holds the columns plus the metrics and metadata.
    """
    frame = result_frame(result)
    if fmt == "csv":
        return frame.to_csv(index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    metrics, meta = _result_meta(result)
    payload = {
        "columns": {name: _jsonable(frame[name].tolist()) for name in frame.columns},
        "metrics": _jsonable(metrics),
        "metadata": _jsonable(meta),
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def code_version() -> str:
    """Installed package version, or the source version when not installed."""
    try:
        return importlib_metadata.version("qjc")
    except importlib_metadata.PackageNotFoundError:
        return "0.1.0"


def sidecar_path(path) -> Path:
    """Path of the metadata sidecar of an output file."""
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def dump_result(result, fmt: str, path, config: RunConfig | None = None) -> Path:
    """
    Writes a result and its metadata sidecar.

    Args:
        result: A ComparisonReport, ContourGrid or list of presets.
        fmt (str): 'csv' or 'json'.
        path: Output path.
        config (RunConfig, optional): The resolved configuration, stored in the sidecar.

    Returns:
        Path: The sidecar path.
    """
    if fmt not in FORMATS:
        raise ConfigParse(f"format must be csv or json, got {fmt!r}", field="format")
    path = Path(path)
    with open(path, "w", newline="") as f:
        f.write(render_result(result, fmt))
    metrics, meta = _result_meta(result)
    sidecar = {
        "config": config.to_dict() if config is not None else None,
        "code_version": code_version(),
        "seed": config.seed if config is not None else meta.get("seed"),
        "n_max": meta.get("n_max"),
        "leakage": meta.get("leakage"),
        "max_trace_drift": meta.get("max_trace_drift"),
        "max_herm_drift": meta.get("max_herm_drift"),
        "metrics": metrics,
        "metadata": meta,
    }
    target = sidecar_path(path)
    target.write_text(json.dumps(_jsonable(sidecar), indent=2, sort_keys=True) + "\n")
    return target
