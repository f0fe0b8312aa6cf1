"""
This module defines the command-line interface.

Subcommands mirror the experiment drivers (free, echo, contour, compare),
plus ``presets`` to list the parameter library and ``run`` to execute a JSON
configuration. Exit codes: 0 on success, 2 on configuration errors (the
message names the offending field), 1 on simulation errors (the message
names the failing trajectory and seed for replay).
"""
import logging
import sys

import click
import numpy as np
from rich.console import Console
from rich.table import Table

from .config import RunConfig, dump_result, load_config, render_result
from .errors import ConfigParse, QJCError
from .experiments import ExperimentRunner, preset_table
from .log import configure_logging
from .units import TimeUnits, UnitSystem

logger = logging.getLogger(__name__)


def _presets_table(presets) -> Table:
    table = Table(title="Parameter presets")
    for column in ("name", "label", "g/kappa", "g/gamma1", "g/gamma_phi"):
        table.add_column(column, justify="left" if column in ("name", "label") else "right")
    for p in presets:
        table.add_row(p.name, p.label, f"{p.g_over_kappa:g}", f"{p.g_over_gamma1:g}", f"{p.g_over_gamma_phi:g}")
    return table


def execute(config: RunConfig, console: Console | None = None):
    """
    Runs a validated configuration and writes its output.

    Args:
        config (RunConfig): The configuration.
        console (Console, optional): Where tables and standard-output results go.

    Returns:
        The report, contour grid or preset list that was produced.
    """
    console = console or Console()
    units = UnitSystem(TimeUnits.RabiPeriods, config.g_over_2pi_hz)
    preset = config.custom_preset() or config.preset
    with ExperimentRunner(units=units, threads=config.threads, n_max=config.n_max, dt=config.dt,
                          method=config.method, initial_qubit=config.initial_qubit) as runner:
        if config.command == "presets":
            result = preset_table(runner.db_session)
            if config.out is None:
                console.print(_presets_table(result))
                return result
        elif config.command == "free":
            result = runner.run_free_evolution(preset, config.nbar, config.n_traj, config.t_end, config.seed,
                                               with_oracle=config.with_oracle, sample_dt=config.sample_dt)
        elif config.command == "compare":
            result = runner.run_compare(preset, config.nbar, config.n_traj, config.t_end, config.seed,
                                        sample_dt=config.sample_dt)
        elif config.command == "echo":
            result = runner.run_echo(preset, config.nbar, config.t_pi, config.n_traj, config.t_end, config.seed,
                                     sample_dt=config.sample_dt)
        else:
            nbar_values = np.arange(config.nbar_min, config.nbar_max + 0.5 * config.nbar_step, config.nbar_step)
            t_values = np.linspace(config.t_min, config.t_max, config.t_points)
            result = runner.contour_sweep(preset, nbar_values, t_values, config.protocol)

    if config.out is None:
        click.echo(render_result(result, config.format), nl=False)
    else:
        sidecar = dump_result(result, config.format, config.out, config)
        logger.info("wrote %s and %s", config.out, sidecar)
    return result


def _simulation_options(func):
    options = [
        click.option("--preset", help="Preset name (see `qjc presets`)."),
        click.option("--nbar", type=float, help="Mean photon number of the initial coherent field."),
        click.option("--ntraj", "n_traj", type=int, default=2000, show_default=True, help="Number of trajectories."),
        click.option("--seed", type=int, default=0, show_default=True, help="Base seed."),
        click.option("--tend", "t_end", type=float, default=8.0, show_default=True, help="Final time in t_R."),
        click.option("--sample-dt", type=float, default=0.05, show_default=True, help="Sampling interval in t_R."),
        click.option("--dt", type=float, default=None, help="Integration step in t_R."),
        click.option("--method", type=click.Choice(["ab4", "rk4"]), default="ab4", show_default=True),
    ]
    for option in reversed(options):
        func = option(func)
    return _output_options(func)


def _output_options(func):
    options = [
        click.option("--out", type=click.Path(dir_okay=False), default=None, help="Output file."),
        click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv", show_default=True),
        click.option("--nmax", "n_max", type=int, default=None, help="Truncation override."),
        click.option("--threads", type=int, default=1, show_default=True, envvar="QJC_THREADS",
                     help="Worker processes (falls back to QJC_THREADS)."),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _run(ctx, **values):
    values["format"] = values.pop("fmt")
    config = RunConfig(command=ctx.command.name, **values).validate()
    return execute(config)


@click.group()
@click.option("-v", "--verbose", count=True, help="-v for progress, -vv for debug output.")
def cli(verbose):
    """Quantum-jump simulator for a qubit coupled to a mesoscopic cavity field."""
    configure_logging(verbose)


@cli.command()
@_simulation_options
@click.option("--with-oracle", is_flag=True, help="Also integrate the master equation.")
@click.pass_context
def free(ctx, **values):
    """Free evolution of |+> in a coherent field."""
    _run(ctx, **values)


@cli.command()
@_simulation_options
@click.option("--tpi", "t_pi", type=float, required=True, help="Echo pulse time in t_R.")
@click.pass_context
def echo(ctx, **values):
    """Echo protocol with a sigma_z pulse at t_pi."""
    _run(ctx, **values)


@cli.command()
@_simulation_options
@click.pass_context
def compare(ctx, **values):
    """Free evolution with the master-equation oracle forced on."""
    _run(ctx, **values)


@cli.command()
@click.option("--preset", help="Preset name (see `qjc presets`).")
@click.option("--protocol", type=click.Choice(["free", "echo"]), default="free", show_default=True)
@click.option("--nbar-min", type=float, default=5.0, show_default=True)
@click.option("--nbar-max", type=float, default=30.0, show_default=True)
@click.option("--nbar-step", type=float, default=1.0, show_default=True)
@click.option("--tmin", "t_min", type=float, default=0.0, show_default=True, help="First time in t_R.")
@click.option("--tmax", "t_max", type=float, default=10.0, show_default=True, help="Last time in t_R.")
@click.option("--tpoints", "t_points", type=int, default=201, show_default=True)
@_output_options
@click.pass_context
def contour(ctx, **values):
    """Contour map of the decoherence coefficient over (n̄, t/t_R)."""
    _run(ctx, **values)


@cli.command()
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Write the table to a file.")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv", show_default=True)
def presets(out, fmt):
    """List the parameter presets."""
    execute(RunConfig(command="presets", out=out, format=fmt).validate())


@cli.command()
@click.argument("config_path", type=click.Path(dir_okay=False))
@click.option("--threads", type=int, default=None, envvar="QJC_THREADS", help="Override the worker count.")
def run(config_path, threads):
    """Run a JSON configuration file."""
    config = load_config(config_path)
    if threads is not None:
        config.threads = threads
    execute(config)


def main(argv=None) -> int:
    """
    Entry point.

    Args:
        argv (list[str], optional): Arguments; defaults to sys.argv[1:].

    Returns:
        int: The process exit code.
    """
    err = Console(stderr=True)
    try:
        cli.main(args=argv, prog_name="qjc", standalone_mode=False)
    except click.UsageError as exc:
        exc.show()
        return 2
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except click.Abort:
        err.print("aborted")
        return 1
    except QJCError as exc:
        err.print(f"error: {exc}", markup=False)
        return 2 if isinstance(exc, (ConfigParse, ValueError)) else 1
    except ValueError as exc:
        err.print(f"error: {exc}", markup=False)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
