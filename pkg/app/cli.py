import asyncio
import logging
from pathlib import Path
from typing import Optional

import typer
import uvicorn
from rich.console import Console
from rich.table import Table
from sqlmodel import Session

from .core.config import settings
from .core.exceptions import TclsimError
from .core.logging import setup_logging
from .db.session import engine, init_db
from .plantlink.server import PlantServer
from .plantlink.session import PlantSession
from .schemas.experiment import ExperimentConfig, ValidationResult
from .sim.calibration import calibrate as run_calibration
from .sim.presets import TABLE_II_CASES
from .sim.runner import build_fleet, load_config, load_matrix, run_experiment, run_matrix
from .sim.validation import PRESETS, run_validation_preset

app = typer.Typer(help="Air-conditioner fleet simulator for frequency-regulation experiments.",
                  no_args_is_help=True)
console = Console()
logger = logging.getLogger(__name__)


@app.callback()
def main(log_level: str = typer.Option(settings.LOG_LEVEL, "--log-level", help="Level for the app loggers.")):
    setup_logging(level=log_level)


def _store() -> Session | None:
    if not settings.RECORD_RUNS:
        return None
    init_db()
    return Session(engine)


def _fail(exc: TclsimError) -> None:
    console.print(f"[bold red]error:[/] {exc}")
    raise typer.Exit(code=1)


@app.command()
def run(config: Path = typer.Argument(..., exists=True, dir_okay=False, help="Experiment YAML."),
        seed: Optional[int] = typer.Option(None, help="Override the master seed."),
        output_dir: Optional[Path] = typer.Option(None, help="Where run directories are written.")):
    """Run one closed-loop experiment and print its metrics."""
    try:
        cfg = load_config(config)
        update = {"output_dir": output_dir or cfg.output_dir or settings.OUTPUT_DIR}
        if seed is not None:
            update["seed"] = seed
        cfg = cfg.model_copy(update=update)
        session = _store()
        try:
            result = run_experiment(cfg, session=session)
        finally:
            if session is not None:
                session.close()
    except TclsimError as exc:
        _fail(exc)

    metrics = result.metrics
    table = Table(title=f"{result.name} / {result.controller}")
    table.add_column("metric")
    table.add_column("value", justify="right")
    table.add_row("NRMSE", f"{100 * metrics.nrmse:.2f} %")
    table.add_row("performance score", f"{metrics.pjm_composite:.3f}")
    table.add_row("max overload", f"{metrics.overload.max_consecutive_overload_s:.0f} s")
    table.add_row("baseline power", f"{metrics.baseline_power / 1e3:.1f} kW")
    table.add_row("commands sent / dropped", f"{metrics.commands_sent} / {metrics.commands_dropped}")
    console.print(table)
    if result.metrics_path is not None:
        console.print(f"metrics written to {result.metrics_path}")


@app.command()
def matrix(file: str = typer.Argument("table2", help="Matrix YAML, or 'table2' for the ten-case preset."),
           base: Optional[Path] = typer.Option(None, exists=True, dir_okay=False,
                                               help="Experiment YAML the cases are applied to."),
           workers: int = typer.Option(settings.MATRIX_WORKERS, min=1),
           output: Path = typer.Option(Path("matrix.csv"), help="Where the results table is written.")):
    """Run every (case, controller) pair of a matrix and write the results table."""
    try:
        rows = TABLE_II_CASES if file == "table2" else load_matrix(file)
        base_cfg = load_config(base) if base is not None else ExperimentConfig(output_dir=settings.OUTPUT_DIR)
        session = _store()
        try:
            result = run_matrix(rows, base_cfg, workers=workers, output=output, session=session)
        finally:
            if session is not None:
                session.close()
    except TclsimError as exc:
        _fail(exc)

    console.print(result.table.to_string(index=False, float_format=lambda v: f"{v:.3f}"))
    for failed in result.errors:
        console.print(f"[yellow]case {failed.case} / {failed.controller} failed:[/] {failed.error}")
    console.print(f"table written to {output}")


def _print_validation(result: ValidationResult) -> None:
    table = Table(title=result.name)
    table.add_column("check")
    table.add_column("verdict")
    for check, ok in result.verdicts.items():
        table.add_row(check, "[green]pass[/]" if ok else "[red]fail[/]")
    console.print(table)
    console.print(", ".join(f"{k}={v:.4g}" for k, v in result.values.items()))


@app.command()
def validate(name: str = typer.Argument("all", help=f"One of {', '.join(PRESETS)} or 'all'."),
             n_houses: Optional[int] = typer.Option(None, help="Fleet size for the scenario."),
             seed: int = typer.Option(0)):
    """Run open-loop validation scenarios and report their property checks."""
    names = list(PRESETS) if name == "all" else [name]
    overrides = {"seed": seed}
    if n_houses is not None:
        overrides["n_houses"] = n_houses
    passed = True
    for preset in names:
        try:
            result = run_validation_preset(preset, **overrides)
        except TclsimError as exc:
            _fail(exc)
        _print_validation(result)
        passed &= result.passed
    if not passed:
        raise typer.Exit(code=1)


@app.command("serve-plant")
def serve_plant(config: Optional[Path] = typer.Option(None, exists=True, dir_okay=False,
                                                      help="Experiment YAML describing the served fleet."),
                host: str = typer.Option(settings.PLANT_HOST),
                port: int = typer.Option(settings.PLANT_PORT),
                http_port: int = typer.Option(settings.HTTP_PORT),
                no_http: bool = typer.Option(False, "--no-http", help="Serve the TCP plant only."),
                realtime: bool = typer.Option(settings.PLANT_REALTIME, help="Pace steps to wall-clock time.")):
    """Serve a simulated fleet to an external aggregator over TCP."""
    try:
        cfg = load_config(config) if config is not None else ExperimentConfig(
            dt_control=settings.DT_CONTROL, dt_physics=settings.DT_PHYSICS)
    except TclsimError as exc:
        _fail(exc)
    session = PlantSession(build_fleet(cfg), record_commands=True)

    if no_http:
        server = PlantServer(session, host, port, step_timeout=settings.STEP_TIMEOUT, realtime=realtime)
        try:
            asyncio.run(server.serve_forever())
        except KeyboardInterrupt:
            console.print("plant stopped")
        return

    from .main import create_app

    api = create_app(session, serve_tcp=True, host=host, port=port, realtime=realtime)
    uvicorn.run(api, host=host, port=http_port, log_config=None)


@app.command()
def calibrate(T_amb: float = typer.Option(32.2, "--t-amb", help="Outdoor temperature, °C."),
              coeff: Optional[float] = typer.Option(None, help="Target fractional power rise per °C.")):
    """Fit the AC prefactor and friction loss of the model house."""
    try:
        report = run_calibration(T_amb=T_amb, ambient_coeff=coeff)
    except TclsimError as exc:
        _fail(exc)

    console.print(f"A = {report.A:.6g}")
    console.print(f"W_fric = {report.W_fric:.1f} W")
    console.print(f"plateau cooling {report.cooling_w:.0f} W, power {report.plateau_power_w:.0f} W, "
                  f"{100 * report.ambient_power_coeff:.2f} %/°C")
    table = Table(title="limit cycles")
    for column in ("heat gain [W]", "on [s]", "off [s]", "period [s]", "duty"):
        table.add_column(column, justify="right")
    for c in report.cycles:
        table.add_row(f"{c.heat_gain_w:.0f}", f"{c.on_time:.0f}", f"{c.off_time:.0f}",
                      f"{c.period:.0f}", f"{c.duty_cycle:.2f}")
    console.print(table)
