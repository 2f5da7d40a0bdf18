"""CLI commands for thz-sounding."""

import functools
import logging
from dataclasses import replace
from pathlib import Path

import click
from rich.console import Console
from rich.logging import RichHandler
from rich.progress import BarColumn, MofNCompleteColumn, Progress, TextColumn
from rich.table import Table

from thz_sounding import __version__
from thz_sounding.campaign import FLOAT_FORMAT, fit_records, read_records, run_campaign
from thz_sounding.chanmodel import (
    LinkBudgetSpec,
    draw_links,
    link_budget_margin,
    load_model_table,
    mean_path_loss,
    save_model_table,
)
from thz_sounding.errors import SoundingError
from thz_sounding.formatters import FormatterFactory, OutputFormat, TerminalFormatter
from thz_sounding.parser import ANALYSES, ManifestParser, load_run_config, load_scene
from thz_sounding.sweepfile import write_calibration, write_sweeps
from thz_sounding.synthscene import scene_to_sweeps, unit_calibration

console = Console()
logger = logging.getLogger("thz_sounding")

DEFAULT_OUTPUT = Path("analysis")
FORMAT_CHOICE = click.Choice(FormatterFactory.get_supported_formats())
INPUT_FILE = click.Path(exists=True, dir_okay=False, path_type=Path)
OUTPUT_FILE = click.Path(dir_okay=False, path_type=Path)


def setup_logging(verbose: bool) -> None:
    """Route library logging through rich on the shared console."""
    handler = RichHandler(console=console, show_path=False, show_time=False, markup=False)
    handler.setFormatter(logging.Formatter("%(message)s"))
    logger.handlers[:] = [handler]
    logger.setLevel(logging.DEBUG if verbose else logging.INFO)
    logger.propagate = False


def handle_errors(command):
    """Turn library errors into a red message and exit status 1."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except (SoundingError, OSError) as e:
            console.print(f"[red]Error:[/red] {e}")
            click.get_current_context().exit(1)

    return wrapper


def emit(formatter, kind: str, value) -> None:
    """Print a report through the selected formatter."""
    if isinstance(formatter, TerminalFormatter):
        getattr(formatter, f"display_{kind}")(value)
    else:
        click.echo(getattr(formatter, f"format_{kind}")(value), nl=False)


@click.group()
@click.version_option(version=__version__, prog_name="thz-sounding")
@click.option("--verbose", "-v", is_flag=True, help="Show debug logging")
def cli(verbose: bool):
    """Analyze THz double-directional channel soundings and generate channel parameters."""
    setup_logging(verbose)


@cli.command()
@click.argument("manifest", type=INPUT_FILE)
@click.option("--config", "config_path", type=INPUT_FILE, help="Run config TOML")
@click.option("--gate-delay-ns", type=float, help="Delay gate in ns (default 833.33)")
@click.option("--noise-margin", "margin_db", type=float, help="Threshold above the noise floor in dB (default 6)")
@click.option("--bins", "n_bins", type=int, help="Number of log10(d) weighting bins (default 10)")
@click.option("--seed", type=int, help="Seed recorded in run.json")
@click.option("--workers", type=int, help="Links processed in parallel")
@click.option("--output", "output_dir", type=click.Path(file_okay=False, path_type=Path), help="Report directory")
@click.option("--analysis", "analyses", multiple=True, type=click.Choice(sorted(ANALYSES)), help="Reports to write")
@click.option("--format", "output_format", type=FORMAT_CHOICE, default=OutputFormat.TERMINAL, help="Summary format")
@handle_errors
def analyze(
    manifest, config_path, gate_delay_ns, margin_db, n_bins, seed, workers, output_dir, analyses, output_format
):
    """Condense every link of MANIFEST, fit the model and write reports."""
    parser = ManifestParser(manifest)
    config = load_run_config(
        config_path,
        gate_delay=None if gate_delay_ns is None else gate_delay_ns * 1e-9,
        margin_db=margin_db,
        n_bins=n_bins,
        seed=seed,
        workers=workers,
        output_dir=output_dir,
        analyses=analyses or None,
    )
    if config.output_dir is None:
        config = replace(config, output_dir=DEFAULT_OUTPUT)

    info = parser.get_campaign_info()
    console.print(
        f"[bold cyan]{info.get('name', info['file_name'])}[/bold cyan] "
        f"[dim]{info['links']} links ({info['los_links']} LoS, {info['nlos_links']} NLoS)[/dim]"
    )

    with Progress(
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        MofNCompleteColumn(),
        console=console,
        transient=True,
    ) as progress:
        task = progress.add_task("Condensing links", total=info["links"])
        result = run_campaign(parser.get_manifest(), config, on_link=lambda *_: progress.advance(task))

    formatter = FormatterFactory.create_formatter(output_format, console)
    emit(formatter, "records", result.records)
    if result.fits.reports and isinstance(formatter, TerminalFormatter):
        emit(formatter, "fits", result.fits.reports)
    if result.unusable:
        console.print(f"[yellow]Unusable links skipped: {', '.join(result.unusable)}[/yellow]")
    if result.table is None:
        console.print("[yellow]Model table incomplete; model_table.json not written[/yellow]")
    console.print(f"[green]Reports written to: {config.output_dir}[/green]")


@cli.command()
@click.argument("scene_file", type=INPUT_FILE)
@click.option("--output", "-o", type=OUTPUT_FILE, required=True, help="Sweep file to write")
@click.option("--calibration", type=OUTPUT_FILE, help="Also write a unit calibration")
@click.option("--seed", type=int, default=0, show_default=True, help="Noise seed")
@handle_errors
def synth(scene_file, output, calibration, seed):
    """Render SCENE_FILE into a binary sweep file."""
    document = load_scene(scene_file)
    grid = scene_to_sweeps(document.scene, document.antenna, document.axis, document.angles, seed=seed)
    write_sweeps(grid, output)
    n_points, n_tx, n_rx = grid.samples.shape
    console.print(f"[green]Sweeps written to: {output}[/green] [dim]({n_points}x{n_tx}x{n_rx})[/dim]")
    if calibration is not None:
        write_calibration(unit_calibration(document.axis), calibration)
        console.print(f"[green]Calibration written to: {calibration}[/green]")


@cli.command()
@click.argument("records_csv", type=INPUT_FILE)
@click.option("--bins", "n_bins", type=int, default=10, show_default=True, help="Number of log10(d) weighting bins")
@click.option("--output", "-o", type=OUTPUT_FILE, help="Model table JSON to write")
@click.option("--format", "output_format", type=FORMAT_CHOICE, default=OutputFormat.TERMINAL, help="Output format")
@handle_errors
def fit(records_csv, n_bins, output, output_format):
    """Fit the channel model to a records CSV."""
    records = read_records(records_csv)
    result = fit_records(records, n_bins)
    formatter = FormatterFactory.create_formatter(output_format, console)
    emit(formatter, "fits", result.reports)

    if output is None:
        return
    table = result.table
    if not table.is_complete:
        console.print(f"[yellow]Model table incomplete ({len(table.missing())} rows missing); not written[/yellow]")
        click.get_current_context().exit(1)
    save_model_table(table, output)
    console.print(f"[green]Model table written to: {output}[/green]")


@cli.command()
@click.option("--table", "table_path", type=INPUT_FILE, help="Model table JSON")
@click.option("--distance", "-d", type=float, required=True, help="Link distance in m")
@click.option("--condition", type=click.Choice(["los", "nlos"]), required=True)
@click.option("--view", type=click.Choice(["omni", "maxdir"]), default="omni", show_default=True)
@click.option("--count", "-n", type=int, default=1, show_default=True, help="Number of draws")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--trend", is_flag=True, help="Use the distance-trend means for DS, AS and k1")
@click.option("--output", "-o", type=OUTPUT_FILE, help="Realizations CSV to write")
@click.option("--format", "output_format", type=FORMAT_CHOICE, default=OutputFormat.TERMINAL, help="Output format")
@handle_errors
def draw(table_path, distance, condition, view, count, seed, trend, output, output_format):
    """Draw channel-parameter realizations from a model table."""
    table = load_model_table(table_path)
    batch = draw_links(table, distance, condition, view, count=count, seed=seed, distance_trend=trend)
    if output is not None:
        batch.to_frame().to_csv(output, index=False, float_format=FLOAT_FORMAT)
        console.print(f"[green]{len(batch)} realizations written to: {output}[/green]")
        return
    emit(FormatterFactory.create_formatter(output_format, console), "realizations", batch)


@cli.command()
@click.option("--tx-power", type=float, default=10.0, show_default=True, help="Transmit power in dBm")
@click.option("--gain-tx", type=float, default=23.0, show_default=True, help="Tx antenna gain in dBi")
@click.option("--gain-rx", type=float, default=23.0, show_default=True, help="Rx antenna gain in dBi")
@click.option("--bandwidth", type=float, default=1e9, show_default=True, help="Bandwidth in Hz")
@click.option("--noise-figure", type=float, default=5.0, show_default=True, help="Receiver noise figure in dB")
@click.option("--snr", "required_snr", type=float, default=5.0, show_default=True, help="Required SNR in dB")
@click.option("--path-loss", type=float, help="Path loss in dB to evaluate the margin for")
@click.option("--distance", "-d", "distances", type=float, multiple=True, help="Distances in m for model-mean margins")
@click.option("--condition", type=click.Choice(["los", "nlos"]), default="los", show_default=True)
@click.option("--view", type=click.Choice(["omni", "maxdir"]), default="omni", show_default=True)
@click.option("--table", "table_path", type=INPUT_FILE, help="Model table JSON")
@handle_errors
def budget(
    tx_power, gain_tx, gain_rx, bandwidth, noise_figure, required_snr, path_loss, distances, condition, view, table_path
):
    """Evaluate the link budget and the margin against path loss."""
    spec = LinkBudgetSpec(
        tx_power=tx_power,
        antenna_gain_tx=gain_tx,
        antenna_gain_rx=gain_rx,
        bandwidth=bandwidth,
        noise_figure=noise_figure,
        required_snr=required_snr,
    )
    console.print(f"Maximum tolerable path loss: [bold green]{spec.max_path_loss:.2f} dB[/bold green]")
    if path_loss is not None:
        margin = link_budget_margin(spec, path_loss)
        style = "green" if margin >= 0 else "red"
        console.print(f"Margin at {path_loss:.2f} dB path loss: [{style}]{margin:.2f} dB[/{style}]")

    if not distances:
        return
    means = mean_path_loss(load_model_table(table_path), distances, condition, view)
    table = Table(title=f"Link Margin ({condition} {view}, model mean path loss)")
    table.add_column("d [m]", justify="right", style="cyan")
    table.add_column("Path loss [dB]", justify="right")
    table.add_column("Margin [dB]", justify="right")
    for d, pl in zip(distances, means, strict=True):
        margin = link_budget_margin(spec, float(pl))
        style = "green" if margin >= 0 else "red"
        table.add_row(f"{d:g}", f"{pl:.2f}", f"[{style}]{margin:.2f}[/{style}]")
    console.print(table)


@cli.command()
@click.option("--table", "table_path", type=INPUT_FILE, help="Model table JSON")
@click.option("--format", "output_format", type=FORMAT_CHOICE, default=OutputFormat.TERMINAL, help="Output format")
@handle_errors
def tables(table_path, output_format):
    """Show a model table (the built-in one by default)."""
    emit(FormatterFactory.create_formatter(output_format, console), "model_table", load_model_table(table_path))
