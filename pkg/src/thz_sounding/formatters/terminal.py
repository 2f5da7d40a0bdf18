"""Terminal formatter: rich tables for records, fits, model tables and draws."""

import math
from collections.abc import Sequence

from rich.console import Console
from rich.table import Table

from thz_sounding.chanmodel import FitKind, FitReport, ModelTable, RealizationBatch
from thz_sounding.formatters.base import BaseFormatter
from thz_sounding.metrics import LinkRecord
from thz_sounding.statfit import PERCENTILES, LognormalFit

PREVIEW_ROWS = 20


def _num(value: float | None, digits: int = 2) -> str:
    if value is None:
        return ""
    if math.isinf(value):
        return "+inf" if value > 0 else "-inf"
    return f"{value:.{digits}f}"


def _ci(bounds: tuple[float, float] | None, digits: int = 2) -> str:
    if bounds is None:
        return ""
    return f"[{_num(bounds[0], digits)}, {_num(bounds[1], digits)}]"


class TerminalFormatter(BaseFormatter):
    """Format reports for terminal display."""

    def __init__(self, console: Console | None = None):
        """Initialize the formatter."""
        self.console = console or Console()

    def _capture(self, table: Table) -> str:
        with self.console.capture() as capture:
            self.console.print(table)
        return capture.get()

    def records_table(self, records: Sequence[LinkRecord]) -> Table:
        table = Table(title="Condensed Link Parameters")
        table.add_column("Link", style="cyan")
        table.add_column("d [m]", justify="right")
        table.add_column("LoS", justify="center")
        for name in ("PL omni", "PL max-dir"):
            table.add_column(f"{name} [dB]", justify="right", style="green")
        for name in ("DS omni", "DS max-dir"):
            table.add_column(f"{name} [ns]", justify="right")
        table.add_column("AS Tx", justify="right")
        table.add_column("AS Rx", justify="right")
        table.add_column("k1 omni [dB]", justify="right", style="magenta")
        table.add_column("k1 max-dir [dB]", justify="right", style="magenta")
        for r in records:
            table.add_row(
                r.link_id,
                _num(r.distance, 1),
                "yes" if r.los else "[dim]no[/dim]",
                _num(r.pl_omni),
                _num(r.pl_maxdir),
                _num(r.ds_omni * 1e9, 1),
                _num(r.ds_maxdir * 1e9, 1),
                _num(r.as_tx, 3),
                _num(r.as_rx, 3),
                _num(r.k1_omni),
                _num(r.k1_maxdir),
            )
        return table

    def fits_table(self, reports: Sequence[FitReport]) -> Table:
        table = Table(title="Fits with 95% Confidence Intervals")
        for name in ("Parameter", "Condition", "View", "Kind", "Estimator"):
            table.add_column(name, style="cyan" if name == "Parameter" else None)
        table.add_column("n", justify="right", style="dim")
        table.add_column("alpha / mu", justify="right", style="green")
        table.add_column("CI", justify="right", style="dim")
        table.add_column("beta / sigma", justify="right", style="green")
        table.add_column("CI", justify="right", style="dim")
        table.add_column("p10", justify="right")
        table.add_column("p90", justify="right")
        for report in reports:
            fit = report.fit
            if isinstance(fit, LognormalFit):
                first, first_ci, second, second_ci = fit.mu, fit.mu_ci, fit.sigma, fit.sigma_ci
                p10, p90 = (_num(float(q)) for q in fit.quantile(PERCENTILES))
            else:
                first, first_ci, second, second_ci = fit.alpha, fit.alpha_ci, fit.beta, fit.beta_ci
                p10 = p90 = ""
            table.add_row(
                *(part.value for part in report.key),
                str(report.n),
                _num(first),
                _ci(first_ci),
                _num(second),
                _ci(second_ci),
                p10,
                p90,
            )
        return table

    def model_table(self, model: ModelTable) -> Table:
        table = Table(title="Channel Model Table")
        for name in ("Parameter", "Condition", "View", "Kind", "Estimator"):
            table.add_column(name, style="cyan" if name == "Parameter" else None)
        table.add_column("Units", style="dim")
        table.add_column("alpha / mu", justify="right", style="green")
        table.add_column("beta / sigma", justify="right", style="green")
        for row in model.sorted_rows():
            linear = row.key.kind is FitKind.LINEAR
            table.add_row(
                *(part.value for part in row.key),
                row.units,
                _num(row.alpha if linear else row.mu),
                _num(row.beta if linear else row.sigma),
            )
        return table

    def realizations_table(self, batch: RealizationBatch) -> Table:
        shown = min(len(batch), PREVIEW_ROWS)
        title = f"Draws at {batch.distance:g} m, {batch.condition.value} {batch.view.value} (seed {batch.seed})"
        table = Table(title=title)
        table.add_column("#", justify="right", style="dim")
        table.add_column("PL [dB]", justify="right", style="green")
        table.add_column("eps [dB]", justify="right")
        table.add_column("DS [ns]", justify="right")
        table.add_column("AS", justify="right")
        table.add_column("k1 [dB]", justify="right", style="magenta")
        for index in range(shown):
            draw = batch[index]
            spread = _num(draw.angular_spread, 3) + (" [yellow]*[/yellow]" if draw.as_clamped else "")
            ds_ns = _num(draw.ds * 1e9, 1)
            table.add_row(str(index), _num(draw.pl), _num(draw.shadowing), ds_ns, spread, _num(draw.k1))
        if shown < len(batch):
            table.caption = f"first {shown} of {len(batch)} draws"
        return table

    def format_records(self, records: Sequence[LinkRecord]) -> str:
        return self._capture(self.records_table(records))

    def format_fits(self, reports: Sequence[FitReport]) -> str:
        return self._capture(self.fits_table(reports))

    def format_model_table(self, table: ModelTable) -> str:
        return self._capture(self.model_table(table))

    def format_realizations(self, batch: RealizationBatch) -> str:
        return self._capture(self.realizations_table(batch))

    def display_records(self, records: Sequence[LinkRecord]) -> None:
        self.console.print(self.records_table(records))

    def display_fits(self, reports: Sequence[FitReport]) -> None:
        self.console.print(self.fits_table(reports))

    def display_model_table(self, table: ModelTable) -> None:
        self.console.print(self.model_table(table))

    def display_realizations(self, batch: RealizationBatch) -> None:
        self.console.print(self.realizations_table(batch))
