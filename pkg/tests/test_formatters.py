import io
import math

import pandas as pd
import pytest
from rich.console import Console

from thz_sounding.chanmodel import (
    REALIZATION_COLUMNS,
    Condition,
    Estimator,
    FitKind,
    FitReport,
    Parameter,
    RowKey,
    View,
    default_model_table,
    draw_links,
)
from thz_sounding.formatters import CsvFormatter, FormatterFactory, OutputFormat, TerminalFormatter
from thz_sounding.formatters.csvfile import TABLE_COLUMNS
from thz_sounding.metrics import RECORD_COLUMNS, LinkRecord
from thz_sounding.statfit import fit_lognormal, fit_power_law


def _record(link_id: str = "L01", k1_omni: float = 3.5) -> LinkRecord:
    return LinkRecord(
        link_id=link_id,
        distance=12.0,
        los=True,
        pl_omni=92.1,
        pl_maxdir=95.4,
        ds_omni=21.5e-9,
        ds_maxdir=4.0e-9,
        as_tx=0.31,
        as_rx=0.27,
        k1_omni=k1_omni,
        k1_maxdir=math.inf,
        tx_id="T1",
    )


def _reports() -> list[FitReport]:
    d = [1.0, 4.0, 10.0, 30.0]
    pl = fit_power_law(d, [77.0, 86.9, 94.0, 102.5])
    ds = fit_lognormal([-78.0, -76.0, -75.5])
    return [
        FitReport(RowKey(Parameter.PL, Condition.LOS, View.OMNI, FitKind.LINEAR, Estimator.WEIGHTED), pl, 4),
        FitReport(RowKey(Parameter.DS, Condition.LOS, View.OMNI, FitKind.STATISTICAL, Estimator.MOMENTS), ds, 3),
    ]


@pytest.fixture
def console() -> Console:
    return Console(file=io.StringIO(), width=200, color_system=None)


def test_factory_creates_formatters(console):
    assert isinstance(FormatterFactory.create_formatter(OutputFormat.TERMINAL, console), TerminalFormatter)
    assert isinstance(FormatterFactory.create_formatter("csv"), CsvFormatter)
    assert FormatterFactory.get_supported_formats() == ["terminal", "csv"]


def test_factory_rejects_unknown_format():
    with pytest.raises(ValueError, match="Unsupported format type: html"):
        FormatterFactory.create_formatter("html")


def test_csv_records_are_lossless():
    record = _record(k1_omni=1 / 3)
    frame = pd.read_csv(io.StringIO(CsvFormatter().format_records([record])))
    assert list(frame.columns) == RECORD_COLUMNS
    assert frame.loc[0, "k1_omni"] == 1 / 3
    assert frame.loc[0, "k1_maxdir"] == math.inf


def test_csv_fits_and_model_table():
    csv = CsvFormatter()
    fits = pd.read_csv(io.StringIO(csv.format_fits(_reports())))
    assert fits.loc[0, "parameter"] == "pl"
    assert fits.loc[1, "mu"] == pytest.approx((-78.0 - 76.0 - 75.5) / 3)
    table = pd.read_csv(io.StringIO(csv.format_model_table(default_model_table())))
    assert list(table.columns) == TABLE_COLUMNS
    assert len(table) == len(default_model_table())
    los_pl = table[(table["parameter"] == "pl") & (table["condition"] == "los") & (table["estimator"] == "weighted")]
    assert los_pl["alpha"].tolist() == [76.77, 76.77]


def test_csv_realizations():
    batch = draw_links(default_model_table(), 10.0, "los", "omni", count=5, seed=1)
    text = CsvFormatter().format_realizations(batch)
    assert text.splitlines()[0] == ",".join(REALIZATION_COLUMNS)
    assert len(text.splitlines()) == 6


def test_terminal_records_table(console):
    text = TerminalFormatter(console).format_records([_record(), _record("L02")])
    assert "Condensed Link Parameters" in text
    assert "L02" in text
    assert "21.5" in text
    assert "+inf" in text


def test_terminal_fits_table(console):
    text = TerminalFormatter(console).format_fits(_reports())
    assert "95% Confidence Intervals" in text
    assert "weighted" in text
    assert "moments" in text


def test_terminal_model_table(console):
    text = TerminalFormatter(console).format_model_table(default_model_table())
    assert "76.77" in text
    assert "1.74" in text
    assert "dB-s" in text


def test_terminal_realizations_preview(console):
    batch = draw_links(default_model_table(), 10.0, "nlos", "omni", count=50, seed=3)
    text = TerminalFormatter(console).format_realizations(batch)
    assert "Draws at 10 m, nlos omni (seed 3)" in text
    assert "first 20 of 50 draws" in text


def test_terminal_display_prints_to_console(console):
    TerminalFormatter(console).display_model_table(default_model_table())
    assert "Channel Model Table" in console.file.getvalue()
