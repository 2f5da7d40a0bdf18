import json

import pandas as pd
from click.testing import CliRunner

from thz_sounding import __version__
from thz_sounding.campaign import records_frame
from thz_sounding.chanmodel import REALIZATION_COLUMNS, TABLE_FORMAT, default_model_table
from thz_sounding.cli import cli
from thz_sounding.formatters.csvfile import TABLE_COLUMNS
from thz_sounding.metrics import LinkRecord
from thz_sounding.sweepfile import read_calibration, read_sweeps

SCENE = """
distance = 6.0
link_id = "demo"

[axis]
n_points = 64

[grid]
step = 90.0

[[mpc]]
delay = 20e-9
gain_db = -60.0
"""


def test_version():
    result = CliRunner().invoke(cli, ["--version"])
    assert result.exit_code == 0
    assert __version__ in result.output


def test_budget_reference_values():
    result = CliRunner().invoke(cli, ["budget", "--path-loss", "125.25"])
    assert result.exit_code == 0, result.output
    assert "Maximum tolerable path loss: 130.00 dB" in result.output
    assert "Margin at 125.25 dB path loss: 4.75 dB" in result.output


def test_budget_margins_from_model_means():
    result = CliRunner().invoke(cli, ["budget", "-d", "10", "-d", "100", "--condition", "nlos"])
    assert result.exit_code == 0, result.output
    assert "125.25" in result.output
    assert "4.75" in result.output


def test_tables_as_csv():
    result = CliRunner().invoke(cli, ["tables", "--format", "csv"])
    assert result.exit_code == 0, result.output
    lines = result.output.splitlines()
    assert lines[0] == ",".join(TABLE_COLUMNS)
    assert len(lines) == len(default_model_table()) + 1


def test_draw_to_csv_file(tmp_path):
    output = tmp_path / "draws.csv"
    args = ["draw", "-d", "25", "--condition", "nlos", "--view", "maxdir", "-n", "7", "--seed", "4", "-o", str(output)]
    result = CliRunner().invoke(cli, args)
    assert result.exit_code == 0, result.output
    assert "7 realizations written" in result.output
    frame = pd.read_csv(output)
    assert list(frame.columns) == REALIZATION_COLUMNS
    assert frame["index"].tolist() == list(range(7))
    assert (frame["angular_spread"] <= 1.0).all()


def test_draw_csv_output_is_reproducible():
    args = ["draw", "-d", "10", "--condition", "los", "-n", "3", "--format", "csv"]
    first = CliRunner().invoke(cli, args)
    second = CliRunner().invoke(cli, args)
    assert first.exit_code == 0, first.output
    assert first.output == second.output
    assert len(first.output.splitlines()) == 4


def test_draw_rejects_broken_table(tmp_path):
    table = tmp_path / "table.json"
    table.write_text(json.dumps({"format": TABLE_FORMAT, "version": 1, "rows": []}), encoding="utf-8")
    result = CliRunner().invoke(cli, ["draw", "--table", str(table), "-d", "10", "--condition", "los"])
    assert result.exit_code == 1
    assert "Error:" in result.output


def test_synth_writes_sweeps_and_calibration(tmp_path):
    scene = tmp_path / "scene.toml"
    scene.write_text(SCENE, encoding="utf-8")
    sweep, cal = tmp_path / "demo.thzs", tmp_path / "cal.thzs"
    result = CliRunner().invoke(cli, ["synth", str(scene), "-o", str(sweep), "--calibration", str(cal)])
    assert result.exit_code == 0, result.output
    assert "64x4x4" in result.output
    grid = read_sweeps(sweep)
    assert grid.samples.shape == (64, 4, 4)
    assert grid.meta.distance == 6.0
    assert read_calibration(cal).axis == grid.axis


def test_synth_reports_scene_errors(tmp_path):
    scene = tmp_path / "scene.toml"
    scene.write_text("distance = -2.0\n", encoding="utf-8")
    result = CliRunner().invoke(cli, ["synth", str(scene), "-o", str(tmp_path / "x.thzs")])
    assert result.exit_code == 1
    assert "Error:" in result.output


def test_analyze_then_fit(make_campaign, tmp_path):
    manifest = make_campaign(3, 3)
    output = tmp_path / "reports"
    runner = CliRunner()
    result = runner.invoke(cli, ["analyze", str(manifest), "--output", str(output), "--seed", "17"])
    assert result.exit_code == 0, result.output
    assert "6 links (3 LoS, 3 NLoS)" in result.output
    assert "Reports written to" in result.output
    assert (output / "records.csv").is_file()
    assert (output / "model_table.json").is_file()
    run = json.loads((output / "run.json").read_text())
    assert run["seed"] == 17
    assert run["version"] == __version__

    table = tmp_path / "refit.json"
    result = runner.invoke(cli, ["fit", str(output / "records.csv"), "-o", str(table)])
    assert result.exit_code == 0, result.output
    assert json.loads(table.read_text()) == json.loads((output / "model_table.json").read_text())


def test_fit_refuses_incomplete_table(tmp_path):
    records = [
        LinkRecord(f"L{i}", d, True, pl, pl + 1.0, 10e-9, 2e-9, 0.3, 0.4, 5.0, 12.0)
        for i, (d, pl) in enumerate([(2.0, 82.0), (8.0, 92.5), (20.0, 99.0), (45.0, 106.0)])
    ]
    path = tmp_path / "records.csv"
    records_frame(records).to_csv(path, index=False)
    output = tmp_path / "table.json"
    result = CliRunner().invoke(cli, ["fit", str(path), "-o", str(output)])
    assert result.exit_code == 1
    assert "incomplete" in result.output
    assert not output.exists()


def test_fit_reports_missing_columns(tmp_path):
    path = tmp_path / "records.csv"
    path.write_text("link_id,distance\nL1,2.0\n", encoding="utf-8")
    result = CliRunner().invoke(cli, ["fit", str(path)])
    assert result.exit_code == 1
    assert "Error:" in result.output
