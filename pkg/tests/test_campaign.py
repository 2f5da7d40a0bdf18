import json
import logging
import math

import numpy as np
import pandas as pd
import pytest
from conftest import CAMPAIGN_DISTANCES, campaign_scenes, write_manifest

from thz_sounding.campaign import (
    FIT_COLUMNS,
    fit_records,
    fits_frame,
    ingest_sweeps,
    read_records,
    records_frame,
    run_campaign,
)
from thz_sounding.chanmodel import Condition, Estimator, FitKind, Parameter, View, default_model_table
from thz_sounding.errors import InsufficientDataError, SweepFormatError
from thz_sounding.metrics import LinkRecord
from thz_sounding.parser import RunConfig, load_manifest
from thz_sounding.synthscene import Scene, los_scene


def _synthetic_records(n_los: int = 8, n_nlos: int = 6, seed: int = 0) -> list[LinkRecord]:
    rng = np.random.default_rng(seed)
    records = []
    for index in range(n_los + n_nlos):
        los = index < n_los
        d = float(10 ** rng.uniform(0, 2))
        pl_maxdir = (76.77 if los else 100.47) + 17.5 * math.log10(d) + rng.normal(0, 1.5)
        records.append(
            LinkRecord(
                link_id=f"R{index:02d}",
                distance=d,
                los=los,
                pl_omni=pl_maxdir - rng.uniform(0.0, 4.0),
                pl_maxdir=pl_maxdir,
                ds_omni=float(10 ** (rng.normal(-76.84, 3.05) / 10)),
                ds_maxdir=float(10 ** (rng.normal(-83.15, 3.08) / 10)),
                as_tx=float(10 ** rng.normal(-0.49, 0.1)),
                as_rx=float(10 ** rng.normal(-0.49, 0.1)),
                k1_omni=float(rng.normal(9.58, 6.05)),
                k1_maxdir=float(rng.normal(17.88, 6.07)),
            )
        )
    return records


def test_ingest_sweeps_loads_every_link(make_campaign):
    manifest = load_manifest(make_campaign(2, 1))
    grids = ingest_sweeps(manifest, expected_shape=(1001, 12, 12))
    assert [grid.meta.link_id for grid in grids] == ["L00", "L01", "L02"]
    assert grids[2].meta.los is False
    with pytest.raises(SweepFormatError, match="expected"):
        ingest_sweeps(manifest, expected_shape=(1001, 36, 36))


def test_manifest_distance_wins_over_header(tmp_path, coarse_grid, caplog):
    (scene,) = campaign_scenes(1, 0)
    path = write_manifest(tmp_path, [scene], coarse_grid)
    text = path.read_text(encoding="utf-8").replace(f"distance = {scene.distance!r}", "distance = 50.0")
    path.write_text(text, encoding="utf-8")
    with caplog.at_level(logging.WARNING, logger="thz_sounding"):
        (grid,) = ingest_sweeps(load_manifest(path))
    assert grid.meta.distance == 50.0
    assert "disagrees with manifest" in caplog.text


def test_run_campaign_writes_reports(make_campaign, tmp_path):
    manifest = load_manifest(make_campaign(3, 3))
    seen = []
    output = tmp_path / "out"
    result = run_campaign(manifest, RunConfig(output_dir=output), on_link=lambda entry, _: seen.append(entry.link_id))

    assert sorted(seen) == [f"L{i:02d}" for i in range(6)]
    assert [r.link_id for r in result.records] == sorted(seen)
    assert result.unusable == []
    assert result.table is not None and result.table.is_complete
    for record in result.records:
        assert record.pl_omni <= record.pl_maxdir
        assert 0.0 <= record.as_tx <= 1.0

    assert read_records(output / "records.csv") == result.records
    fits = json.loads((output / "model_table.json").read_text())
    assert fits["format"] == "thz-sounding-model-table"
    assert (output / "fits.csv").read_text().splitlines()[0] == ",".join(FIT_COLUMNS)
    assert (output / "plots" / "scatter_pl_los_omni_weighted.csv").is_file()
    assert (output / "plots" / "cdf_as_nlos_pooled_moments.csv").is_file()
    assert not (output / "unusable.json").exists()

    pdp = pd.read_csv(output / "plots" / "pdp_L00.csv")
    assert list(pdp.columns) == ["delay", "omni", "maxdir"]
    assert len(pdp) == 1001
    assert (pdp["omni"] >= pdp["maxdir"]).all()
    aps = pd.read_csv(output / "plots" / "aps_L03.csv")
    assert aps.groupby("side")["power"].sum()["tx"] == pytest.approx(aps.groupby("side")["power"].sum()["rx"])
    assert len(pd.read_csv(output / "plots" / "ddaps_L05.csv")) == 144

    run = json.loads((output / "run.json").read_text())
    assert run["seed"] == 0
    assert run["usable_links"] == 6
    assert run["table_complete"] is True

    fits_csv = pd.read_csv(output / "fits.csv")
    statistical = fits_csv[fits_csv["kind"] == "statistical"]
    assert (statistical["p10"] <= statistical["mu"]).all()
    assert (statistical["mu"] <= statistical["p90"]).all()
    assert fits_csv[fits_csv["kind"] == "linear"]["p10"].isna().all()


def test_run_campaign_is_deterministic(make_campaign, tmp_path):
    manifest = load_manifest(make_campaign(3, 3))
    run_campaign(manifest, RunConfig(output_dir=tmp_path / "a"))
    run_campaign(manifest, RunConfig(output_dir=tmp_path / "b", workers=3))
    for name in ("records.csv", "fits.csv", "model_table.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_single_link_campaign_skips_fits(make_campaign, caplog):
    manifest = load_manifest(make_campaign(1, 0))
    with caplog.at_level(logging.WARNING, logger="thz_sounding"):
        result = run_campaign(manifest)
    assert len(result.records) == 1
    assert result.fits.reports == []
    assert result.table is None
    assert "fits skipped" in caplog.text


def test_unusable_link_is_reported(make_campaign, tmp_path):
    noise = Scene(noise_power=1e-6, distance=5.0, link_id="Z99")
    manifest = load_manifest(make_campaign(3, 3, extra=[noise]))
    result = run_campaign(manifest, RunConfig(output_dir=tmp_path / "out", analyses=frozenset({"records"})))
    assert result.unusable == ["Z99"]
    assert "Z99" not in [r.link_id for r in result.records]
    assert json.loads((tmp_path / "out" / "unusable.json").read_text()) == ["Z99"]
    assert not (tmp_path / "out" / "fits.csv").exists()


def test_fit_records_covers_every_required_row():
    result = fit_records(_synthetic_records())
    table = result.table
    assert table.is_complete
    pl = table.get(Parameter.PL, Condition.LOS, View.MAXDIR, FitKind.LINEAR, Estimator.WEIGHTED)
    assert pl.ci95["alpha"][0] <= pl.alpha <= pl.ci95["alpha"][1]
    eps = table.get(Parameter.EPS, Condition.NLOS, View.OMNI, FitKind.STATISTICAL, Estimator.OLS)
    assert eps.mu == pytest.approx(0.0, abs=1e-9)
    assert "cdf_eps_los_maxdir_weighted" in result.plots
    assert list(result.plots["scatter_ds_nlos_omni_weighted"]["distance"]) == sorted(
        result.plots["scatter_ds_nlos_omni_weighted"]["distance"]
    )


def test_fit_records_drops_non_finite_values(caplog):
    records = _synthetic_records()
    records[0] = LinkRecord(**{**records[0].to_row(), "ds_maxdir": 0.0, "k1_maxdir": math.inf})
    with caplog.at_level(logging.INFO, logger="thz_sounding"):
        result = fit_records(records)
    counts = {report.key: report.n for report in result.reports}
    ds_key = next(k for k in counts if k.parameter is Parameter.DS and k.view is View.MAXDIR and k.condition == "los")
    assert counts[ds_key] == 7
    assert "non-finite" in caplog.text


def test_fits_frame_intervals_bracket_estimates():
    frame = fits_frame(fit_records(_synthetic_records()).reports)
    assert list(frame.columns) == FIT_COLUMNS
    linear = frame[frame["kind"] == "linear"]
    assert (linear["alpha_min"] <= linear["alpha"]).all()
    assert (linear["beta"] <= linear["beta_max"]).all()
    statistical = frame[frame["kind"] == "statistical"]
    assert (statistical["sigma_min"] <= statistical["sigma"]).all()


def test_records_csv_round_trip_is_lossless(tmp_path):
    records = _synthetic_records()
    path = tmp_path / "records.csv"
    records_frame(records).to_csv(path, index=False, float_format="%.17g")
    assert read_records(path) == records


def test_read_records_requires_columns(tmp_path):
    path = tmp_path / "records.csv"
    path.write_text("link_id,distance\nL1,3.0\n", encoding="utf-8")
    with pytest.raises(InsufficientDataError, match="lacks columns"):
        read_records(path)


def test_link_beyond_delay_span_does_not_abort_campaign(make_campaign, caplog):
    far = los_scene(350.0, noise_power=1e-18, snap_to_grid=True, link_id="F350")
    manifest = load_manifest(make_campaign(3, 3, extra=[far]))
    with caplog.at_level(logging.WARNING, logger="thz_sounding"):
        result = run_campaign(manifest)
    assert [r.link_id for r in result.records] == ["F350", "L00", "L01", "L02", "L03", "L04", "L05"]
    assert result.unusable == []
    assert result.table is not None
    assert "wrap-around correction skipped" in caplog.text


def test_corrupt_sweep_file_is_skipped(make_campaign, tmp_path, caplog):
    manifest = load_manifest(make_campaign(3, 3))
    broken = tmp_path / "L04.thzs"
    broken.write_bytes(broken.read_bytes()[:-100])
    with caplog.at_level(logging.WARNING, logger="thz_sounding"):
        result = run_campaign(manifest)
    assert result.unusable == ["L04"]
    assert [r.link_id for r in result.records] == ["L00", "L01", "L02", "L03", "L05"]
    assert "link L04 skipped" in caplog.text


def test_link_plots_follow_analyses(make_campaign):
    manifest = load_manifest(make_campaign(1, 0))
    assert run_campaign(manifest, RunConfig(analyses=frozenset({"records"}))).link_plots == {}
    plots = run_campaign(manifest).link_plots
    assert sorted(plots) == ["aps_L00", "ddaps_L00", "pdp_L00"]
    assert list(plots["aps_L00"]["side"].unique()) == ["tx", "rx"]


def _resynthesized_records(seed: int = 38) -> list[LinkRecord]:
    """21 LoS and 17 NLoS links drawn from the built-in model table."""
    table = default_model_table()
    rng = np.random.default_rng(seed)

    def normal(parameter, condition, view, estimator=Estimator.MOMENTS) -> float:
        row = table.get(parameter, condition, view, FitKind.STATISTICAL, estimator)
        return row.mu + row.sigma * rng.standard_normal()

    def path_loss(condition, view, d) -> float:
        row = table.get(Parameter.PL, condition, view, FitKind.LINEAR, Estimator.WEIGHTED)
        return row.alpha + 10 * row.beta * math.log10(d) + normal(Parameter.EPS, condition, view, Estimator.OLS)

    layouts = ((Condition.LOS, CAMPAIGN_DISTANCES), (Condition.NLOS, 10 ** rng.uniform(0.3, 1.9, 17)))
    records = []
    for condition, distances in layouts:
        for index, d in enumerate(distances):
            pl_omni = path_loss(condition, View.OMNI, d)
            pl_maxdir = path_loss(condition, View.MAXDIR, d)
            records.append(
                LinkRecord(
                    link_id=f"{condition}{index:02d}",
                    distance=float(d),
                    los=condition is Condition.LOS,
                    pl_omni=pl_omni,
                    pl_maxdir=max(pl_maxdir, pl_omni),
                    ds_omni=10 ** (normal(Parameter.DS, condition, View.OMNI) / 10),
                    ds_maxdir=10 ** (normal(Parameter.DS, condition, View.MAXDIR) / 10),
                    as_tx=min(10 ** normal(Parameter.AS, condition, View.NA), 1.0),
                    as_rx=min(10 ** normal(Parameter.AS, condition, View.NA), 1.0),
                    k1_omni=normal(Parameter.K1, condition, View.OMNI),
                    k1_maxdir=normal(Parameter.K1, condition, View.MAXDIR),
                )
            )
    return records


def test_fit_records_recovers_resynthesized_model_table():
    truth = default_model_table()
    result = fit_records(_resynthesized_records())
    assert result.table.is_complete

    checked = hits = 0
    for report in result.reports:
        key = report.key
        omni_pl = key.parameter is Parameter.PL and key.view is View.OMNI and key.estimator is Estimator.WEIGHTED
        spreads = key.parameter in (Parameter.DS, Parameter.K1) and key.kind is FitKind.STATISTICAL
        if not (omni_pl or spreads):
            continue
        row = truth.get(*key)
        for name in ("mu", "sigma") if spreads else ("alpha", "beta"):
            low, high = getattr(report.fit, f"{name}_ci")
            checked += 1
            hits += low <= getattr(row, name) <= high
    assert checked == 20
    assert hits >= 16
