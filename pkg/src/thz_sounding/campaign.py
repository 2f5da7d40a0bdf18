"""Campaign orchestration: per-link condensation, grouped fits, model table and report files."""

import json
import logging
import math
import re
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
import pandas as pd

from thz_sounding import __version__
from thz_sounding.chanmodel import (
    Condition,
    Estimator,
    FitKind,
    FitReport,
    ModelTable,
    Parameter,
    RowKey,
    View,
    save_model_table,
)
from thz_sounding.errors import (
    DegenerateFitError,
    InsufficientDataError,
    SoundingError,
    SweepFormatError,
    UnusableLinkError,
)
from thz_sounding.metrics import RECORD_COLUMNS, LinkEnd, LinkRecord, LinkViews, link_views, marginal_aps, summarize
from thz_sounding.parser import DatasetManifest, LinkEntry, RunConfig
from thz_sounding.sounding import CalibrationTrace, SweepGrid
from thz_sounding.statfit import (
    PERCENTILES,
    LognormalFit,
    empirical_cdf,
    fit_linear_logd,
    fit_lognormal,
    fit_ols,
    fit_power_law,
    shadowing_residuals,
)
from thz_sounding.sweepfile import header_distance, read_calibration, read_sweeps

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
MIN_LINKS = 3

FIT_COLUMNS = [
    "parameter",
    "condition",
    "view",
    "kind",
    "estimator",
    "n",
    "alpha",
    "alpha_min",
    "alpha_max",
    "beta",
    "beta_min",
    "beta_max",
    "mu",
    "mu_min",
    "mu_max",
    "sigma",
    "sigma_min",
    "sigma_max",
    "p10",
    "p90",
]


@dataclass
class FitResult:
    """Fit reports plus the plot-ready data behind them, keyed by file stem."""

    reports: list[FitReport] = field(default_factory=list)
    plots: dict[str, pd.DataFrame] = field(default_factory=dict)

    @property
    def table(self) -> ModelTable:
        return ModelTable.from_fits(self.reports)


@dataclass
class CampaignResult:
    records: list[LinkRecord]
    fits: FitResult
    table: ModelTable | None
    unusable: list[str] = field(default_factory=list)
    link_plots: dict[str, pd.DataFrame] = field(default_factory=dict)


class LinkOutcome(NamedTuple):
    """One processed link: its record (None when unusable) and its plot tables."""

    record: LinkRecord | None
    plots: dict[str, pd.DataFrame]


def ingest_sweeps(manifest: DatasetManifest, expected_shape: tuple[int, int, int] | None = None) -> list[SweepGrid]:
    """Load every link's sweep tensor, in manifest order."""
    grids = []
    for entry in manifest.links:
        grid = _read_link(entry)
        if expected_shape is not None and grid.samples.shape != tuple(expected_shape):
            raise SweepFormatError(f"{entry.sweep}: shape {grid.samples.shape}, expected {tuple(expected_shape)}")
        grids.append(grid)
    return grids


def _read_link(entry: LinkEntry) -> SweepGrid:
    stored = header_distance(entry.sweep)
    if stored > 0 and not math.isclose(stored, entry.distance, rel_tol=1e-6):
        logger.warning(
            "link %s: sweep header distance %.3f m disagrees with manifest %.3f m; using the manifest",
            entry.link_id,
            stored,
            entry.distance,
        )
    return read_sweeps(entry.sweep, meta=entry.meta)


def _file_stem(link_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", link_id)


def link_plots(views: LinkViews) -> dict[str, pd.DataFrame]:
    """Per-link PDPs (omni against max-dir), marginal APS of both ends and the DDAPS grid."""
    stem = _file_stem(views.meta.link_id)
    pdp = pd.DataFrame({"delay": views.omni.delays, "omni": views.omni.powers, "maxdir": views.best.pdp.powers})

    sides = [marginal_aps(views.ddaps, side) for side in LinkEnd]
    aps = pd.concat(
        [pd.DataFrame({"side": str(a.side), "azimuth": a.angles, "power": a.power}) for a in sides],
        ignore_index=True,
    )

    angles = views.ddaps.angles
    tx, rx = np.meshgrid(angles.azimuths_tx, angles.azimuths_rx, indexing="ij")
    ddaps = pd.DataFrame({"tx_azimuth": tx.ravel(), "rx_azimuth": rx.ravel(), "power": views.ddaps.power.ravel()})
    return {f"pdp_{stem}": pdp, f"aps_{stem}": aps, f"ddaps_{stem}": ddaps}


def process_link(entry: LinkEntry, calibration: CalibrationTrace, config: RunConfig) -> LinkOutcome:
    """Condense one link.

    Any per-link failure (unreadable sweep file, no usable signal, a PDP without
    a local maximum) is logged and yields a None record; the campaign goes on.
    """
    try:
        views = link_views(_read_link(entry), calibration, config.gating)
        record = summarize(views)
    except UnusableLinkError as e:
        logger.warning("link %s skipped as unusable: %s", entry.link_id, e)
        return LinkOutcome(None, {})
    except SoundingError as e:
        logger.warning("link %s skipped: %s", entry.link_id, e)
        return LinkOutcome(None, {})
    plots = link_plots(views) if "plots" in config.analyses else {}
    return LinkOutcome(record, plots)


def condition_of(record: LinkRecord) -> Condition:
    return Condition.LOS if record.los else Condition.NLOS


def _attempt(label: str, fit: Callable[[], object]):
    try:
        return fit()
    except (InsufficientDataError, DegenerateFitError) as e:
        logger.warning("%s fit skipped: %s", label, e)
        return None


def _finite(label: str, d: np.ndarray, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    keep = np.isfinite(values)
    dropped = int((~keep).sum())
    if dropped:
        logger.info("%s: excluded %d non-finite value(s) from the fit", label, dropped)
    return d[keep], values[keep]


def _cdf_frame(values: np.ndarray, fit: LognormalFit) -> pd.DataFrame:
    ordered, positions = empirical_cdf(values)
    return pd.DataFrame({"value": ordered, "empirical": positions, "fitted": fit.cdf(ordered)})


def _stem(kind: str, key: RowKey) -> str:
    view = "pooled" if key.view is View.NA else key.view.value
    return f"{kind}_{key.parameter.value}_{key.condition.value}_{view}_{key.estimator.value}"


class _Fitter:
    """Collects reports and plot data for one condition."""

    def __init__(self, condition: Condition, n_bins: int, result: FitResult):
        self.condition = condition
        self.n_bins = n_bins
        self.result = result

    def add(self, key: RowKey, fit) -> None:
        if fit is not None:
            self.result.reports.append(FitReport(key, fit, fit.n))

    def key(self, parameter: Parameter, view: View, kind: FitKind, estimator: Estimator) -> RowKey:
        return RowKey(parameter, self.condition, view, kind, estimator)

    def path_loss(self, view: View, d: np.ndarray, pl: np.ndarray) -> None:
        label = f"{self.condition}/{view} path loss"
        weighted = _attempt(label, lambda: fit_power_law(d, pl, n_bins=self.n_bins))
        ols = _attempt(f"{label} (OLS)", lambda: fit_ols(d, pl))
        self.add(self.key(Parameter.PL, view, FitKind.LINEAR, Estimator.WEIGHTED), weighted)
        self.add(self.key(Parameter.PL, view, FitKind.LINEAR, Estimator.OLS), ols)
        if weighted is None or ols is None:
            return

        scatter = pd.DataFrame({"distance": d, "value": pl, "weighted": weighted.predict(d), "ols": ols.predict(d)})
        self.result.plots[_stem("scatter", self.key(Parameter.PL, view, FitKind.LINEAR, Estimator.WEIGHTED))] = (
            scatter.sort_values("distance", kind="stable")
        )
        for estimator, fit in ((Estimator.WEIGHTED, weighted), (Estimator.OLS, ols)):
            residuals = shadowing_residuals(fit, d, pl)
            key = self.key(Parameter.EPS, view, FitKind.STATISTICAL, estimator)
            shadowing = _attempt(f"{label} shadowing ({estimator})", lambda r=residuals: fit_lognormal(r))
            self.add(key, shadowing)
            if shadowing is not None:
                self.result.plots[_stem("cdf", key)] = _cdf_frame(residuals, shadowing)

    def trend_and_distribution(self, parameter: Parameter, view: View, d: np.ndarray, values: np.ndarray) -> None:
        label = f"{self.condition}/{view} {parameter}"
        d, values = _finite(label, d, values)
        linear_key = self.key(parameter, view, FitKind.LINEAR, Estimator.WEIGHTED)
        stat_key = self.key(parameter, view, FitKind.STATISTICAL, Estimator.MOMENTS)

        trend = _attempt(label, lambda: fit_linear_logd(values, d, n_bins=self.n_bins))
        self.add(linear_key, trend)
        if trend is not None:
            scatter = pd.DataFrame({"distance": d, "value": values, "weighted": trend.predict(d)})
            self.result.plots[_stem("scatter", linear_key)] = scatter.sort_values("distance", kind="stable")

        distribution = _attempt(f"{label} distribution", lambda: fit_lognormal(values))
        self.add(stat_key, distribution)
        if distribution is not None:
            self.result.plots[_stem("cdf", stat_key)] = _cdf_frame(values, distribution)


def fit_records(records: Sequence[LinkRecord], n_bins: int = 10) -> FitResult:
    """LoS/NLoS-separated fits of every condensed parameter.

    Delay spreads are fitted as 10*log10(seconds), angular spreads as log10 of
    the Fleury spread pooled over both link ends. Zero delay spreads and
    single-peak kappa1 values are left out with a notice.
    """
    result = FitResult()
    for condition in Condition:
        group = [r for r in records if condition_of(r) is condition]
        if len(group) < MIN_LINKS:
            logger.warning("%s: %d usable link(s), fewer than %d; fits skipped", condition, len(group), MIN_LINKS)
            continue

        fitter = _Fitter(condition, n_bins, result)
        d = np.array([r.distance for r in group])
        with np.errstate(divide="ignore"):
            for view, pl, ds, k1 in (
                (View.OMNI, "pl_omni", "ds_omni", "k1_omni"),
                (View.MAXDIR, "pl_maxdir", "ds_maxdir", "k1_maxdir"),
            ):
                fitter.path_loss(view, d, np.array([getattr(r, pl) for r in group]))
                ds_db = 10.0 * np.log10(np.array([getattr(r, ds) for r in group]))
                fitter.trend_and_distribution(Parameter.DS, view, d, ds_db)
                fitter.trend_and_distribution(Parameter.K1, view, d, np.array([getattr(r, k1) for r in group]))

            spreads = np.array([r.as_tx for r in group] + [r.as_rx for r in group])
            fitter.trend_and_distribution(Parameter.AS, View.NA, np.concatenate([d, d]), np.log10(spreads))
    return result


def _load_calibrations(manifest: DatasetManifest) -> dict[Path, CalibrationTrace]:
    return {path: read_calibration(path) for path in sorted({entry.calibration for entry in manifest.links})}


def run_campaign(
    manifest: DatasetManifest,
    config: RunConfig = RunConfig(),
    on_link: Callable[[LinkEntry, LinkRecord | None], None] | None = None,
) -> CampaignResult:
    """Condense every link, fit per condition and build the model table.

    Links are processed on ``config.workers`` threads; records come back sorted
    by link id. Outputs are written when ``config.output_dir`` is set.
    """
    calibrations = _load_calibrations(manifest)

    def work(entry: LinkEntry) -> tuple[LinkEntry, LinkOutcome]:
        outcome = process_link(entry, calibrations[entry.calibration], config)
        if on_link is not None:
            on_link(entry, outcome.record)
        return entry, outcome

    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        outcomes = sorted(pool.map(work, manifest.links), key=lambda item: item[0].link_id)

    records = [outcome.record for _, outcome in outcomes if outcome.record is not None]
    unusable = [entry.link_id for entry, outcome in outcomes if outcome.record is None]
    plots = {stem: frame for _, outcome in outcomes for stem, frame in outcome.plots.items()}
    fits = fit_records(records, config.n_bins)

    table = fits.table
    if not table.is_complete:
        logger.warning("model table incomplete; missing %d required row(s)", len(table.missing()))
        table = None

    result = CampaignResult(records=records, fits=fits, table=table, unusable=unusable, link_plots=plots)
    if config.output_dir is not None:
        write_outputs(result, config.output_dir, config.analyses, config)
    return result


def records_frame(records: Iterable[LinkRecord]) -> pd.DataFrame:
    return pd.DataFrame([record.to_row() for record in records], columns=RECORD_COLUMNS)


def read_records(path: str | Path) -> list[LinkRecord]:
    """Parse a records CSV written by ``write_outputs``."""
    frame = pd.read_csv(path, dtype={"link_id": str, "tx_id": str, "rx_id": str})
    missing = set(RECORD_COLUMNS) - set(frame.columns)
    if missing:
        raise InsufficientDataError(f"{path}: records file lacks columns {', '.join(sorted(missing))}")
    return [LinkRecord.from_row(row) for row in frame.to_dict(orient="records")]


def fits_frame(reports: Iterable[FitReport]) -> pd.DataFrame:
    """One row per fit; distribution rows also carry their fitted 10th and 90th percentiles."""
    rows = []
    for report in reports:
        row: dict[str, object] = {name: value.value for name, value in report.key._asdict().items()}
        row["n"] = report.n
        names = ("mu", "sigma") if isinstance(report.fit, LognormalFit) else ("alpha", "beta")
        for name in names:
            row[name] = getattr(report.fit, name)
            row[f"{name}_min"], row[f"{name}_max"] = getattr(report.fit, f"{name}_ci")
        if isinstance(report.fit, LognormalFit):
            row["p10"], row["p90"] = (float(q) for q in report.fit.quantile(PERCENTILES))
        rows.append(row)
    return pd.DataFrame(rows, columns=FIT_COLUMNS)


def run_summary(result: CampaignResult, config: RunConfig) -> dict[str, object]:
    """Settings and link counts of a run, as written to run.json."""
    return {
        "format": "thz-sounding-run",
        "version": __version__,
        "seed": config.seed,
        "n_bins": config.n_bins,
        "analyses": sorted(config.analyses),
        "gating": asdict(config.gating),
        "usable_links": len(result.records),
        "unusable_links": list(result.unusable),
        "table_complete": result.table is not None,
    }


def write_outputs(
    result: CampaignResult,
    output_dir: str | Path,
    analyses: Iterable[str],
    config: RunConfig | None = None,
) -> list[Path]:
    """Write the selected report files; returns the paths written.

    With a ``config``, the run settings (seed included) go to run.json.
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    analyses = set(analyses)
    written = []

    if "records" in analyses:
        path = output_dir / "records.csv"
        records_frame(result.records).to_csv(path, index=False, float_format=FLOAT_FORMAT)
        written.append(path)
    if "fits" in analyses:
        path = output_dir / "fits.csv"
        fits_frame(result.fits.reports).to_csv(path, index=False, float_format=FLOAT_FORMAT)
        written.append(path)
    if "table" in analyses and result.table is not None:
        written.append(save_model_table(result.table, output_dir / "model_table.json"))
    frames = {**result.fits.plots, **result.link_plots}
    if "plots" in analyses and frames:
        plots = output_dir / "plots"
        plots.mkdir(exist_ok=True)
        for stem in sorted(frames):
            path = plots / f"{stem}.csv"
            frames[stem].to_csv(path, index=False, float_format=FLOAT_FORMAT)
            written.append(path)
    if result.unusable:
        path = output_dir / "unusable.json"
        path.write_text(json.dumps(result.unusable, indent=2) + "\n", encoding="utf-8")
        written.append(path)
    if config is not None:
        path = output_dir / "run.json"
        path.write_text(json.dumps(run_summary(result, config), indent=2) + "\n", encoding="utf-8")
        written.append(path)

    logger.debug("wrote %d file(s) to %s", len(written), output_dir)
    return written
