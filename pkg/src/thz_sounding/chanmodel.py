"""Consolidated channel model table, stochastic parameter generator and link budget."""

import json
import logging
import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from enum import StrEnum
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike, NDArray

from thz_sounding.errors import ModelTableError, SoundingError
from thz_sounding.statfit import LinearLogdFit, LognormalFit, PowerLawFit

logger = logging.getLogger(__name__)

TABLE_FORMAT = "thz-sounding-model-table"
TABLE_VERSION = 1
VALID_RANGE = (1.0, 100.0)
THERMAL_NOISE_DENSITY = -174.0


class Parameter(StrEnum):
    PL = "pl"
    DS = "ds"
    AS = "as"
    K1 = "k1"
    EPS = "eps"


class Condition(StrEnum):
    LOS = "los"
    NLOS = "nlos"


class View(StrEnum):
    OMNI = "omni"
    MAXDIR = "maxdir"
    NA = "n/a"


class FitKind(StrEnum):
    LINEAR = "linear"
    STATISTICAL = "statistical"


class Estimator(StrEnum):
    WEIGHTED = "weighted"
    OLS = "ols"
    MOMENTS = "moments"


# Path loss, kappa1 and shadowing in dB; delay spread as 10*log10(seconds);
# angular spread as log10 of the Fleury spread.
UNITS: dict[Parameter, str] = {
    Parameter.PL: "dB",
    Parameter.DS: "dB-s",
    Parameter.AS: "log10",
    Parameter.K1: "dB",
    Parameter.EPS: "dB",
}


class RowKey(NamedTuple):
    parameter: Parameter
    condition: Condition
    view: View
    kind: FitKind
    estimator: Estimator

    def label(self) -> str:
        return "/".join(str(part) for part in self)


def _enum(kind: type[StrEnum], value: Any, error: type[SoundingError] = ModelTableError) -> Any:
    try:
        return kind(str(value).lower())
    except ValueError:
        choices = ", ".join(member.value for member in kind)
        raise error(f"unknown {kind.__name__.lower()} {value!r} (expected one of: {choices})") from None


def _interval(value: Any) -> tuple[float, float] | None:
    if value is None:
        return None
    low, high = (float(v) for v in value)
    if low > high:
        raise ModelTableError(f"confidence interval {value} is not ordered")
    return low, high


@dataclass(frozen=True)
class ModelRow:
    """One row of the model table: (alpha, beta) for a trend or (mu, sigma) for a distribution."""

    key: RowKey
    units: str
    alpha: float | None = None
    beta: float | None = None
    mu: float | None = None
    sigma: float | None = None
    ci95: dict[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        expected = UNITS[self.key.parameter]
        if self.units != expected:
            raise ModelTableError(f"row {self.key.label()} has units {self.units!r}, expected {expected!r}")
        if self.key.kind is FitKind.LINEAR:
            if self.alpha is None or self.beta is None:
                raise ModelTableError(f"linear row {self.key.label()} needs alpha and beta")
        else:
            if self.mu is None or self.sigma is None:
                raise ModelTableError(f"statistical row {self.key.label()} needs mu and sigma")
            if self.sigma < 0:
                raise ModelTableError(f"row {self.key.label()} has negative sigma {self.sigma}")

    @classmethod
    def from_fit(cls, key: RowKey, fit: PowerLawFit | LinearLogdFit | LognormalFit) -> "ModelRow":
        """Row for a fit produced by statfit."""
        units = UNITS[key.parameter]
        if isinstance(fit, LognormalFit):
            return cls(key, units, mu=fit.mu, sigma=fit.sigma, ci95={"mu": fit.mu_ci, "sigma": fit.sigma_ci})
        return cls(key, units, alpha=fit.alpha, beta=fit.beta, ci95={"alpha": fit.alpha_ci, "beta": fit.beta_ci})

    def to_document(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "parameter": self.key.parameter.value,
            "condition": self.key.condition.value,
            "view": self.key.view.value,
            "kind": self.key.kind.value,
            "estimator": self.key.estimator.value,
            "units": self.units,
        }
        names = ("alpha", "beta") if self.key.kind is FitKind.LINEAR else ("mu", "sigma")
        for name in names:
            doc[name] = getattr(self, name)
        if self.ci95:
            doc["ci95"] = {name: list(bounds) for name, bounds in self.ci95.items()}
        return doc

    @classmethod
    def from_document(cls, doc: Mapping[str, Any]) -> "ModelRow":
        try:
            key = RowKey(
                _enum(Parameter, doc["parameter"]),
                _enum(Condition, doc["condition"]),
                _enum(View, doc["view"]),
                _enum(FitKind, doc["kind"]),
                _enum(Estimator, doc["estimator"]),
            )
            values = {name: float(doc[name]) for name in ("alpha", "beta", "mu", "sigma") if doc.get(name) is not None}
            ci95 = {name: _interval(bounds) for name, bounds in (doc.get("ci95") or {}).items()}
            return cls(key, str(doc["units"]), ci95=ci95, **values)
        except KeyError as e:
            raise ModelTableError(f"model table row is missing field {e.args[0]!r}") from None
        except (TypeError, ValueError) as e:
            if isinstance(e, ModelTableError):
                raise
            raise ModelTableError(f"malformed model table row {dict(doc)}: {e}") from None


class FitReport(NamedTuple):
    """A fitted model parameter and the table row it populates."""

    key: RowKey
    fit: PowerLawFit | LinearLogdFit | LognormalFit
    n: int


def required_keys() -> list[RowKey]:
    """Rows that draw_link needs for every condition and view."""
    keys = []
    for condition in Condition:
        for view in (View.OMNI, View.MAXDIR):
            keys += [
                RowKey(Parameter.PL, condition, view, FitKind.LINEAR, Estimator.WEIGHTED),
                RowKey(Parameter.EPS, condition, view, FitKind.STATISTICAL, Estimator.OLS),
                RowKey(Parameter.DS, condition, view, FitKind.STATISTICAL, Estimator.MOMENTS),
                RowKey(Parameter.K1, condition, view, FitKind.STATISTICAL, Estimator.MOMENTS),
            ]
        keys.append(RowKey(Parameter.AS, condition, View.NA, FitKind.STATISTICAL, Estimator.MOMENTS))
    return keys


class ModelTable:
    """Rows keyed by (parameter, condition, view, kind, estimator)."""

    def __init__(self, rows: Iterable[ModelRow]):
        self.rows: dict[RowKey, ModelRow] = {}
        for row in rows:
            if row.key in self.rows:
                raise ModelTableError(f"duplicate model table row {row.key.label()}")
            self.rows[row.key] = row

    def __len__(self) -> int:
        return len(self.rows)

    def __contains__(self, key: RowKey) -> bool:
        return key in self.rows

    def get(
        self,
        parameter: Parameter,
        condition: Condition,
        view: View,
        kind: FitKind = FitKind.STATISTICAL,
        estimator: Estimator = Estimator.MOMENTS,
    ) -> ModelRow:
        key = RowKey(Parameter(parameter), Condition(condition), View(view), FitKind(kind), Estimator(estimator))
        try:
            return self.rows[key]
        except KeyError:
            raise ModelTableError(f"model table has no row {key.label()}") from None

    def missing(self) -> list[RowKey]:
        return [key for key in required_keys() if key not in self.rows]

    @property
    def is_complete(self) -> bool:
        return not self.missing()

    def validate(self) -> "ModelTable":
        missing = self.missing()
        if missing:
            raise ModelTableError(f"model table is missing rows: {', '.join(key.label() for key in missing)}")
        return self

    def sorted_rows(self) -> list[ModelRow]:
        return [self.rows[key] for key in sorted(self.rows)]

    def to_document(self) -> dict[str, Any]:
        return {
            "format": TABLE_FORMAT,
            "version": TABLE_VERSION,
            "rows": [row.to_document() for row in self.sorted_rows()],
        }

    @classmethod
    def from_document(cls, doc: Mapping[str, Any]) -> "ModelTable":
        if not isinstance(doc, Mapping) or doc.get("format") != TABLE_FORMAT:
            raise ModelTableError(f"not a model table document (format must be {TABLE_FORMAT!r})")
        if doc.get("version") != TABLE_VERSION:
            raise ModelTableError(f"unsupported model table version {doc.get('version')!r}")
        rows = doc.get("rows")
        if not isinstance(rows, list):
            raise ModelTableError("model table document has no row list")
        return cls(ModelRow.from_document(row) for row in rows)

    @classmethod
    def from_fits(cls, reports: Iterable[FitReport]) -> "ModelTable":
        return cls(ModelRow.from_fit(report.key, report.fit) for report in reports)


def _linear(parameter, condition, view, estimator, alpha, beta) -> ModelRow:
    key = RowKey(parameter, condition, view, FitKind.LINEAR, estimator)
    return ModelRow(key, UNITS[parameter], alpha=alpha, beta=beta)


def _statistical(parameter, condition, view, estimator, mu, sigma) -> ModelRow:
    key = RowKey(parameter, condition, view, FitKind.STATISTICAL, estimator)
    return ModelRow(key, UNITS[parameter], mu=mu, sigma=sigma)


def _default_rows() -> list[ModelRow]:
    P, C, V, E = Parameter, Condition, View, Estimator
    return [
        # Linear-in-log10(d) summary
        _linear(P.PL, C.LOS, V.OMNI, E.WEIGHTED, 76.77, 1.74),
        _linear(P.PL, C.LOS, V.MAXDIR, E.WEIGHTED, 76.77, 1.78),
        _linear(P.PL, C.NLOS, V.OMNI, E.WEIGHTED, 95.45, 1.49),
        _linear(P.PL, C.NLOS, V.MAXDIR, E.WEIGHTED, 100.47, 1.35),
        _linear(P.PL, C.LOS, V.OMNI, E.OLS, 76.53, 1.8),
        _linear(P.PL, C.LOS, V.MAXDIR, E.OLS, 76.42, 1.86),
        _linear(P.PL, C.NLOS, V.OMNI, E.OLS, 96.26, 1.53),
        _linear(P.PL, C.NLOS, V.MAXDIR, E.OLS, 101.03, 1.45),
        _linear(P.DS, C.LOS, V.OMNI, E.WEIGHTED, -82.7, 4.65),
        _linear(P.DS, C.LOS, V.MAXDIR, E.WEIGHTED, -86.96, 4.26),
        _linear(P.DS, C.NLOS, V.OMNI, E.WEIGHTED, -67.74, -3.24),
        _linear(P.DS, C.NLOS, V.MAXDIR, E.WEIGHTED, -70.77, -6.96),
        _linear(P.K1, C.LOS, V.OMNI, E.WEIGHTED, 14.95, -3.39),
        _linear(P.K1, C.LOS, V.MAXDIR, E.WEIGHTED, 11.47, 6.19),
        _linear(P.K1, C.NLOS, V.OMNI, E.WEIGHTED, -4.88, 4.35),
        _linear(P.K1, C.NLOS, V.MAXDIR, E.WEIGHTED, 4.71, 2.69),
        _linear(P.AS, C.LOS, V.NA, E.WEIGHTED, -0.68, 0.12),
        _linear(P.AS, C.NLOS, V.NA, E.WEIGHTED, -0.02, -0.17),
        # Statistical summary
        _statistical(P.EPS, C.LOS, V.OMNI, E.WEIGHTED, 0.58, 1.45),
        _statistical(P.EPS, C.LOS, V.MAXDIR, E.WEIGHTED, 0.8, 1.81),
        _statistical(P.EPS, C.NLOS, V.OMNI, E.WEIGHTED, 1.37, 5.21),
        _statistical(P.EPS, C.NLOS, V.MAXDIR, E.WEIGHTED, 2.09, 6.72),
        _statistical(P.EPS, C.LOS, V.OMNI, E.OLS, -0.01, 1.4),
        _statistical(P.EPS, C.LOS, V.MAXDIR, E.OLS, 0.05, 1.73),
        _statistical(P.EPS, C.NLOS, V.OMNI, E.OLS, 0.02, 5.2),
        _statistical(P.EPS, C.NLOS, V.MAXDIR, E.OLS, 0.0, 6.69),
        _statistical(P.AS, C.LOS, V.NA, E.MOMENTS, -0.49, 0.19),
        _statistical(P.AS, C.NLOS, V.NA, E.MOMENTS, -0.23, 0.16),
        _statistical(P.DS, C.LOS, V.OMNI, E.MOMENTS, -76.84, 3.05),
        _statistical(P.DS, C.LOS, V.MAXDIR, E.MOMENTS, -83.15, 3.08),
        _statistical(P.DS, C.NLOS, V.OMNI, E.MOMENTS, -71.92, 1.8),
        _statistical(P.DS, C.NLOS, V.MAXDIR, E.MOMENTS, -80.34, 3.96),
        _statistical(P.K1, C.LOS, V.OMNI, E.MOMENTS, 9.58, 6.05),
        _statistical(P.K1, C.LOS, V.MAXDIR, E.MOMENTS, 17.88, 6.07),
        _statistical(P.K1, C.NLOS, V.OMNI, E.MOMENTS, 0.54, 4.93),
        _statistical(P.K1, C.NLOS, V.MAXDIR, E.MOMENTS, 9.84, 6.95),
    ]


def default_model_table() -> ModelTable:
    """Built-in model table of the 145-146 GHz D2D campaign."""
    return ModelTable(_default_rows()).validate()


def load_model_table(source: str | Path | Mapping[str, Any] | None = None) -> ModelTable:
    """Load and validate a model table from a JSON file or an already parsed document.

    ``None`` returns the built-in default table.
    """
    if source is None:
        return default_model_table()
    if isinstance(source, Mapping):
        return ModelTable.from_document(source).validate()
    path = Path(source)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ModelTableError(f"{path}: invalid JSON: {e}") from None
    return ModelTable.from_document(doc).validate()


def save_model_table(table: ModelTable, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(table.to_document(), indent=2) + "\n", encoding="utf-8")
    return path


@dataclass(frozen=True)
class LinkRealization:
    """One generated set of condensed channel parameters."""

    distance: float
    condition: Condition
    view: View
    pl: float
    shadowing: float
    ds: float
    angular_spread: float
    k1: float
    as_clamped: bool
    seed: int
    index: int = 0

    def __post_init__(self):
        if self.ds < 0:
            raise SoundingError(f"delay spread must be non-negative, got {self.ds}")
        if not 0.0 <= self.angular_spread <= 1.0:
            raise SoundingError(f"angular spread {self.angular_spread} outside [0, 1]")


REALIZATION_COLUMNS = [
    "index",
    "distance",
    "condition",
    "view",
    "seed",
    "pl",
    "shadowing",
    "ds",
    "angular_spread",
    "k1",
    "as_clamped",
]


@dataclass(frozen=True, eq=False)
class RealizationBatch:
    """Vectorized draws for one (distance, condition, view) from one seeded stream.

    ``as_log10`` keeps the unclamped log10 angular-spread draws.
    """

    distance: float
    condition: Condition
    view: View
    seed: int
    pl: NDArray[np.float64]
    shadowing: NDArray[np.float64]
    ds: NDArray[np.float64]
    as_log10: NDArray[np.float64]
    angular_spread: NDArray[np.float64]
    k1: NDArray[np.float64]
    as_clamped: NDArray[np.bool_]

    def __len__(self) -> int:
        return self.pl.size

    def __getitem__(self, index: int) -> LinkRealization:
        if not -len(self) <= index < len(self):
            raise IndexError(index)
        index %= len(self)
        return LinkRealization(
            distance=self.distance,
            condition=self.condition,
            view=self.view,
            pl=float(self.pl[index]),
            shadowing=float(self.shadowing[index]),
            ds=float(self.ds[index]),
            angular_spread=float(self.angular_spread[index]),
            k1=float(self.k1[index]),
            as_clamped=bool(self.as_clamped[index]),
            seed=self.seed,
            index=index,
        )

    @property
    def clamp_rate(self) -> float:
        return float(self.as_clamped.mean()) if len(self) else 0.0

    def to_frame(self) -> pd.DataFrame:
        n = len(self)
        return pd.DataFrame(
            {
                "index": np.arange(n),
                "distance": np.full(n, self.distance),
                "condition": [self.condition.value] * n,
                "view": [self.view.value] * n,
                "seed": np.full(n, self.seed),
                "pl": self.pl,
                "shadowing": self.shadowing,
                "ds": self.ds,
                "angular_spread": self.angular_spread,
                "k1": self.k1,
                "as_clamped": self.as_clamped,
            },
            columns=REALIZATION_COLUMNS,
        )


def _check_distance(d: float) -> float:
    d = float(d)
    if not d > 0 or not math.isfinite(d):
        raise SoundingError(f"distance must be positive and finite, got {d}")
    low, high = VALID_RANGE
    if not low <= d <= high:
        logger.warning("distance %.3g m lies outside the measured range %g-%g m; extrapolating", d, low, high)
    return d


def _draw_view(view: str | View) -> View:
    view = _enum(View, view, SoundingError)
    if view is View.NA:
        raise SoundingError("draws need a concrete view: omni or maxdir")
    return view


def mean_path_loss(
    table: ModelTable, d: ArrayLike, condition: str | Condition, view: str | View, estimator=Estimator.WEIGHTED
) -> NDArray[np.float64]:
    """Power-law mean alpha + 10 beta log10(d) without shadowing."""
    condition = _enum(Condition, condition, SoundingError)
    row = table.get(Parameter.PL, condition, _draw_view(view), FitKind.LINEAR, Estimator(estimator))
    return row.alpha + 10.0 * row.beta * np.log10(np.asarray(d, dtype=np.float64))


def draw_links(
    table: ModelTable,
    d: float,
    condition: str | Condition,
    view: str | View,
    count: int = 1,
    seed: int = 0,
    distance_trend: bool = False,
) -> RealizationBatch:
    """Draw ``count`` independent parameter sets at distance ``d``.

    Each link consumes four standard normals in a fixed order (shadowing, delay
    spread, angular spread, kappa1), so the first draw of any batch equals a
    single draw with the same seed. With ``distance_trend`` the delay-spread, angular-spread and
    kappa1 means follow the linear rows at ``d`` while sigmas stay statistical.
    """
    d = _check_distance(d)
    condition = _enum(Condition, condition, SoundingError)
    view = _draw_view(view)
    if count < 1:
        raise SoundingError(f"count must be at least 1, got {count}")

    def mean_sigma(parameter: Parameter, row_view: View) -> tuple[float, float]:
        stat = table.get(parameter, condition, row_view)
        if not distance_trend:
            return stat.mu, stat.sigma
        trend = table.get(parameter, condition, row_view, FitKind.LINEAR, Estimator.WEIGHTED)
        return trend.alpha + trend.beta * math.log10(d), stat.sigma

    pl_row = table.get(Parameter.PL, condition, view, FitKind.LINEAR, Estimator.WEIGHTED)
    eps_sigma = table.get(Parameter.EPS, condition, view, FitKind.STATISTICAL, Estimator.OLS).sigma
    ds_mu, ds_sigma = mean_sigma(Parameter.DS, view)
    as_mu, as_sigma = mean_sigma(Parameter.AS, View.NA)
    k1_mu, k1_sigma = mean_sigma(Parameter.K1, view)

    z = np.random.default_rng(seed).standard_normal((count, 4))
    shadowing = eps_sigma * z[:, 0]
    ds_db = ds_mu + ds_sigma * z[:, 1]
    as_log10 = as_mu + as_sigma * z[:, 2]
    k1 = k1_mu + k1_sigma * z[:, 3]

    spread = 10.0**as_log10
    clamped = spread > 1.0
    if clamped.any():
        logger.debug("clamped %d of %d angular-spread draws to 1", int(clamped.sum()), count)

    return RealizationBatch(
        distance=d,
        condition=condition,
        view=view,
        seed=seed,
        pl=pl_row.alpha + 10.0 * pl_row.beta * math.log10(d) + shadowing,
        shadowing=shadowing,
        ds=10.0 ** (ds_db / 10.0),
        as_log10=as_log10,
        angular_spread=np.minimum(spread, 1.0),
        k1=k1,
        as_clamped=clamped,
    )


def draw_link(
    table: ModelTable,
    d: float,
    condition: str | Condition,
    view: str | View,
    seed: int = 0,
    distance_trend: bool = False,
) -> LinkRealization:
    return draw_links(table, d, condition, view, count=1, seed=seed, distance_trend=distance_trend)[0]


@dataclass(frozen=True)
class LinkBudgetSpec:
    """Transmit power in dBm, antenna gains in dBi, bandwidth in Hz, noise figure and SNR in dB."""

    tx_power: float = 10.0
    antenna_gain_tx: float = 23.0
    antenna_gain_rx: float = 23.0
    bandwidth: float = 1e9
    noise_figure: float = 5.0
    required_snr: float = 5.0
    noise_density: float = THERMAL_NOISE_DENSITY

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise SoundingError(f"bandwidth must be positive, got {self.bandwidth}")

    @property
    def noise_power(self) -> float:
        """Receiver noise power in dBm."""
        return self.noise_density + 10.0 * math.log10(self.bandwidth) + self.noise_figure

    @property
    def max_path_loss(self) -> float:
        return self.tx_power + self.antenna_gain_tx + self.antenna_gain_rx - self.noise_power - self.required_snr


def link_budget_margin(spec: LinkBudgetSpec, pl: float) -> float:
    """Headroom in dB between the tolerable and the given path loss."""
    return spec.max_path_loss - pl
