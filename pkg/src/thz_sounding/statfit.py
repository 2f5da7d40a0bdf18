"""Power-law, lognormal and linear-in-log10(d) fits with 95% confidence intervals."""

from dataclasses import dataclass
from enum import StrEnum

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import stats

from thz_sounding.errors import DegenerateFitError, InsufficientDataError, SoundingError

CONFIDENCE = 0.95
DEFAULT_BINS = 10
PERCENTILES = (0.10, 0.90)


class Weighting(StrEnum):
    """Regression weighting scheme."""

    LOG10_BINNED = "log10-binned"
    OLS = "ols"
    CUSTOM = "custom"


def _weighting_of(weights: ArrayLike | None, weighting: Weighting | None) -> Weighting:
    if weighting is not None:
        return Weighting(weighting)
    if weights is None:
        return Weighting.LOG10_BINNED
    w = np.asarray(weights, dtype=np.float64)
    return Weighting.OLS if w.size and np.ptp(w) == 0 else Weighting.CUSTOM


def _check_interval(name: str, value: float, interval: tuple[float, float]) -> None:
    low, high = interval
    if not low <= value <= high:
        raise SoundingError(f"{name} = {value} lies outside its confidence interval {interval}")


@dataclass(frozen=True)
class LineFit:
    """Intercept/slope regression result shared by the linear fits."""

    intercept: float
    slope: float
    intercept_ci: tuple[float, float]
    slope_ci: tuple[float, float]
    sigma: float
    n: int


@dataclass(frozen=True)
class PowerLawFit:
    """PL(d) = alpha + 10 beta log10(d) + eps."""

    alpha: float
    beta: float
    sigma_eps: float
    weighting: Weighting
    alpha_ci: tuple[float, float]
    beta_ci: tuple[float, float]
    n: int

    def __post_init__(self):
        _check_interval("alpha", self.alpha, self.alpha_ci)
        _check_interval("beta", self.beta, self.beta_ci)
        if self.sigma_eps < 0:
            raise SoundingError(f"sigma_eps must be non-negative, got {self.sigma_eps}")

    def predict(self, d: ArrayLike) -> NDArray[np.float64]:
        return self.alpha + 10.0 * self.beta * np.log10(np.asarray(d, dtype=np.float64))


@dataclass(frozen=True)
class LinearLogdFit:
    """Z(d) = alpha + beta log10(d)."""

    alpha: float
    beta: float
    alpha_ci: tuple[float, float]
    beta_ci: tuple[float, float]
    sigma: float
    weighting: Weighting
    n: int

    def __post_init__(self):
        _check_interval("alpha", self.alpha, self.alpha_ci)
        _check_interval("beta", self.beta, self.beta_ci)

    def predict(self, d: ArrayLike) -> NDArray[np.float64]:
        return self.alpha + self.beta * np.log10(np.asarray(d, dtype=np.float64))


@dataclass(frozen=True)
class LognormalFit:
    """Gaussian fit in the dB (or log10) domain."""

    mu: float
    sigma: float
    mu_ci: tuple[float, float]
    sigma_ci: tuple[float, float]
    n: int
    degenerate: bool = False

    def __post_init__(self):
        _check_interval("mu", self.mu, self.mu_ci)
        _check_interval("sigma", self.sigma, self.sigma_ci)
        if self.sigma < 0 or (self.sigma == 0 and not self.degenerate):
            raise SoundingError(f"sigma must be positive, got {self.sigma}")

    def cdf(self, values: ArrayLike) -> NDArray[np.float64]:
        values = np.asarray(values, dtype=np.float64)
        if self.degenerate:
            return (values >= self.mu).astype(np.float64)
        return stats.norm.cdf(values, loc=self.mu, scale=self.sigma)

    def quantile(self, q: ArrayLike) -> NDArray[np.float64]:
        """Inverse CDF in the fitted domain; a degenerate fit returns mu for every level."""
        q = np.asarray(q, dtype=np.float64)
        if self.degenerate:
            return np.full(q.shape, self.mu)
        return stats.norm.ppf(q, loc=self.mu, scale=self.sigma)


def log_distance_weights(d: ArrayLike, n_bins: int = DEFAULT_BINS) -> NDArray[np.float64]:
    """Equal total weight per occupied log10(d) bin, split evenly among the bin's points."""
    d = np.asarray(d, dtype=np.float64)
    if d.size == 0:
        raise InsufficientDataError("no distances to weight")
    if n_bins < 1:
        raise SoundingError(f"n_bins must be at least 1, got {n_bins}")
    if np.any(~np.isfinite(d)) or np.any(d <= 0):
        raise SoundingError("distances must be positive and finite")

    x = np.log10(d)
    low, high = x.min(), x.max()
    if high == low:
        index = np.zeros(x.size, dtype=np.intp)
    else:
        index = np.minimum(((x - low) / (high - low) * n_bins).astype(np.intp), n_bins - 1)
    counts = np.bincount(index, minlength=n_bins)
    occupied = np.count_nonzero(counts)
    return 1.0 / (occupied * counts[index])


def weighted_line(x: ArrayLike, y: ArrayLike, weights: ArrayLike | None = None) -> LineFit:
    """Weighted least-squares line with t-based 95% intervals.

    Weights are rescaled to mean one. The coefficient covariance is the sandwich
    form ``s^2 A^-1 X'W^2X A^-1`` with ``A = X'WX``, which reduces to the OLS
    covariance (and ``s`` to the OLS residual deviation) for uniform weights.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.size
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    if y.shape != x.shape or w.shape != x.shape:
        raise SoundingError(f"x, y and weights lengths differ: {x.size}, {y.size}, {w.size}")
    if n < 3:
        raise InsufficientDataError(f"line fit needs at least 3 points, got {n}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and np.all(np.isfinite(w))):
        raise SoundingError("line fit inputs must be finite")
    if np.any(w < 0) or not w.sum() > 0:
        raise SoundingError("weights must be non-negative with a positive sum")
    if np.ptp(x) == 0:
        raise DegenerateFitError("all abscissae are equal; slope is undetermined")

    w = w * (n / w.sum())
    design = np.column_stack([np.ones(n), x])
    root_w = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(design * root_w[:, None], y * root_w, rcond=None)
    residuals = y - design @ coef

    bread = np.linalg.inv(design.T @ (design * w[:, None]))
    meat = design.T @ (design * (w**2)[:, None])
    # E[sum w r^2] = sigma^2 (n - tr(A^-1 X'W^2X)); the trace is 2 for uniform weights.
    residual_dof = max(n - float(np.trace(bread @ meat)), 1.0)
    s2 = float(np.dot(w, residuals**2)) / residual_dof
    covariance = s2 * bread @ meat @ bread
    half = stats.t.ppf(0.5 + CONFIDENCE / 2, n - 2) * np.sqrt(np.clip(np.diag(covariance), 0.0, None))

    intercept, slope = float(coef[0]), float(coef[1])
    return LineFit(
        intercept=intercept,
        slope=slope,
        intercept_ci=(intercept - float(half[0]), intercept + float(half[0])),
        slope_ci=(slope - float(half[1]), slope + float(half[1])),
        sigma=float(np.sqrt(s2)),
        n=n,
    )


def fit_power_law(
    d: ArrayLike,
    pl_db: ArrayLike,
    weights: ArrayLike | None = None,
    n_bins: int = DEFAULT_BINS,
    weighting: Weighting | None = None,
) -> PowerLawFit:
    """Alpha-beta path-loss fit; weights default to the log10(d)-binned scheme.

    Without an explicit ``weighting`` label, uniform weights are reported as OLS
    and any other explicit weights as custom.
    """
    d = np.asarray(d, dtype=np.float64)
    if np.any(d <= 0):
        raise SoundingError("distances must be positive")
    weighting = _weighting_of(weights, weighting)
    if weights is None:
        weights = log_distance_weights(d, n_bins)
    line = weighted_line(10.0 * np.log10(d), pl_db, weights)
    return PowerLawFit(
        alpha=line.intercept,
        beta=line.slope,
        sigma_eps=line.sigma,
        weighting=weighting,
        alpha_ci=line.intercept_ci,
        beta_ci=line.slope_ci,
        n=line.n,
    )


def fit_ols(d: ArrayLike, pl_db: ArrayLike) -> PowerLawFit:
    """Unweighted path-loss fit; its residuals have zero mean."""
    d = np.asarray(d, dtype=np.float64)
    return fit_power_law(d, pl_db, weights=np.ones(d.size), weighting=Weighting.OLS)


def shadowing_residuals(fit: PowerLawFit, d: ArrayLike, pl_db: ArrayLike) -> NDArray[np.float64]:
    """Deviation of each measured path loss from the fitted mean, in dB."""
    return np.asarray(pl_db, dtype=np.float64) - fit.predict(d)


def fit_lognormal(values_db: ArrayLike) -> LognormalFit:
    """Sample mean/deviation with t (mean) and chi-square (deviation) 95% intervals."""
    values = np.asarray(values_db, dtype=np.float64)
    n = values.size
    if n < 2:
        raise InsufficientDataError(f"distribution fit needs at least 2 values, got {n}")
    if not np.all(np.isfinite(values)):
        raise SoundingError("distribution fit values must be finite; drop +inf kappa1 first")

    mu = float(values.mean())
    if np.ptp(values) == 0:
        return LognormalFit(mu=mu, sigma=0.0, mu_ci=(mu, mu), sigma_ci=(0.0, 0.0), n=n, degenerate=True)

    sigma = float(values.std(ddof=1))
    dof = n - 1
    alpha = 1.0 - CONFIDENCE
    mu_half = stats.t.ppf(1.0 - alpha / 2, dof) * sigma / np.sqrt(n)
    sigma_low = sigma * np.sqrt(dof / stats.chi2.ppf(1.0 - alpha / 2, dof))
    sigma_high = sigma * np.sqrt(dof / stats.chi2.ppf(alpha / 2, dof))
    return LognormalFit(
        mu=mu,
        sigma=sigma,
        mu_ci=(mu - float(mu_half), mu + float(mu_half)),
        sigma_ci=(float(sigma_low), float(sigma_high)),
        n=n,
    )


def fit_linear_logd(
    values: ArrayLike,
    d: ArrayLike,
    weights: ArrayLike | None = None,
    n_bins: int = DEFAULT_BINS,
    weighting: Weighting | None = None,
) -> LinearLogdFit:
    """Distance trend Z = alpha + beta log10(d), log10(d)-binned weights by default."""
    d = np.asarray(d, dtype=np.float64)
    if np.any(d <= 0):
        raise SoundingError("distances must be positive")
    weighting = _weighting_of(weights, weighting)
    if weights is None:
        weights = log_distance_weights(d, n_bins)
    line = weighted_line(np.log10(d), values, weights)
    return LinearLogdFit(
        alpha=line.intercept,
        beta=line.slope,
        alpha_ci=line.intercept_ci,
        beta_ci=line.slope_ci,
        sigma=line.sigma,
        weighting=weighting,
        n=line.n,
    )


def empirical_cdf(values: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Sorted values and their plotting positions k / n."""
    ordered = np.sort(np.asarray(values, dtype=np.float64))
    return ordered, np.arange(1, ordered.size + 1) / ordered.size
