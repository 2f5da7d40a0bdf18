"""Calibration, power delay profiles, gating and omni-directional reconstruction."""

import logging
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from numpy.typing import NDArray

from thz_sounding.errors import (
    AxisMismatchError,
    CalibrationError,
    GatingError,
    InsufficientDataError,
    SoundingError,
    UnusableLinkError,
)

logger = logging.getLogger(__name__)

# Sounder setup
F_START = 145e9
F_STOP = 146e9
N_POINTS = 1001
ANGLE_STEP = 10.0
ANTENNA_HEIGHT = 1.6

# Processing defaults
GATE_DELAY = 833.33e-9
NOISE_MARGIN_DB = 6.0
NOISE_FRACTION = 0.10
WRAPAROUND_GUARD = 5
MIN_PEAK_SNR_DB = 20.0

_TINY = float(np.finfo(float).tiny)


@dataclass(frozen=True)
class FrequencyAxis:
    """Swept frequency axis of a vector-network-analyzer measurement.

    Samples sit on the DFT-periodic grid ``f_start + n * bandwidth / n_points``
    so that inverse-DFT bin ``k`` corresponds to delay ``k / bandwidth``.
    """

    f_start: float = F_START
    f_stop: float = F_STOP
    n_points: int = N_POINTS

    def __post_init__(self):
        if not self.f_stop > self.f_start:
            raise SoundingError(f"f_stop ({self.f_stop}) must exceed f_start ({self.f_start})")
        if self.n_points < 2:
            raise SoundingError(f"n_points must be at least 2, got {self.n_points}")

    @property
    def bandwidth(self) -> float:
        return self.f_stop - self.f_start

    @property
    def center_frequency(self) -> float:
        return 0.5 * (self.f_start + self.f_stop)

    @property
    def delay_resolution(self) -> float:
        return 1.0 / self.bandwidth

    @property
    def delay_span(self) -> float:
        """Unambiguous delay span of the inverse DFT."""
        return self.n_points / self.bandwidth

    @property
    def frequencies(self) -> NDArray[np.float64]:
        return self.f_start + np.arange(self.n_points) * (self.bandwidth / self.n_points)

    @property
    def delays(self) -> NDArray[np.float64]:
        return np.arange(self.n_points) * self.delay_resolution


@dataclass(frozen=True)
class AngleGrid:
    """Azimuth orientations scanned at both link ends, in degrees."""

    azimuths_tx: tuple[float, ...]
    azimuths_rx: tuple[float, ...]
    step: float = ANGLE_STEP

    def __post_init__(self):
        if self.step <= 0:
            raise SoundingError(f"angle step must be positive, got {self.step}")
        for side in ("azimuths_tx", "azimuths_rx"):
            values = tuple(float(a) for a in getattr(self, side))
            object.__setattr__(self, side, values)
            if not values:
                raise SoundingError(f"{side} is empty")
            array = np.asarray(values)
            if np.any(array < 0.0) or np.any(array >= 360.0):
                raise SoundingError(f"{side} must lie in [0, 360) degrees")
            steps = np.diff(array)
            if np.any(steps <= 0.0):
                raise SoundingError(f"{side} must be strictly increasing")
            if steps.size and not np.allclose(steps, self.step):
                raise SoundingError(f"{side} must be spaced uniformly by {self.step} degrees")

    @classmethod
    def full_circle(cls, step: float = ANGLE_STEP) -> "AngleGrid":
        """Uniform 0..360 degree scan on both sides."""
        count = round(360.0 / step)
        azimuths = tuple(k * step for k in range(count))
        return cls(azimuths, azimuths, step)

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.azimuths_tx), len(self.azimuths_rx)

    @property
    def is_full_circle(self) -> bool:
        return all(np.isclose(len(side) * self.step, 360.0) for side in (self.azimuths_tx, self.azimuths_rx))


@dataclass(frozen=True)
class LinkMeta:
    """Identity and geometry of one Tx-Rx location pair."""

    link_id: str = ""
    distance: float = 1.0
    los: bool = True
    height: float = ANTENNA_HEIGHT
    tx_id: str = ""
    rx_id: str = ""

    def __post_init__(self):
        if not self.distance > 0:
            raise SoundingError(f"link distance must be positive, got {self.distance}")


def _frozen_array(values, dtype) -> NDArray:
    array = np.array(values, dtype=dtype)
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class SweepGrid:
    """Complex transfer function H(f, phi_tx, phi_rx) of one link."""

    axis: FrequencyAxis
    angles: AngleGrid
    samples: NDArray[np.complex128]
    meta: LinkMeta = LinkMeta()

    def __post_init__(self):
        samples = _frozen_array(self.samples, np.complex128)
        expected = (self.axis.n_points, *self.angles.shape)
        if samples.shape != expected:
            raise AxisMismatchError(f"sweep tensor has shape {samples.shape}, expected {expected}")
        if not np.all(np.isfinite(samples)):
            raise SoundingError("sweep tensor contains non-finite samples")
        object.__setattr__(self, "samples", samples)


@dataclass(frozen=True, eq=False)
class CalibrationTrace:
    """Over-the-air calibration response H_OTA(f)."""

    axis: FrequencyAxis
    samples: NDArray[np.complex128]

    def __post_init__(self):
        samples = _frozen_array(self.samples, np.complex128)
        if samples.shape != (self.axis.n_points,):
            raise AxisMismatchError(f"calibration has {samples.size} samples, axis has {self.axis.n_points}")
        if np.any(samples == 0):
            raise CalibrationError("calibration trace contains zero samples")
        object.__setattr__(self, "samples", samples)


@dataclass(frozen=True, eq=False)
class PowerDelayProfile:
    """Power per delay bin, optionally noise-floored and gated."""

    delays: NDArray[np.float64]
    powers: NDArray[np.float64]
    noise_floor: float | None = None
    gate_delay: float | None = None
    threshold: float | None = None
    gated: bool = False

    def __post_init__(self):
        delays = _frozen_array(self.delays, np.float64)
        powers = _frozen_array(self.powers, np.float64)
        if delays.ndim != 1 or delays.shape != powers.shape:
            raise AxisMismatchError(f"delay axis {delays.shape} does not match powers {powers.shape}")
        if np.any(powers < 0):
            raise SoundingError("powers must be non-negative")
        if self.noise_floor is not None and not self.noise_floor > 0:
            raise SoundingError(f"noise floor must be positive, got {self.noise_floor}")
        object.__setattr__(self, "delays", delays)
        object.__setattr__(self, "powers", powers)

    @property
    def total_power(self) -> float:
        return float(self.powers.sum())

    def with_noise_floor(self, noise_floor: float) -> "PowerDelayProfile":
        """Attach a noise floor, lifted to the smallest positive float if it is zero."""
        return replace(self, noise_floor=max(float(noise_floor), _TINY))


@dataclass(frozen=True, eq=False)
class DirectionalPdps:
    """Every beam-pair PDP of one link as a (n_tx, n_rx, n_bins) power tensor."""

    angles: AngleGrid
    delays: NDArray[np.float64]
    powers: NDArray[np.float64]
    noise_floor: NDArray[np.float64] | None = None
    gate_delay: float | None = None
    threshold: NDArray[np.float64] | None = None
    gated: bool = False

    def __post_init__(self):
        delays = _frozen_array(self.delays, np.float64)
        powers = _frozen_array(self.powers, np.float64)
        if powers.shape != (*self.angles.shape, delays.size):
            raise AxisMismatchError(
                f"power tensor {powers.shape} does not match grid {self.angles.shape} and {delays.size} delays"
            )
        if np.any(powers < 0):
            raise SoundingError("powers must be non-negative")
        object.__setattr__(self, "delays", delays)
        object.__setattr__(self, "powers", powers)
        for name in ("noise_floor", "threshold"):
            value = getattr(self, name)
            if value is not None:
                value = _frozen_array(value, np.float64)
                if value.shape != self.angles.shape:
                    raise AxisMismatchError(f"{name} shape {value.shape} does not match grid {self.angles.shape}")
                object.__setattr__(self, name, value)

    def __len__(self) -> int:
        n_tx, n_rx = self.angles.shape
        return n_tx * n_rx

    @property
    def totals(self) -> NDArray[np.float64]:
        """Delay-integrated power per beam pair."""
        return self.powers.sum(axis=-1)

    def profile(self, i: int, j: int) -> PowerDelayProfile:
        """PDP of the beam pair (azimuths_tx[i], azimuths_rx[j])."""
        return PowerDelayProfile(
            delays=self.delays,
            powers=self.powers[i, j],
            noise_floor=None if self.noise_floor is None else float(self.noise_floor[i, j]),
            gate_delay=self.gate_delay,
            threshold=None if self.threshold is None else float(self.threshold[i, j]),
            gated=self.gated,
        )


class BeamSelection(NamedTuple):
    """Strongest beam pair and its PDP."""

    tx_azimuth: float
    rx_azimuth: float
    pdp: PowerDelayProfile


@dataclass(frozen=True)
class GatingConfig:
    """Noise and delay gating parameters."""

    gate_delay: float = GATE_DELAY
    margin_db: float = NOISE_MARGIN_DB
    noise_fraction: float = NOISE_FRACTION
    wraparound_guard: int = WRAPAROUND_GUARD
    min_peak_snr_db: float = MIN_PEAK_SNR_DB

    def __post_init__(self):
        if not self.gate_delay > 0:
            raise SoundingError(f"gate delay must be positive, got {self.gate_delay}")
        if not self.margin_db > 0:
            raise SoundingError(f"noise margin must be positive, got {self.margin_db}")
        if not 0 < self.noise_fraction < 1:
            raise SoundingError(f"noise fraction must lie in (0, 1), got {self.noise_fraction}")
        if self.wraparound_guard < 0:
            raise SoundingError(f"wrap-around guard must be non-negative, got {self.wraparound_guard}")


def calibrate(raw: SweepGrid, cal: CalibrationTrace) -> SweepGrid:
    """Divide the raw sweep tensor by the OTA calibration, frequency by frequency."""
    if raw.axis != cal.axis:
        raise AxisMismatchError(f"sweep axis {raw.axis} does not match calibration axis {cal.axis}")
    if np.any(cal.samples == 0):
        raise CalibrationError("calibration trace contains zero samples")
    return replace(raw, samples=raw.samples / cal.samples[:, None, None])


def compute_pdp(h: NDArray[np.complex128], axis: FrequencyAxis) -> PowerDelayProfile:
    """Directional PDP |IDFT{H}|^2 of one frequency response."""
    h = np.asarray(h, dtype=np.complex128)
    if h.shape != (axis.n_points,):
        raise AxisMismatchError(f"frequency response has {h.size} samples, axis has {axis.n_points}")
    if not np.all(np.isfinite(h)):
        raise SoundingError("frequency response contains non-finite samples")
    return PowerDelayProfile(delays=axis.delays, powers=np.abs(np.fft.ifft(h)) ** 2)


def directional_pdps(grid: SweepGrid) -> DirectionalPdps:
    """PDPs of every beam pair of a (calibrated) sweep tensor."""
    impulse = np.fft.ifft(grid.samples, axis=0)
    return DirectionalPdps(
        angles=grid.angles,
        delays=grid.axis.delays,
        powers=np.moveaxis(np.abs(impulse) ** 2, 0, -1),
    )


def default_noise_region(
    axis: FrequencyAxis, gate_delay: float = GATE_DELAY, fraction: float = NOISE_FRACTION
) -> tuple[float, float]:
    """Final ``fraction`` of the delay span, never reaching into the gate."""
    start = max((1.0 - fraction) * axis.delay_span, gate_delay)
    return start, axis.delay_span


def _region_mask(delays: NDArray[np.float64], noise_region: tuple[float, float]) -> NDArray[np.bool_]:
    start, stop = noise_region
    if start < 0 or start > delays[-1] or stop < start:
        raise SoundingError(f"noise region {noise_region} lies outside the delay span")
    mask = (delays >= start) & (delays <= stop)
    if not mask.any():
        raise InsufficientDataError(f"noise region {noise_region} contains no delay bins")
    return mask


def estimate_noise_floor(pdp: PowerDelayProfile, noise_region: tuple[float, float]) -> float:
    """Average power over the delay bins of ``noise_region`` (inclusive bounds)."""
    mask = _region_mask(pdp.delays, noise_region)
    return float(pdp.powers[mask].mean())


def estimate_noise_floors(pdps: DirectionalPdps, noise_region: tuple[float, float]) -> DirectionalPdps:
    """Per-beam-pair noise floors of a PDP set."""
    mask = _region_mask(pdps.delays, noise_region)
    floors = np.maximum(pdps.powers[..., mask].mean(axis=-1), _TINY)
    return replace(pdps, noise_floor=floors)


def _threshold(noise_floor, margin_db: float):
    return noise_floor * 10.0 ** (margin_db / 10.0)


def apply_gating(
    pdp: PowerDelayProfile, gate_delay: float = GATE_DELAY, margin_db: float = NOISE_MARGIN_DB
) -> PowerDelayProfile:
    """Zero every bin beyond ``gate_delay`` or below the noise threshold (both bounds inclusive)."""
    if pdp.noise_floor is None:
        raise GatingError("noise floor must be estimated before gating")
    if not gate_delay > 0:
        raise SoundingError(f"gate delay must be positive, got {gate_delay}")
    threshold = _threshold(pdp.noise_floor, margin_db)
    keep = (pdp.delays <= gate_delay) & (pdp.powers >= threshold)
    return replace(
        pdp,
        powers=np.where(keep, pdp.powers, 0.0),
        gate_delay=gate_delay,
        threshold=threshold,
        gated=True,
    )


def gate_directional(pdps: DirectionalPdps, gate_delay: float = GATE_DELAY, margin_db: float = NOISE_MARGIN_DB):
    """Gate every beam pair against its own noise floor."""
    if pdps.noise_floor is None:
        raise GatingError("noise floors must be estimated before gating")
    threshold = _threshold(pdps.noise_floor, margin_db)
    keep = (pdps.delays <= gate_delay) & (pdps.powers >= threshold[..., None])
    return replace(
        pdps,
        powers=np.where(keep, pdps.powers, 0.0),
        gate_delay=gate_delay,
        threshold=threshold,
        gated=True,
    )


def ensure_signal(pdps: DirectionalPdps, min_peak_snr_db: float = MIN_PEAK_SNR_DB) -> None:
    """Raise UnusableLinkError when no beam pair rises ``min_peak_snr_db`` above its noise floor."""
    if pdps.noise_floor is None:
        raise GatingError("noise floors must be estimated before checking the link")
    peak_snr = pdps.powers.max(axis=-1) / pdps.noise_floor
    best_db = 10.0 * np.log10(peak_snr.max()) if peak_snr.max() > 0 else -np.inf
    if best_db < min_peak_snr_db:
        raise UnusableLinkError(f"strongest bin is {best_db:.1f} dB above the noise floor (< {min_peak_snr_db} dB)")


def _require_gated(pdps: DirectionalPdps) -> None:
    if pdps.powers.size == 0:
        raise InsufficientDataError("directional PDP set is empty")
    if not pdps.gated:
        raise GatingError("directional PDPs must be gated first")


def reconstruct_omni(pdps: DirectionalPdps) -> PowerDelayProfile:
    """Omni-directional PDP: per delay bin, the strongest beam pair."""
    _require_gated(pdps)
    return PowerDelayProfile(
        delays=pdps.delays,
        powers=pdps.powers.max(axis=(0, 1)),
        noise_floor=None if pdps.noise_floor is None else float(pdps.noise_floor.min()),
        gate_delay=pdps.gate_delay,
        threshold=None if pdps.threshold is None else float(pdps.threshold.min()),
        gated=True,
    )


def select_max_dir(pdps: DirectionalPdps) -> BeamSelection:
    """Beam pair with the largest delay-integrated power.

    Ties resolve to the smallest Tx azimuth, then the smallest Rx azimuth.
    """
    _require_gated(pdps)
    totals = pdps.totals
    best = totals.max()
    if not best > 0:
        raise UnusableLinkError("every beam pair was gated to zero power")
    # Azimuths are strictly increasing, so the first flat index is the lexicographic minimum.
    i, j = np.unravel_index(np.flatnonzero(totals == best)[0], totals.shape)
    return BeamSelection(
        tx_azimuth=pdps.angles.azimuths_tx[i],
        rx_azimuth=pdps.angles.azimuths_rx[j],
        pdp=pdps.profile(int(i), int(j)),
    )


def _wrap_index(delays: NDArray[np.float64], first_arrival: float, guard: int) -> tuple[int, float]:
    if delays.size < 2:
        raise InsufficientDataError("wrap-around correction needs at least two delay bins")
    resolution = delays[1] - delays[0]
    span = delays.size * resolution
    if not delays[0] <= first_arrival < delays[0] + span:
        raise SoundingError(f"first arrival {first_arrival} s lies outside the delay span")
    cutoff = first_arrival - guard * resolution
    return int(np.searchsorted(delays, cutoff, side="left")), span


def correct_wraparound(
    pdp: PowerDelayProfile, first_arrival: float, guard: int = WRAPAROUND_GUARD
) -> PowerDelayProfile:
    """Move bins arriving before ``first_arrival`` minus ``guard`` bins one delay span later.

    Relocated bins may fall beyond the gate, so a gated input comes back ungated.
    """
    split, span = _wrap_index(pdp.delays, first_arrival, guard)
    if split == 0:
        return pdp
    corrected = replace(
        pdp,
        delays=np.concatenate([pdp.delays[split:], pdp.delays[:split] + span]),
        powers=np.concatenate([pdp.powers[split:], pdp.powers[:split]]),
    )
    if pdp.gated:
        corrected = replace(corrected, gated=False, threshold=None, gate_delay=None)
    return corrected


def correct_wraparound_set(
    pdps: DirectionalPdps, first_arrival: float, guard: int = WRAPAROUND_GUARD
) -> DirectionalPdps:
    """Wrap-around correction applied to every beam pair of an ungated set."""
    if pdps.gated:
        raise GatingError("wrap-around correction runs before gating")
    split, span = _wrap_index(pdps.delays, first_arrival, guard)
    if split == 0:
        return pdps
    return replace(
        pdps,
        delays=np.concatenate([pdps.delays[split:], pdps.delays[:split] + span]),
        powers=np.concatenate([pdps.powers[..., split:], pdps.powers[..., :split]], axis=-1),
    )


def process_directional(
    grid: SweepGrid, config: GatingConfig = GatingConfig(), first_arrival: float | None = None
) -> DirectionalPdps:
    """Calibrated sweep tensor to gated directional PDPs.

    Order: PDPs, noise floors, signal check, wrap-around correction, gating.
    """
    pdps = directional_pdps(grid)
    region = default_noise_region(grid.axis, config.gate_delay, config.noise_fraction)
    pdps = estimate_noise_floors(pdps, region)
    ensure_signal(pdps, config.min_peak_snr_db)
    if first_arrival is not None:
        pdps = correct_wraparound_set(pdps, first_arrival, config.wraparound_guard)
    logger.debug(
        "link %s: median noise floor %.3e, region %.1f-%.1f ns",
        grid.meta.link_id,
        float(np.median(pdps.noise_floor)),
        region[0] * 1e9,
        region[1] * 1e9,
    )
    return gate_directional(pdps, config.gate_delay, config.margin_db)
