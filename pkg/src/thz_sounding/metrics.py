"""Condensed channel parameters: path loss, delay spread, angular spread and kappa1."""

import logging
import math
from dataclasses import asdict, dataclass, fields
from enum import StrEnum
from typing import Any, NamedTuple

import numpy as np
from numpy.typing import NDArray
from scipy.constants import speed_of_light

from thz_sounding.errors import GatingError, InsufficientDataError, SoundingError, UnusableLinkError
from thz_sounding.sounding import (
    AngleGrid,
    BeamSelection,
    CalibrationTrace,
    DirectionalPdps,
    FrequencyAxis,
    GatingConfig,
    LinkMeta,
    PowerDelayProfile,
    SweepGrid,
    calibrate,
    process_directional,
    reconstruct_omni,
    select_max_dir,
)

logger = logging.getLogger(__name__)


class LinkEnd(StrEnum):
    """Side of the link an APS belongs to."""

    TX = "tx"
    RX = "rx"


@dataclass(frozen=True, eq=False)
class Ddaps:
    """Double-directional angular power spectrum over (phi_tx, phi_rx)."""

    angles: AngleGrid
    power: NDArray[np.float64]

    def __post_init__(self):
        power = np.array(self.power, dtype=np.float64)
        if power.shape != self.angles.shape:
            raise SoundingError(f"DDAPS shape {power.shape} does not match grid {self.angles.shape}")
        if np.any(power < 0):
            raise SoundingError("DDAPS power must be non-negative")
        power.flags.writeable = False
        object.__setattr__(self, "power", power)

    @property
    def total_power(self) -> float:
        return float(self.power.sum())


@dataclass(frozen=True, eq=False)
class Aps:
    """Single-directional angular power spectrum of one link end."""

    side: LinkEnd
    angles: NDArray[np.float64]
    power: NDArray[np.float64]

    def __post_init__(self):
        angles = np.array(self.angles, dtype=np.float64)
        power = np.array(self.power, dtype=np.float64)
        if angles.shape != power.shape or angles.ndim != 1:
            raise SoundingError(f"APS angles {angles.shape} do not match power {power.shape}")
        if np.any(power < 0):
            raise SoundingError("APS power must be non-negative")
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "power", power)


@dataclass(frozen=True)
class LinkRecord:
    """Condensed parameters of one Tx-Rx location pair.

    Path losses and kappa1 are in dB, delay spreads in seconds, angular spreads
    are dimensionless Fleury spreads and the max-dir azimuths are in degrees.
    """

    link_id: str
    distance: float
    los: bool
    pl_omni: float
    pl_maxdir: float
    ds_omni: float
    ds_maxdir: float
    as_tx: float
    as_rx: float
    k1_omni: float
    k1_maxdir: float
    maxdir_tx: float = 0.0
    maxdir_rx: float = 0.0
    tx_id: str = ""
    rx_id: str = ""

    def __post_init__(self):
        if not self.distance > 0:
            raise SoundingError(f"distance must be positive, got {self.distance}")
        if self.ds_omni < 0 or self.ds_maxdir < 0:
            raise SoundingError("delay spreads must be non-negative")
        for value in (self.as_tx, self.as_rx):
            if not 0.0 <= value <= 1.0:
                raise SoundingError(f"Fleury angular spread {value} outside [0, 1]")
        if self.pl_omni > self.pl_maxdir + 1e-9:
            raise SoundingError(f"omni path loss {self.pl_omni} exceeds max-dir path loss {self.pl_maxdir}")

    def to_row(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_row(cls, row: dict[str, Any]) -> "LinkRecord":
        values = {}
        for item in fields(cls):
            value = row[item.name]
            if item.type is bool:
                value = value.strip().lower() in ("true", "1", "yes") if isinstance(value, str) else bool(value)
            elif item.type is str:
                value = "" if value is None or (isinstance(value, float) and math.isnan(value)) else str(value)
            elif item.type is float:
                value = float(value)
            values[item.name] = value
        return cls(**values)


RECORD_COLUMNS = [item.name for item in fields(LinkRecord)]


def _require_power(pdp: PowerDelayProfile) -> float:
    total = pdp.total_power
    if not total > 0:
        raise UnusableLinkError("PDP holds no power after gating")
    return total


def path_loss(pdp: PowerDelayProfile) -> float:
    """Path loss in dB from the delay-integrated power."""
    return -10.0 * math.log10(_require_power(pdp))


def rms_delay_spread(pdp: PowerDelayProfile) -> float:
    """Second central moment of the PDP, in seconds."""
    total = _require_power(pdp)
    weights = pdp.powers / total
    mean_delay = float(np.dot(weights, pdp.delays))
    variance = float(np.dot(weights, (pdp.delays - mean_delay) ** 2))
    return math.sqrt(max(variance, 0.0))


def compute_ddaps(pdps: DirectionalPdps) -> Ddaps:
    """Delay-integrated power per beam pair of a gated PDP set."""
    if not pdps.gated:
        raise GatingError("DDAPS needs gated PDPs; ungated noise would accumulate")
    return Ddaps(angles=pdps.angles, power=pdps.totals)


def marginal_aps(ddaps: Ddaps, side: LinkEnd) -> Aps:
    """APS of one link end, summing over the other end's azimuths."""
    side = LinkEnd(side)
    if side is LinkEnd.TX:
        return Aps(side=side, angles=np.asarray(ddaps.angles.azimuths_tx), power=ddaps.power.sum(axis=1))
    return Aps(side=side, angles=np.asarray(ddaps.angles.azimuths_rx), power=ddaps.power.sum(axis=0))


def angular_spread(aps: Aps) -> float:
    """Fleury angular spread of an APS, in [0, 1]."""
    total = float(aps.power.sum())
    if not total > 0:
        raise UnusableLinkError("APS holds no power")
    phasors = np.exp(1j * np.deg2rad(aps.angles))
    mean_phasor = np.dot(aps.power, phasors) / total
    spread = float(np.dot(aps.power, np.abs(phasors - mean_phasor) ** 2)) / total
    return math.sqrt(min(max(spread, 0.0), 1.0))


def local_maxima(powers: NDArray[np.float64]) -> NDArray[np.intp]:
    """Indices of bins strictly above their neighbours; edge bins have a single neighbour."""
    powers = np.asarray(powers, dtype=np.float64)
    padded = np.concatenate([[-np.inf], powers, [-np.inf]])
    peaks = (powers > padded[:-2]) & (powers > padded[2:]) & (powers > 0)
    return np.flatnonzero(peaks)


def kappa1(pdp: PowerDelayProfile) -> float:
    """Strongest local maximum over the sum of the others, in dB; +inf for a single maximum."""
    _require_power(pdp)
    peaks = np.sort(pdp.powers[local_maxima(pdp.powers)])[::-1]
    if peaks.size == 0:
        raise InsufficientDataError("PDP has no local maximum")
    if peaks.size == 1:
        return math.inf
    return 10.0 * math.log10(peaks[0] / peaks[1:].sum())


class LinkViews(NamedTuple):
    """Gated omni and max-dir views of one link plus its DDAPS."""

    meta: LinkMeta
    omni: PowerDelayProfile
    best: BeamSelection
    ddaps: Ddaps


def _first_arrival(meta: LinkMeta, axis: FrequencyAxis) -> float | None:
    arrival = meta.distance / speed_of_light
    if arrival >= axis.delay_span:
        logger.warning(
            "link %s: line-of-sight delay %.1f ns at %.1f m lies beyond the %.1f ns delay span; "
            "wrap-around correction skipped",
            meta.link_id,
            arrival * 1e9,
            meta.distance,
            axis.delay_span * 1e9,
        )
        return None
    return arrival


def link_views(
    raw: SweepGrid,
    cal: CalibrationTrace,
    config: GatingConfig = GatingConfig(),
    correct_wrap: bool = True,
) -> LinkViews:
    """Calibration, gated directional PDPs, then the omni and max-dir views."""
    grid = calibrate(raw, cal)
    first_arrival = _first_arrival(raw.meta, grid.axis) if correct_wrap else None
    pdps = process_directional(grid, config, first_arrival)
    return LinkViews(
        meta=raw.meta,
        omni=reconstruct_omni(pdps),
        best=select_max_dir(pdps),
        ddaps=compute_ddaps(pdps),
    )


def summarize(views: LinkViews) -> LinkRecord:
    """Condensed parameters of already built link views."""
    meta, omni, best, ddaps = views
    record = LinkRecord(
        link_id=meta.link_id,
        distance=meta.distance,
        los=meta.los,
        pl_omni=path_loss(omni),
        pl_maxdir=path_loss(best.pdp),
        ds_omni=rms_delay_spread(omni),
        ds_maxdir=rms_delay_spread(best.pdp),
        as_tx=angular_spread(marginal_aps(ddaps, LinkEnd.TX)),
        as_rx=angular_spread(marginal_aps(ddaps, LinkEnd.RX)),
        k1_omni=kappa1(omni),
        k1_maxdir=kappa1(best.pdp),
        maxdir_tx=best.tx_azimuth,
        maxdir_rx=best.rx_azimuth,
        tx_id=meta.tx_id,
        rx_id=meta.rx_id,
    )
    logger.debug("condensed link %s: PL omni %.2f dB, max-dir %.2f dB", meta.link_id, record.pl_omni, record.pl_maxdir)
    return record


def condense(
    raw: SweepGrid,
    cal: CalibrationTrace,
    config: GatingConfig = GatingConfig(),
    correct_wrap: bool = True,
) -> LinkRecord:
    """Full per-link chain: calibration, gated PDPs, omni and max-dir views, condensed parameters.

    Wrap-around correction is skipped with a warning when the line-of-sight
    delay lies beyond the delay span.
    """
    return summarize(link_views(raw, cal, config, correct_wrap))
