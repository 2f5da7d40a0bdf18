"""Synthetic multipath scenes: forward rendering into sweep tensors and ground-truth parameters."""

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.constants import speed_of_light

from thz_sounding.errors import InsufficientDataError, SoundingError, UnusableLinkError
from thz_sounding.metrics import Ddaps, LinkEnd, LinkRecord, angular_spread, marginal_aps
from thz_sounding.sounding import GATE_DELAY, AngleGrid, CalibrationTrace, FrequencyAxis, LinkMeta, SweepGrid

HPBW = 13.0
BACKLOBE_DB = -30.0


@dataclass(frozen=True)
class Mpc:
    """A single propagation path: delay in seconds, azimuths in degrees, complex amplitude."""

    delay: float
    aod: float
    aoa: float
    amplitude: complex

    def __post_init__(self):
        if not self.delay >= 0:
            raise SoundingError(f"MPC delay must be non-negative, got {self.delay}")
        for name in ("aod", "aoa"):
            value = getattr(self, name)
            if not 0.0 <= value < 360.0:
                raise SoundingError(f"MPC {name} {value} outside [0, 360)")
        object.__setattr__(self, "amplitude", complex(self.amplitude))

    @property
    def power(self) -> float:
        return abs(self.amplitude) ** 2


@dataclass(frozen=True)
class AntennaModel:
    """Horn pattern: Gaussian main lobe in dB, -12 (offset / hpbw)^2, on a constant back-lobe floor.

    Gains are normalized to one at boresight.
    """

    hpbw: float = HPBW
    backlobe_db: float = BACKLOBE_DB

    def __post_init__(self):
        if not self.hpbw > 0:
            raise SoundingError(f"HPBW must be positive, got {self.hpbw}")
        if not self.backlobe_db < 0:
            raise SoundingError(f"back-lobe level must be negative, got {self.backlobe_db}")

    def gain_db(self, offset: ArrayLike) -> NDArray[np.float64]:
        wrapped = (np.asarray(offset, dtype=np.float64) + 180.0) % 360.0 - 180.0
        return np.maximum(-12.0 * (wrapped / self.hpbw) ** 2, self.backlobe_db)

    def amplitude(self, offset: ArrayLike) -> NDArray[np.float64]:
        return 10.0 ** (self.gain_db(offset) / 20.0)

    def power_gain(self, offset: ArrayLike) -> NDArray[np.float64]:
        return 10.0 ** (self.gain_db(offset) / 10.0)


@dataclass(frozen=True)
class Scene:
    """MPCs of one link plus complex noise power per frequency sample."""

    mpcs: tuple[Mpc, ...] = ()
    noise_power: float = 0.0
    distance: float = 1.0
    los: bool = True
    link_id: str = "scene"

    def __post_init__(self):
        object.__setattr__(self, "mpcs", tuple(self.mpcs))
        if self.noise_power < 0:
            raise SoundingError(f"noise power must be non-negative, got {self.noise_power}")
        if not self.distance > 0:
            raise SoundingError(f"distance must be positive, got {self.distance}")

    @property
    def meta(self) -> LinkMeta:
        return LinkMeta(link_id=self.link_id, distance=self.distance, los=self.los)


def _mpc_arrays(mpcs: tuple[Mpc, ...]):
    delays = np.array([m.delay for m in mpcs], dtype=np.float64)
    aods = np.array([m.aod for m in mpcs], dtype=np.float64)
    aoas = np.array([m.aoa for m in mpcs], dtype=np.float64)
    amplitudes = np.array([m.amplitude for m in mpcs], dtype=np.complex128)
    return delays, aods, aoas, amplitudes


def scene_to_sweeps(
    scene: Scene,
    antenna: AntennaModel = AntennaModel(),
    axis: FrequencyAxis = FrequencyAxis(),
    angles: AngleGrid | None = None,
    seed: int = 0,
) -> SweepGrid:
    """Render H(f, phi_tx, phi_rx) as the pattern-weighted sum of MPC phasors plus complex Gaussian noise."""
    angles = angles or AngleGrid.full_circle()
    shape = (axis.n_points, *angles.shape)
    samples = np.zeros(shape, dtype=np.complex128)

    if scene.mpcs:
        delays, aods, aoas, amplitudes = _mpc_arrays(scene.mpcs)
        tx = np.asarray(angles.azimuths_tx)
        rx = np.asarray(angles.azimuths_rx)
        g_tx = antenna.amplitude(tx[:, None] - aods[None, :])
        g_rx = antenna.amplitude(rx[:, None] - aoas[None, :])
        phasors = amplitudes[None, :] * np.exp(-2j * np.pi * axis.frequencies[:, None] * delays[None, :])
        samples += np.einsum("fk,ik,jk->fij", phasors, g_tx, g_rx, optimize=True)

    if scene.noise_power > 0:
        rng = np.random.default_rng(seed)
        scale = math.sqrt(scene.noise_power / 2.0)
        samples += scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))

    return SweepGrid(axis=axis, angles=angles, samples=samples, meta=scene.meta)


def _tap_kappa1(taps: NDArray[np.float64]) -> float:
    ordered = np.sort(taps[taps > 0])[::-1]
    if ordered.size == 1:
        return math.inf
    return 10.0 * math.log10(ordered[0] / ordered[1:].sum())


def _tap_spread(delays: NDArray[np.float64], taps: NDArray[np.float64]) -> float:
    weights = taps / taps.sum()
    mean_delay = float(np.dot(weights, delays))
    return math.sqrt(max(float(np.dot(weights, (delays - mean_delay) ** 2)), 0.0))


def oracle_params(
    scene: Scene,
    angles: AngleGrid | None = None,
    antenna: AntennaModel = AntennaModel(),
    gate_delay: float = GATE_DELAY,
) -> LinkRecord:
    """Condensed parameters computed straight from the MPC list, pattern-weighted on the beam grid.

    MPCs beyond ``gate_delay`` are dropped. Every remaining MPC counts as its own
    PDP local maximum.
    """
    if not scene.mpcs:
        raise InsufficientDataError("scene has no MPCs")
    angles = angles or AngleGrid.full_circle()
    delays, aods, aoas, amplitudes = _mpc_arrays(scene.mpcs)
    inside = delays <= gate_delay
    if not inside.any():
        raise UnusableLinkError(f"every MPC arrives after the {gate_delay * 1e9:.2f} ns gate")
    delays, aods, aoas, amplitudes = delays[inside], aods[inside], aoas[inside], amplitudes[inside]

    tx = np.asarray(angles.azimuths_tx)
    rx = np.asarray(angles.azimuths_rx)
    g_tx = antenna.power_gain(tx[:, None] - aods[None, :])
    g_rx = antenna.power_gain(rx[:, None] - aoas[None, :])
    directional = np.abs(amplitudes) ** 2 * g_tx[:, None, :] * g_rx[None, :, :]

    omni_taps = directional.max(axis=(0, 1))
    totals = directional.sum(axis=-1)
    i, j = np.unravel_index(np.flatnonzero(totals == totals.max())[0], totals.shape)
    maxdir_taps = directional[i, j]

    ddaps = Ddaps(angles=angles, power=totals)
    return LinkRecord(
        link_id=scene.link_id,
        distance=scene.distance,
        los=scene.los,
        pl_omni=-10.0 * math.log10(omni_taps.sum()),
        pl_maxdir=-10.0 * math.log10(maxdir_taps.sum()),
        ds_omni=_tap_spread(delays, omni_taps),
        ds_maxdir=_tap_spread(delays, maxdir_taps),
        as_tx=angular_spread(marginal_aps(ddaps, LinkEnd.TX)),
        as_rx=angular_spread(marginal_aps(ddaps, LinkEnd.RX)),
        k1_omni=_tap_kappa1(omni_taps),
        k1_maxdir=_tap_kappa1(maxdir_taps),
        maxdir_tx=angles.azimuths_tx[i],
        maxdir_rx=angles.azimuths_rx[j],
    )


def friis_amplitude(d: float, frequency: float) -> float:
    """Free-space amplitude c / (4 pi d f) between isotropic antennas."""
    if not d > 0 or not frequency > 0:
        raise SoundingError("distance and frequency must be positive")
    return speed_of_light / (4.0 * math.pi * d * frequency)


def los_scene(
    d: float,
    axis: FrequencyAxis = FrequencyAxis(),
    noise_power: float = 0.0,
    snap_to_grid: bool = False,
    link_id: str = "los",
) -> Scene:
    """Single boresight ray with free-space loss at the band centre.

    ``snap_to_grid`` moves the ray delay onto the nearest delay bin.
    """
    delay = d / speed_of_light
    if snap_to_grid:
        delay = round(delay * axis.bandwidth) / axis.bandwidth
    ray = Mpc(delay=delay, aod=0.0, aoa=0.0, amplitude=friis_amplitude(d, axis.center_frequency))
    return Scene(mpcs=(ray,), noise_power=noise_power, distance=d, los=True, link_id=link_id)


def random_scene(
    rng: np.random.Generator,
    n_mpcs: int = 5,
    axis: FrequencyAxis = FrequencyAxis(),
    angles: AngleGrid | None = None,
    max_delay: float = 800e-9,
    noise_power: float = 0.0,
    los: bool = True,
    link_id: str = "random",
) -> Scene:
    """Resolvable multipath scene with on-grid delays and angles.

    The first path arrives at the geometric delay of the link (boresight when
    ``los``); later paths sit on delay bins of the same parity, so no two share
    or neighbour a bin, and arrive 3-25 dB weaker with random phase.
    """
    if n_mpcs < 1:
        raise SoundingError(f"scene needs at least one MPC, got {n_mpcs}")
    angles = angles or AngleGrid.full_circle()
    resolution = axis.delay_resolution
    last_bin = int(max_delay / resolution)
    first_bin = int(rng.integers(8, 100))
    candidates = np.arange(first_bin + 2, last_bin + 1, 2)
    if candidates.size < n_mpcs - 1:
        raise SoundingError(f"max_delay {max_delay} s cannot hold {n_mpcs} resolvable MPCs")
    later = np.sort(rng.choice(candidates, size=n_mpcs - 1, replace=False))

    distance = first_bin * resolution * speed_of_light
    base = friis_amplitude(distance, axis.center_frequency)
    tx = np.asarray(angles.azimuths_tx)
    rx = np.asarray(angles.azimuths_rx)

    if los:
        first = Mpc(delay=first_bin * resolution, aod=0.0, aoa=0.0, amplitude=base)
    else:
        first = Mpc(
            delay=first_bin * resolution,
            aod=float(rng.choice(tx)),
            aoa=float(rng.choice(rx)),
            amplitude=base * 10.0 ** (-15.0 / 20.0),
        )
    mpcs = [first]
    for index in later:
        loss_db = rng.uniform(3.0, 25.0)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        mpcs.append(
            Mpc(
                delay=int(index) * resolution,
                aod=float(rng.choice(tx)),
                aoa=float(rng.choice(rx)),
                amplitude=base * 10.0 ** (-loss_db / 20.0) * complex(math.cos(phase), math.sin(phase)),
            )
        )
    return Scene(mpcs=tuple(mpcs), noise_power=noise_power, distance=distance, los=los, link_id=link_id)


def unit_calibration(axis: FrequencyAxis = FrequencyAxis()) -> CalibrationTrace:
    """All-ones calibration matching synthetic sweeps."""
    return CalibrationTrace(axis=axis, samples=np.ones(axis.n_points, dtype=np.complex128))
