"""Little-endian binary interchange format for sweep tensors and calibration traces.

Layout: a fixed header followed by ``n_points * n_tx * n_rx`` complex samples
stored as interleaved (re, im) float64 pairs, frequency fastest, then Tx
azimuth, then Rx azimuth. Azimuths are not stored; both ends are uniform
full-circle scans, ``k * 360 / n``.
"""

import logging
from pathlib import Path

import numpy as np

from thz_sounding.errors import SweepFormatError
from thz_sounding.sounding import AngleGrid, CalibrationTrace, FrequencyAxis, LinkMeta, SweepGrid

logger = logging.getLogger(__name__)

MAGIC = b"THZS"
VERSION = 1

HEADER = np.dtype(
    [
        ("magic", "S4"),
        ("version", "<u2"),
        ("n_points", "<u4"),
        ("n_tx", "<u4"),
        ("n_rx", "<u4"),
        ("f_start", "<f8"),
        ("f_stop", "<f8"),
        ("distance", "<f8"),
        ("los", "u1"),
    ]
)
SAMPLE = np.dtype("<c16")


def _grid_for(n_tx: int, n_rx: int) -> AngleGrid:
    if n_tx != n_rx:
        raise SweepFormatError(f"unequal azimuth counts ({n_tx} Tx, {n_rx} Rx) are not supported")
    return AngleGrid.full_circle(360.0 / n_tx)


def _encode(axis: FrequencyAxis, samples: np.ndarray, distance: float, los: bool) -> bytes:
    n_points, n_tx, n_rx = samples.shape
    header = np.zeros(1, dtype=HEADER)
    header[0] = (MAGIC, VERSION, n_points, n_tx, n_rx, axis.f_start, axis.f_stop, distance, int(los))
    data = np.ascontiguousarray(samples.transpose(2, 1, 0), dtype=SAMPLE)
    return header.tobytes() + data.tobytes()


def _decode(path: Path) -> tuple[np.void, np.ndarray]:
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise SweepFormatError(f"{path}: file not found") from None
    if len(raw) < HEADER.itemsize:
        raise SweepFormatError(f"{path}: truncated header ({len(raw)} bytes)")

    header = np.frombuffer(raw, dtype=HEADER, count=1)[0]
    if header["magic"] != MAGIC:
        raise SweepFormatError(f"{path}: bad magic {bytes(header['magic'])!r}")
    if header["version"] != VERSION:
        raise SweepFormatError(f"{path}: unsupported version {int(header['version'])}")

    n_points, n_tx, n_rx = int(header["n_points"]), int(header["n_tx"]), int(header["n_rx"])
    if min(n_points, n_tx, n_rx) < 1:
        raise SweepFormatError(f"{path}: empty dimensions {n_points}x{n_tx}x{n_rx}")
    expected = n_points * n_tx * n_rx * SAMPLE.itemsize
    payload = len(raw) - HEADER.itemsize
    if payload != expected:
        raise SweepFormatError(
            f"{path}: header declares {n_points}x{n_tx}x{n_rx} samples ({expected} bytes), file holds {payload}"
        )

    data = np.frombuffer(raw, dtype=SAMPLE, offset=HEADER.itemsize)
    if not np.all(np.isfinite(data)):
        raise SweepFormatError(f"{path}: non-finite samples")
    samples = data.reshape(n_rx, n_tx, n_points).transpose(2, 1, 0).astype(np.complex128)
    return header, samples


def _axis(header: np.void, path: Path) -> FrequencyAxis:
    try:
        return FrequencyAxis(float(header["f_start"]), float(header["f_stop"]), int(header["n_points"]))
    except ValueError as e:
        raise SweepFormatError(f"{path}: {e}") from None


def write_sweeps(grid: SweepGrid, path: str | Path) -> Path:
    """Write a sweep tensor; the azimuth grid must be a uniform full circle."""
    if not grid.angles.is_full_circle or grid.angles.azimuths_tx != grid.angles.azimuths_rx:
        raise SweepFormatError("only identical full-circle azimuth scans can be stored")
    path = Path(path)
    path.write_bytes(_encode(grid.axis, grid.samples, grid.meta.distance, grid.meta.los))
    return path


def read_sweeps(path: str | Path, meta: LinkMeta | None = None) -> SweepGrid:
    """Read a sweep tensor.

    Without ``meta`` the link identity comes from the file name and the header's
    distance and LoS flag.
    """
    path = Path(path)
    header, samples = _decode(path)
    if meta is None:
        distance = float(header["distance"])
        meta = LinkMeta(link_id=path.stem, distance=distance if distance > 0 else 1.0, los=bool(header["los"]))
    angles = _grid_for(samples.shape[1], samples.shape[2])
    return SweepGrid(axis=_axis(header, path), angles=angles, samples=samples, meta=meta)


def header_distance(path: str | Path) -> float:
    """Link distance stored in a file header, without loading the samples."""
    path = Path(path)
    with path.open("rb") as handle:
        raw = handle.read(HEADER.itemsize)
    if len(raw) < HEADER.itemsize:
        raise SweepFormatError(f"{path}: truncated header ({len(raw)} bytes)")
    return float(np.frombuffer(raw, dtype=HEADER, count=1)[0]["distance"])


def write_calibration(trace: CalibrationTrace, path: str | Path) -> Path:
    """Store a calibration trace as a 1 x 1 sweep."""
    path = Path(path)
    path.write_bytes(_encode(trace.axis, trace.samples[:, None, None], 0.0, False))
    return path


def read_calibration(path: str | Path) -> CalibrationTrace:
    path = Path(path)
    header, samples = _decode(path)
    if samples.shape[1:] != (1, 1):
        n_tx, n_rx = samples.shape[1:]
        raise SweepFormatError(f"{path}: calibration must hold a single trace, got {n_tx}x{n_rx}")
    return CalibrationTrace(axis=_axis(header, path), samples=samples[:, 0, 0])
