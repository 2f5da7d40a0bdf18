"""Parsers for dataset manifests, run configuration and scene TOML documents."""

import cmath
import math
import tomllib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, NamedTuple

from thz_sounding.errors import ManifestError, SoundingError
from thz_sounding.sounding import ANTENNA_HEIGHT, AngleGrid, FrequencyAxis, GatingConfig, LinkMeta
from thz_sounding.statfit import DEFAULT_BINS
from thz_sounding.synthscene import AntennaModel, Mpc, Scene

ANALYSES = frozenset({"records", "fits", "table", "plots"})


def _read_toml(path: Path) -> dict[str, Any]:
    try:
        with open(path, "rb") as f:
            return tomllib.load(f)
    except FileNotFoundError:
        raise ManifestError(f"{path}: file not found") from None
    except tomllib.TOMLDecodeError as e:
        raise ManifestError(f"{path}: invalid TOML: {e}") from None


@dataclass(frozen=True)
class LinkEntry:
    """One manifest row: where a link's sweeps live and its geometry."""

    link_id: str
    sweep: Path
    calibration: Path
    distance: float
    los: bool
    tx_id: str = ""
    rx_id: str = ""
    height: float = ANTENNA_HEIGHT

    @property
    def meta(self) -> LinkMeta:
        return LinkMeta(
            link_id=self.link_id,
            distance=self.distance,
            los=self.los,
            height=self.height,
            tx_id=self.tx_id,
            rx_id=self.rx_id,
        )


@dataclass(frozen=True)
class DatasetManifest:
    links: tuple[LinkEntry, ...]
    campaign: dict[str, Any] = field(default_factory=dict)
    root: Path = Path(".")

    def __len__(self) -> int:
        return len(self.links)


class ManifestParser:
    """Parse a campaign manifest TOML file."""

    def __init__(self, file_path: Path):
        """Initialize parser with a manifest file path."""
        self.file_path = Path(file_path)
        self.document: dict[str, Any] = {}
        self.links: list[LinkEntry] = []
        self._parse()

    def _parse(self):
        self.document = _read_toml(self.file_path)
        entries = self.document.get("links", [])
        if not isinstance(entries, list):
            raise ManifestError(f"{self.file_path}: 'links' must be an array of tables")

        seen: set[str] = set()
        for position, entry in enumerate(entries, start=1):
            link = self._parse_link(entry, position)
            if link.link_id in seen:
                raise ManifestError(f"{self.file_path}: duplicate link id {link.link_id!r}")
            seen.add(link.link_id)
            self.links.append(link)

    def _resolve(self, value: Any, what: str, link_id: str) -> Path:
        path = Path(str(value))
        if not path.is_absolute():
            path = self.file_path.parent / path
        if not path.is_file():
            raise ManifestError(f"link {link_id!r}: {what} file {path} does not exist")
        return path

    def _parse_link(self, entry: dict[str, Any], position: int) -> LinkEntry:
        link_id = str(entry.get("id", "")).strip()
        if not link_id:
            raise ManifestError(f"{self.file_path}: link #{position} has no id")
        missing = [name for name in ("sweep", "calibration", "distance", "los") if name not in entry]
        if missing:
            raise ManifestError(f"link {link_id!r}: missing {', '.join(missing)}")

        try:
            distance = float(entry["distance"])
            height = float(entry.get("height", ANTENNA_HEIGHT))
        except (TypeError, ValueError):
            raise ManifestError(f"link {link_id!r}: distance and height must be numbers") from None
        if not distance > 0 or not math.isfinite(distance):
            raise ManifestError(f"link {link_id!r}: distance must be positive, got {entry['distance']}")
        if not isinstance(entry["los"], bool):
            raise ManifestError(f"link {link_id!r}: los must be true or false")

        return LinkEntry(
            link_id=link_id,
            sweep=self._resolve(entry["sweep"], "sweep", link_id),
            calibration=self._resolve(entry["calibration"], "calibration", link_id),
            distance=distance,
            los=entry["los"],
            tx_id=str(entry.get("tx", "")),
            rx_id=str(entry.get("rx", "")),
            height=height,
        )

    def get_manifest(self) -> DatasetManifest:
        return DatasetManifest(
            links=tuple(self.links),
            campaign=dict(self.document.get("campaign", {})),
            root=self.file_path.parent,
        )

    def get_campaign_info(self) -> dict[str, Any]:
        """Campaign metadata plus link counts per condition."""
        los = sum(1 for link in self.links if link.los)
        return {
            **self.document.get("campaign", {}),
            "file_name": self.file_path.name,
            "links": len(self.links),
            "los_links": los,
            "nlos_links": len(self.links) - los,
        }


def load_manifest(path: str | Path) -> DatasetManifest:
    return ManifestParser(Path(path)).get_manifest()


@dataclass(frozen=True)
class RunConfig:
    """Knobs of one analysis run."""

    gating: GatingConfig = GatingConfig()
    n_bins: int = DEFAULT_BINS
    seed: int = 0
    output_dir: Path | None = None
    analyses: frozenset[str] = ANALYSES
    workers: int = 1

    def __post_init__(self):
        if self.n_bins < 1:
            raise ManifestError(f"n_bins must be at least 1, got {self.n_bins}")
        if self.workers < 1:
            raise ManifestError(f"workers must be at least 1, got {self.workers}")
        unknown = set(self.analyses) - ANALYSES
        if unknown:
            raise ManifestError(f"unknown analyses: {', '.join(sorted(unknown))}")
        object.__setattr__(self, "analyses", frozenset(self.analyses))


_GATING_FIELDS = {item.name for item in fields(GatingConfig)}
_RUN_FIELDS = {item.name for item in fields(RunConfig)} - {"gating"}


def load_run_config(path: str | Path | None = None, **overrides: Any) -> RunConfig:
    """Build a RunConfig from an optional TOML file, then apply non-None overrides.

    The file holds a ``[run]`` table (n_bins, seed, output_dir, analyses,
    workers) and a ``[gating]`` table (gate_delay in seconds, margin_db,
    noise_fraction, wraparound_guard, min_peak_snr_db). Overrides use the same
    names and take precedence.
    """
    document = _read_toml(Path(path)) if path is not None else {}
    run = dict(document.get("run", {}))
    gating = dict(document.get("gating", {}))

    for name, value in overrides.items():
        if value is None:
            continue
        if name in _GATING_FIELDS:
            gating[name] = value
        elif name in _RUN_FIELDS:
            run[name] = value
        else:
            raise ManifestError(f"unknown run setting {name!r}")

    unknown = (set(run) - _RUN_FIELDS) | (set(gating) - _GATING_FIELDS)
    if unknown:
        raise ManifestError(f"unknown run settings: {', '.join(sorted(unknown))}")
    if run.get("output_dir") is not None:
        run["output_dir"] = Path(run["output_dir"])
    if "analyses" in run:
        run["analyses"] = frozenset(run["analyses"])

    try:
        return replace(RunConfig(**run), gating=GatingConfig(**gating))
    except ManifestError:
        raise
    except (SoundingError, TypeError) as e:
        raise ManifestError(f"invalid run configuration: {e}") from None


class SceneDocument(NamedTuple):
    scene: Scene
    axis: FrequencyAxis
    angles: AngleGrid
    antenna: AntennaModel


def load_scene(path: str | Path) -> SceneDocument:
    """Parse a scene TOML document.

    Top-level keys: distance, los, noise_power, link_id. Optional tables
    ``[axis]`` (f_start, f_stop, n_points), ``[grid]`` (step) and ``[antenna]``
    (hpbw, backlobe_db); ``[[mpc]]`` entries carry delay (s), aod, aoa (deg),
    gain_db and phase_deg.
    """
    path = Path(path)
    doc = _read_toml(path)
    try:
        axis = FrequencyAxis(**doc.get("axis", {}))
        angles = AngleGrid.full_circle(float(doc.get("grid", {}).get("step", AngleGrid.full_circle().step)))
        antenna = AntennaModel(**doc.get("antenna", {}))
        mpcs = tuple(
            Mpc(
                delay=float(entry["delay"]),
                aod=float(entry.get("aod", 0.0)),
                aoa=float(entry.get("aoa", 0.0)),
                amplitude=cmath.rect(
                    10.0 ** (float(entry.get("gain_db", 0.0)) / 20.0), math.radians(entry.get("phase_deg", 0.0))
                ),
            )
            for entry in doc.get("mpc", [])
        )
        scene = Scene(
            mpcs=mpcs,
            noise_power=float(doc.get("noise_power", 0.0)),
            distance=float(doc.get("distance", 1.0)),
            los=bool(doc.get("los", True)),
            link_id=str(doc.get("link_id", path.stem)),
        )
    except KeyError as e:
        raise ManifestError(f"{path}: mpc entry is missing {e.args[0]!r}") from None
    except (SoundingError, TypeError, ValueError) as e:
        raise ManifestError(f"{path}: invalid scene: {e}") from None
    return SceneDocument(scene, axis, angles, antenna)
