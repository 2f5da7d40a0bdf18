import logging
from pathlib import Path

import numpy as np
import pytest

from thz_sounding.sounding import AngleGrid, FrequencyAxis
from thz_sounding.sweepfile import write_calibration, write_sweeps
from thz_sounding.synthscene import AntennaModel, Scene, random_scene, scene_to_sweeps, unit_calibration

COARSE_STEP = 30.0

# Uneven LoS distance layout of a 21-link indoor campaign
CAMPAIGN_DISTANCES = np.array(
    [2.5, 10, 14, 24, 35, 60, 80, 93, 1, 2, 5, 15, 60, 80, 98.4, 25, 35, 40, 40, 28, 28], dtype=float
)


@pytest.fixture(autouse=True)
def reset_package_logger():
    """The CLI reroutes the package logger; hand it back to caplog afterwards."""
    yield
    logger = logging.getLogger("thz_sounding")
    logger.handlers.clear()
    logger.setLevel(logging.NOTSET)
    logger.propagate = True


@pytest.fixture
def axis() -> FrequencyAxis:
    return FrequencyAxis()


@pytest.fixture
def axis_1000() -> FrequencyAxis:
    """1 GHz over 1000 points: 1 ns bins and a 1 us delay span."""
    return FrequencyAxis(145e9, 146e9, 1000)


@pytest.fixture
def coarse_grid() -> AngleGrid:
    return AngleGrid.full_circle(COARSE_STEP)


def write_manifest(root: Path, scenes: list[Scene], grid: AngleGrid, name: str = "synthetic") -> Path:
    """Render scenes to sweep files next to a shared unit calibration and list them in a manifest."""
    axis = FrequencyAxis()
    calibration = write_calibration(unit_calibration(axis), root / "cal.thzs")
    lines = ["[campaign]", f'name = "{name}"', ""]
    for index, scene in enumerate(scenes):
        grid_samples = scene_to_sweeps(scene, AntennaModel(), axis, grid, seed=index)
        sweep = write_sweeps(grid_samples, root / f"{scene.link_id}.thzs")
        lines += [
            "[[links]]",
            f'id = "{scene.link_id}"',
            f'sweep = "{sweep.name}"',
            f'calibration = "{calibration.name}"',
            f"distance = {scene.distance!r}",
            f"los = {'true' if scene.los else 'false'}",
            f'tx = "Tx{index}"',
            f'rx = "Rx{index}"',
            "",
        ]
    manifest = root / "manifest.toml"
    manifest.write_text("\n".join(lines), encoding="utf-8")
    return manifest


def campaign_scenes(n_los: int, n_nlos: int, seed: int = 7) -> list[Scene]:
    rng = np.random.default_rng(seed)
    grid = AngleGrid.full_circle(COARSE_STEP)
    scenes = []
    for index in range(n_los + n_nlos):
        los = index < n_los
        scenes.append(random_scene(rng, angles=grid, los=los, link_id=f"L{index:02d}"))
    return scenes


@pytest.fixture
def make_campaign(tmp_path, coarse_grid):
    """Factory for on-disk synthetic campaigns."""

    def make(n_los: int = 3, n_nlos: int = 3, extra: list[Scene] | None = None) -> Path:
        scenes = campaign_scenes(n_los, n_nlos) + list(extra or [])
        return write_manifest(tmp_path, scenes, coarse_grid)

    return make
