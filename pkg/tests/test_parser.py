import math
from pathlib import Path

import pytest

from thz_sounding.errors import ManifestError
from thz_sounding.parser import ANALYSES, ManifestParser, load_manifest, load_run_config, load_scene


def _touch(root: Path, *names: str) -> None:
    for name in names:
        (root / name).write_bytes(b"")


def _manifest(root: Path, body: str) -> Path:
    path = root / "manifest.toml"
    path.write_text(body, encoding="utf-8")
    return path


LINKS = """
[campaign]
name = "Hallway D2D"

[[links]]
id = "L01"
sweep = "l01.thzs"
calibration = "cal.thzs"
distance = 2.5
los = true
tx = "T1"
rx = "R4"

[[links]]
id = "L02"
sweep = "l02.thzs"
calibration = "cal.thzs"
distance = 14.0
los = false
height = 1.2
"""


def test_parse_manifest(tmp_path):
    _touch(tmp_path, "l01.thzs", "l02.thzs", "cal.thzs")
    parser = ManifestParser(_manifest(tmp_path, LINKS))
    manifest = parser.get_manifest()
    assert len(manifest) == 2
    first, second = manifest.links
    assert first.sweep == tmp_path / "l01.thzs"
    assert first.meta.tx_id == "T1"
    assert first.meta.rx_id == "R4"
    assert second.los is False
    assert second.height == 1.2
    assert manifest.campaign["name"] == "Hallway D2D"


def test_campaign_info(tmp_path):
    _touch(tmp_path, "l01.thzs", "l02.thzs", "cal.thzs")
    info = ManifestParser(_manifest(tmp_path, LINKS)).get_campaign_info()
    assert info["name"] == "Hallway D2D"
    assert info["file_name"] == "manifest.toml"
    assert (info["links"], info["los_links"], info["nlos_links"]) == (2, 1, 1)


def test_missing_sweep_file(tmp_path):
    _touch(tmp_path, "l01.thzs", "cal.thzs")
    with pytest.raises(ManifestError, match="l02.thzs"):
        load_manifest(_manifest(tmp_path, LINKS))


def test_duplicate_link_id(tmp_path):
    _touch(tmp_path, "l01.thzs", "l02.thzs", "cal.thzs")
    with pytest.raises(ManifestError, match="duplicate"):
        load_manifest(_manifest(tmp_path, LINKS.replace('"L02"', '"L01"')))


@pytest.mark.parametrize(
    "old, new, message",
    [
        ("distance = 14.0", "distance = -3.0", "distance must be positive"),
        ("los = false", "", "missing los"),
        ('id = "L02"', "", "has no id"),
    ],
)
def test_invalid_link_entries(tmp_path, old, new, message):
    _touch(tmp_path, "l01.thzs", "l02.thzs", "cal.thzs")
    with pytest.raises(ManifestError, match=message):
        load_manifest(_manifest(tmp_path, LINKS.replace(old, new)))


def test_los_must_be_boolean(tmp_path):
    _touch(tmp_path, "l01.thzs", "l02.thzs", "cal.thzs")
    with pytest.raises(ManifestError, match="true or false"):
        load_manifest(_manifest(tmp_path, LINKS.replace("los = false", 'los = "no"')))


def test_invalid_toml(tmp_path):
    with pytest.raises(ManifestError, match="invalid TOML"):
        load_manifest(_manifest(tmp_path, "[[links]\nid ="))
    with pytest.raises(ManifestError, match="not found"):
        load_manifest(tmp_path / "absent.toml")


def test_run_config_defaults():
    config = load_run_config()
    assert config.gating.gate_delay == pytest.approx(833.33e-9)
    assert config.gating.margin_db == 6.0
    assert config.n_bins == 10
    assert config.analyses == ANALYSES
    assert config.output_dir is None


def test_run_config_file_and_overrides(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(
        '[run]\nn_bins = 6\nseed = 5\noutput_dir = "out"\nanalyses = ["records"]\n\n'
        "[gating]\ngate_delay = 500e-9\nmargin_db = 10.0\n",
        encoding="utf-8",
    )
    config = load_run_config(path, margin_db=8.0, seed=None, workers=3)
    assert config.n_bins == 6
    assert config.seed == 5
    assert config.output_dir == Path("out")
    assert config.analyses == frozenset({"records"})
    assert config.gating.gate_delay == pytest.approx(500e-9)
    assert config.gating.margin_db == 8.0
    assert config.workers == 3


@pytest.mark.parametrize(
    "overrides, message",
    [
        ({"n_bins": 0}, "n_bins"),
        ({"analyses": ["records", "movies"]}, "movies"),
        ({"margin_db": -6.0}, "noise margin"),
        ({"colour": "red"}, "colour"),
    ],
)
def test_run_config_rejects_bad_values(overrides, message):
    with pytest.raises(ManifestError, match=message):
        load_run_config(**overrides)


def test_run_config_rejects_unknown_table_keys(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text("[gating]\nwindow = 3\n", encoding="utf-8")
    with pytest.raises(ManifestError, match="window"):
        load_run_config(path)


SCENE = """
distance = 9.9
los = true
noise_power = 1e-12
link_id = "demo"

[axis]
n_points = 1000

[grid]
step = 30.0

[antenna]
hpbw = 15.0

[[mpc]]
delay = 33e-9
gain_db = -20.0

[[mpc]]
delay = 70e-9
aod = 90.0
aoa = 270.0
gain_db = -30.0
phase_deg = 90.0
"""


def test_load_scene(tmp_path):
    path = tmp_path / "scene.toml"
    path.write_text(SCENE, encoding="utf-8")
    document = load_scene(path)
    assert document.axis.n_points == 1000
    assert document.angles.shape == (12, 12)
    assert document.antenna.hpbw == 15.0
    assert document.scene.link_id == "demo"
    first, second = document.scene.mpcs
    assert first.amplitude == pytest.approx(0.1)
    assert abs(second.amplitude) == pytest.approx(10 ** (-1.5))
    assert math.degrees(math.atan2(second.amplitude.imag, second.amplitude.real)) == pytest.approx(90.0)


def test_scene_errors(tmp_path):
    path = tmp_path / "scene.toml"
    path.write_text("[[mpc]]\naod = 10.0\n", encoding="utf-8")
    with pytest.raises(ManifestError, match="delay"):
        load_scene(path)
    path.write_text("distance = -1.0\n", encoding="utf-8")
    with pytest.raises(ManifestError, match="invalid scene"):
        load_scene(path)
