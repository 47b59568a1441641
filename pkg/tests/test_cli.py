import json
import subprocess
import sys

import numpy as np
import pytest

from ghostcam import imageio
from ghostcam.cli import main
from ghostcam.reconstruction import GhostImage


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    rc = main(["simulate", "position-skull", "--frames", "12", "--out-dir", str(out),
               "--png", "--save-frames"])
    assert rc == 0
    return out


def test_simulate_outputs(sim_dir):
    manifest = json.loads((sim_dir / "manifest.json").read_text())
    for name in manifest["outputs"]:
        assert (sim_dir / name).exists(), name
    assert manifest["master_seed"] == 20130501
    assert manifest["config"]["run.frames"] == 12
    assert manifest["started"] <= manifest["finished"]
    metrics = json.loads((sim_dir / "metrics.json").read_text())
    assert manifest["metrics"] == metrics
    assert set(metrics) == {"contrast", "psf_sigma_x", "psf_sigma_y", "field_width_gamma",
                            "mode_count", "bits_per_photon", "heralding_efficiency",
                            "variance_product_hbar2", "epr_violation"}
    img = GhostImage.load(sim_dir / "ghost.pgm")
    assert img.total_events == manifest["total_events"] > 0


def test_saved_frames(sim_dir):
    frames = sorted((sim_dir / "frames").glob("frame_*.pgm"))
    assert len(frames) == 12
    meta = json.loads((sim_dir / "frames" / "frames.json").read_text())
    assert len(meta["per_frame_photoelectrons"]) == 12
    pixels, maxval = imageio.read_pgm(frames[0])
    assert pixels.shape == (512, 512) and maxval == 65535


def test_config_echo_reruns_identically(sim_dir, tmp_path):
    rc = main(["simulate", str(sim_dir / "config.cfg"), "--out-dir", str(tmp_path)])
    assert rc == 0
    a = imageio.read_pgm(sim_dir / "ghost.pgm")[0]
    b = imageio.read_pgm(tmp_path / "ghost.pgm")[0]
    np.testing.assert_array_equal(a, b)
    assert (tmp_path / "metrics.json").read_bytes() == (sim_dir / "metrics.json").read_bytes()


def test_analyze_bit_identical(sim_dir, tmp_path):
    out = tmp_path / "again.json"
    rc = main(["analyze", str(sim_dir / "ghost.pgm"), "--config", str(sim_dir / "config.cfg"),
               "--out", str(out)])
    assert rc == 0
    assert out.read_bytes() == (sim_dir / "metrics.json").read_bytes()


def test_analyze_with_mask_file(sim_dir, tmp_path):
    from ghostcam.skull import skull_path
    out = tmp_path / "m.json"
    rc = main(["analyze", str(sim_dir / "ghost.pgm"), "--config", "position-skull",
               "--mask", str(skull_path()), "--out", str(out)])
    assert rc == 0
    assert json.loads(out.read_text())["contrast"] == \
        json.loads((sim_dir / "metrics.json").read_text())["contrast"]


def test_analyze_empty_image_gives_nulls(tmp_path, capsys):
    GhostImage(np.zeros((512, 512), dtype=np.int64)).save(tmp_path / "zero.pgm")
    rc = main(["analyze", str(tmp_path / "zero.pgm"), "--config", "position-skull"])
    assert rc == 0
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert metrics["contrast"] is None and metrics["psf_sigma_x"] is None
    assert metrics["heralding_efficiency"] is None


def test_analyze_errors(tmp_path, capsys):
    GhostImage(np.ones((10, 12), dtype=np.int64)).save(tmp_path / "small.pgm")
    assert main(["analyze", str(tmp_path / "small.pgm"), "--config", "position-skull"]) == 2
    assert "iccd.sensor_px" in capsys.readouterr().err
    (tmp_path / "bad.pgm").write_bytes(b"P5\n512 512\n65535\n\x00\x01")
    assert main(["analyze", str(tmp_path / "bad.pgm"), "--config", "position-skull"]) == 3
    assert main(["analyze", str(tmp_path / "missing.pgm"), "--config", "position-skull"]) == 3


def test_config_errors_exit_2(tmp_path, capsys):
    assert main(["simulate", str(tmp_path / "nope.cfg"), "--out-dir", str(tmp_path)]) == 2
    (tmp_path / "bad.cfg").write_text("run.frames = -1\n")
    assert main(["simulate", str(tmp_path / "bad.cfg"), "--out-dir", str(tmp_path)]) == 2
    assert "run.frames" in capsys.readouterr().err
    assert main(["delay-scan", "position-skull", "--deltas-m", "", "--out-dir", str(tmp_path)]) == 2
    assert main(["delay-scan", "position-skull", "--deltas-m", "a,b", "--out-dir", str(tmp_path)]) == 2


def test_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("GHOSTCAM_OUT_DIR", str(tmp_path / "env"))
    assert main(["simulate", "momentum-pinhole-75um", "--frames", "2"]) == 0
    assert (tmp_path / "env" / "manifest.json").exists()


def test_delay_scan_cli(tmp_path):
    rc = main(["delay-scan", "position-skull", "--frames", "3", "--deltas-m", "0,2",
               "--out-dir", str(tmp_path)])
    assert rc == 0
    scan = json.loads((tmp_path / "scan.json").read_text())
    counts = {p["delta_m"]: p["detected_count"] for p in scan["points"]}
    assert counts[0.0] > 10 * max(counts[2.0], 1)
    for p in scan["points"]:
        assert (tmp_path / p["image"]).exists()


def test_calibrate_cli(tmp_path):
    out = tmp_path / "cal.cfg"
    assert main(["calibrate", "position-skull", "--photons-per-frame", "35", "--out", str(out)]) == 0
    from ghostcam.config import load_settings
    assert load_settings(out).experiment.camera_survival == pytest.approx(35 / 30000)
    assert main(["calibrate", "position-skull"]) == 2


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "ghostcam.cli", "simulate", "missing.cfg",
                           "--out-dir", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 2
    assert "config" in proc.stderr
