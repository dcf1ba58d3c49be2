import json
import logging

import numpy as np
import pytest

from error_handlers import ValidationError
from main import EXIT_OK, EXIT_RUNTIME, EXIT_TILECHECK, EXIT_VALIDATION, RunConfig, main
from material_io import MAP_FILES, read_image, save_maps
from svbrdf import MaterialMaps, height_to_normal

SMALL_RUN = ["--res", "128", "--base-res", "64", "--channels", "4", "--steps", "4",
             "--patch", "8", "--decode-patch", "8", "--seed", "17"]


@pytest.fixture
def cli(logs_dir):
    def run(*args):
        return main(["--logs-dir", str(logs_dir), *map(str, args)])
    return run


@pytest.fixture
def wave_material(tmp_path):
    n = 32
    i, j = np.mgrid[0:n, 0:n]
    height = 0.5 + 0.2 * np.sin(2 * np.pi * j / n) * np.cos(2 * np.pi * i / n)
    maps = MaterialMaps.uniform(n, n, basecolor=0.6, roughness=0.5)
    maps.height = height
    maps.normal_xy = height_to_normal(height, 0.5)[..., :2]
    return save_maps(maps, tmp_path / "wave", displacement_factor=0.5)

# ============================================================================
# SAMPLE
# ============================================================================

def test_sample_is_reproducible(cli, tmp_path):
    assert cli("sample", *SMALL_RUN, "--out", tmp_path / "a") == EXIT_OK
    assert cli("sample", *SMALL_RUN, "--out", tmp_path / "b") == EXIT_OK
    for name in MAP_FILES.values():
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert (tmp_path / "a" / "latent.npy").read_bytes() == (tmp_path / "b" / "latent.npy").read_bytes()

    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["resolution"] == [128, 128]
    assert read_image(tmp_path / "a" / "latent.npy").shape == (16, 16, 4)


@pytest.mark.parametrize("res", [512, 1024])
def test_full_size_sample_is_byte_identical(cli, tmp_path, res):
    args = ["--res", res, "--base-res", res // 2, "--channels", "4", "--steps", "2", "--patch", "32",
            "--decode-patch", "64", "--seed", "7"]
    assert cli("sample", *args, "--out", tmp_path / "a") == EXIT_OK
    assert cli("sample", *args, "--out", tmp_path / "b") == EXIT_OK
    for name in MAP_FILES.values():
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert read_image(tmp_path / "a" / MAP_FILES["height"]).shape[:2] == (res, res)


def test_sample_from_saved_config(cli, tmp_path):
    assert cli("sample", *SMALL_RUN, "--out", tmp_path / "a") == EXIT_OK
    cfg = RunConfig.from_file(tmp_path / "a" / "run_config.json")
    assert cfg.seed == 17 and cfg.res == 128

    assert cli("sample", "--from-config", tmp_path / "a" / "run_config.json", "--out", tmp_path / "c") == EXIT_OK
    assert (tmp_path / "a" / "height.png").read_bytes() == (tmp_path / "c" / "height.png").read_bytes()


def test_saved_config_field_types_checked(cli, tmp_path, capsys):
    cfg_path = tmp_path / "run_config.json"
    cfg_path.write_text(json.dumps({"res": "512", "seed": 3}))
    with pytest.raises(ValidationError, match="'res' must be int"):
        RunConfig.from_file(cfg_path)
    assert cli("sample", "--from-config", cfg_path, "--out", tmp_path / "x") == EXIT_VALIDATION
    assert "'res' must be int" in capsys.readouterr().err

    cfg_path.write_text(json.dumps({"overlap_frac": 1, "target": None, "fit_displacement": False}))
    cfg = RunConfig.from_file(cfg_path)
    assert cfg.overlap_frac == 1.0 and isinstance(cfg.overlap_frac, float)
    assert cfg.target is None and cfg.fit_displacement is False
    cfg_path.write_text(json.dumps({"steps": True}))
    with pytest.raises(ValidationError):
        RunConfig.from_file(cfg_path)


def test_sample_rejects_bad_resolution_before_writing(cli, tmp_path, capsys):
    out = tmp_path / "never"
    assert cli("sample", "--res", "513", "--out", out) == EXIT_VALIDATION
    assert "resolution must be divisible by patch stride" in capsys.readouterr().err
    assert not out.exists()
    assert cli("sample", "--res", "520", "--patch", "32", "--out", out) == EXIT_VALIDATION
    assert cli("sample", "--res", "192", "--base-res", "64", "--out", out) == EXIT_VALIDATION
    assert not out.exists()


def test_sample_dry_run_reports_chain(cli, tmp_path, caplog):
    caplog.set_level(logging.INFO)
    out = tmp_path / "dry"
    assert cli("sample", "--res", "4096", "--base-res", "512", "--dry-run", "--out", out) == EXIT_OK
    assert "512→1024→2048→4096" in caplog.text
    assert not out.exists()


def test_attractor_needs_target(cli, tmp_path):
    assert cli("sample", "--oracle", "attractor", "--out", tmp_path / "x") == EXIT_VALIDATION


def test_attractor_with_inpaint_border(cli, tmp_path):
    target = np.random.default_rng(0).standard_normal((16, 16, 4))
    np.save(tmp_path / "target.npy", target)
    args = [*SMALL_RUN, "--oracle", "attractor", "--target", tmp_path / "target.npy"]
    assert cli("sample", *args, "--out", tmp_path / "plain") == EXIT_OK
    np.testing.assert_allclose(np.load(tmp_path / "plain" / "latent.npy"), target, atol=1e-8)

    assert cli("sample", *args, "--inpaint-border", "1/16", "--out", tmp_path / "ring") == EXIT_OK
    latent = np.load(tmp_path / "ring" / "latent.npy")
    np.testing.assert_allclose(latent[1:-1, 1:-1], target[1:-1, 1:-1], atol=1e-8)
    assert not np.allclose(latent[0], target[0])


def test_target_shape_checked(cli, tmp_path):
    np.save(tmp_path / "target.npy", np.zeros((8, 8, 4)))
    assert cli("sample", *SMALL_RUN, "--oracle", "attractor", "--target", tmp_path / "target.npy",
               "--out", tmp_path / "x") == EXIT_VALIDATION

# ============================================================================
# TILECHECK
# ============================================================================

def test_tilecheck_exit_codes(cli, tmp_path, capsys):
    i, j = np.mgrid[0:16, 0:16]
    np.save(tmp_path / "checker.npy", (-1.0) ** (i + j))
    np.save(tmp_path / "ramp.npy", j / 16.0)

    assert cli("tilecheck", tmp_path / "checker.npy") == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["passed"] and report["schema_version"] == 1

    assert cli("tilecheck", tmp_path / "ramp.npy", "--json-out", tmp_path / "r.json") == EXIT_TILECHECK
    assert json.loads((tmp_path / "r.json").read_text())["ratio"] == pytest.approx(225.0)

# ============================================================================
# MATERIALI
# ============================================================================

def test_fit_displacement_command(cli, wave_material, capsys):
    assert cli("fit-displacement", wave_material) == EXIT_OK
    result = json.loads(capsys.readouterr().out)
    assert result["factor"] == pytest.approx(0.5, abs=1e-3)
    assert not result["degenerate"]


def test_fit_displacement_updates_manifest(cli, wave_material):
    manifest = json.loads(wave_material.read_text())
    manifest["displacement_factor"] = 0.0
    wave_material.write_text(json.dumps(manifest))
    assert cli("fit-displacement", wave_material, "--update") == EXIT_OK
    assert json.loads(wave_material.read_text())["displacement_factor"] == pytest.approx(0.5, abs=1e-3)


def test_render_and_clay(cli, wave_material, tmp_path):
    assert cli("render", wave_material, "--out", tmp_path / "r.png", "--light", "0.3,0.2,1") == EXIT_OK
    assert cli("clay", wave_material, "--out", tmp_path / "c.png", "--light-kind", "point",
               "--light", "0.5,0.5,2") == EXIT_OK
    assert read_image(tmp_path / "r.png").shape == (32, 32, 3)
    assert read_image(tmp_path / "c.png").shape == (32, 32, 3)


def test_metrics_command(cli, wave_material, capsys):
    assert cli("metrics", wave_material, wave_material) == EXIT_OK
    table = json.loads(capsys.readouterr().out)
    assert table["maps"]["render"]["rmse"] == 0.0
    assert table["maps"]["height"]["ssim"] == pytest.approx(1.0)


def test_missing_manifest_is_runtime_error(cli, tmp_path, caplog):
    caplog.set_level(logging.ERROR)
    assert cli("render", tmp_path / "nope", "--out", tmp_path / "r.png") == EXIT_RUNTIME
    assert "Errore in 'render'" in caplog.text

# ============================================================================
# MASK E PARSING
# ============================================================================

def test_mask_command(cli, tmp_path, capsys):
    assert cli("mask", "border", "--height", 16, "--width", 16, "--frac", "1/16",
               "--out", tmp_path / "m.png") == EXIT_OK
    assert json.loads(capsys.readouterr().out)["masked_pixels"] == 60
    assert read_image(tmp_path / "m.png").sum() == 60

    assert cli("mask", "random", "--height", 32, "--width", 32, "--seed", 4) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["masked_fraction"] <= 0.45


def test_empty_border_mask_is_validation_error(cli, capsys):
    assert cli("mask", "border", "--height", 8, "--width", 8, "--frac", "1/32") == EXIT_VALIDATION
    assert "empty border" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [[], ["paint"], ["mask", "border"], ["sample", "--steps", "many"],
                                  ["mask", "border", "--height", "8", "--width", "8", "--frac", "x/y"]])
def test_parse_errors_exit_one(cli, argv):
    assert cli(*argv) == EXIT_VALIDATION
