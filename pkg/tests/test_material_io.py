import json

import numpy as np
import pytest

from error_handlers import MaterialIOError, ShapeError
from material_io import (
    MAP_FILES, SCHEMA_VERSION, load_manifest, load_maps, read_image, read_png, save_image, save_maps, write_png16,
)


def test_png16_round_trip(tmp_path):
    img = np.random.default_rng(0).uniform(0.0, 1.0, (5, 7, 3))
    write_png16(tmp_path / "rgb.png", img)
    back = read_png(tmp_path / "rgb.png")
    assert back.shape == (5, 7, 3)
    np.testing.assert_allclose(back, img, atol=0.5 / 65535 + 1e-12)

    write_png16(tmp_path / "grey.png", img[..., 0])
    assert read_png(tmp_path / "grey.png").shape == (5, 7)


def test_png16_rejects_two_planes(tmp_path):
    with pytest.raises(ShapeError):
        write_png16(tmp_path / "bad.png", np.zeros((4, 4, 2)))


def test_save_and_load_maps(tmp_path, material):
    manifest_path = save_maps(material, tmp_path / "mat", displacement_factor=0.75)
    manifest = json.loads(manifest_path.read_text())
    assert manifest["schema_version"] == SCHEMA_VERSION
    assert manifest["resolution"] == [16, 16]
    assert manifest["displacement_factor"] == 0.75
    assert manifest["maps"] == MAP_FILES

    maps, meta = load_maps(manifest_path)
    assert meta["displacement_factor"] == 0.75
    np.testing.assert_allclose(maps.basecolor, material.basecolor, atol=1e-4)
    np.testing.assert_allclose(maps.normal_xy, material.normal_xy, atol=1e-4)
    for name in ("height", "roughness", "metalness", "opacity"):
        np.testing.assert_allclose(getattr(maps, name), getattr(material, name), atol=1e-5)


def test_saving_is_byte_identical(tmp_path, material):
    save_maps(material, tmp_path / "a", 0.5)
    save_maps(material, tmp_path / "b", 0.5)
    for name in list(MAP_FILES.values()) + ["manifest.json"]:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_load_manifest_from_directory(tmp_path, material):
    save_maps(material, tmp_path)
    assert load_manifest(tmp_path)["_dir"] == str(tmp_path)


def test_manifest_errors(tmp_path, material):
    with pytest.raises(MaterialIOError):
        load_manifest(tmp_path / "missing.json")

    path = save_maps(material, tmp_path)
    manifest = json.loads(path.read_text())
    manifest["schema_version"] = 99
    path.write_text(json.dumps(manifest))
    with pytest.raises(MaterialIOError):
        load_manifest(path)

    manifest["schema_version"] = SCHEMA_VERSION
    del manifest["maps"]["height"]
    path.write_text(json.dumps(manifest))
    with pytest.raises(MaterialIOError):
        load_manifest(path)


def test_resolution_mismatch(tmp_path, material):
    path = save_maps(material, tmp_path)
    write_png16(tmp_path / MAP_FILES["roughness"], np.zeros((8, 8)))
    with pytest.raises(MaterialIOError):
        load_maps(path)


def test_read_image_formats(tmp_path):
    arr = np.arange(12, dtype=float).reshape(2, 2, 3)
    np.save(tmp_path / "a.npy", arr)
    np.testing.assert_array_equal(read_image(tmp_path / "a.npy"), arr)
    with pytest.raises(MaterialIOError):
        read_image(tmp_path / "nope.npy")
    (tmp_path / "a.txt").write_text("x")
    with pytest.raises(MaterialIOError):
        read_image(tmp_path / "a.txt")


def test_save_image(tmp_path):
    img = np.full((4, 4, 3), 0.5)
    save_image(tmp_path / "lin.png", img, srgb=False)
    save_image(tmp_path / "srgb.png", img)
    save_image(tmp_path / "raw.npy", img * 3)
    assert read_image(tmp_path / "lin.png")[0, 0, 0] == pytest.approx(0.5, abs=1e-4)
    assert read_image(tmp_path / "srgb.png")[0, 0, 0] == pytest.approx(0.7354, abs=1e-4)
    assert read_image(tmp_path / "raw.npy")[0, 0, 0] == 1.5
