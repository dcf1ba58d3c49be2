"""
Material I/O
Un PNG a 16 bit per mappa (basecolor sRGB, normal RGB, le altre lineari in scala di grigi)
piu' un manifest JSON. Output deterministico: stessi dati → stessi byte.
"""

import json
import logging
import os
from pathlib import Path
from typing import Dict, Tuple, Union

import numpy as np
import png

from error_handlers import MaterialIOError, ShapeError
from svbrdf import MaterialMaps, from_srgb, to_srgb

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
MANIFEST_NAME = "manifest.json"
MAP_FILES = {
    "basecolor": "basecolor.png",
    "normal": "normal.png",
    "height": "height.png",
    "roughness": "roughness.png",
    "metalness": "metalness.png",
    "opacity": "opacity.png",
}

PathLike = Union[str, os.PathLike]

# ============================================================================
# PNG
# ============================================================================

def write_png16(path: PathLike, img: np.ndarray):
    """Scrive un'immagine float in [0, 1] (H x W, H x W x 1 o H x W x 3) come PNG a 16 bit."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3 and img.shape[-1] == 1:
        img = img[..., 0]
    if img.ndim == 2:
        planes = 1
    elif img.ndim == 3 and img.shape[-1] in (3, 4):
        planes = img.shape[-1]
    else:
        raise ShapeError(f"cannot write an image of shape {img.shape} as PNG")
    h, w = img.shape[:2]
    q = np.round(np.clip(img, 0.0, 1.0) * 65535.0).astype(np.uint16).reshape(h, w * planes)
    writer = png.Writer(width=w, height=h, greyscale=(planes == 1), alpha=(planes == 4), bitdepth=16)
    try:
        with open(path, "wb") as f:
            writer.write(f, (row.tolist() for row in q))
    except OSError as e:
        raise MaterialIOError(f"cannot write {path}: {e}") from e


def read_png(path: PathLike) -> np.ndarray:
    """PNG 8/16 bit → float in [0, 1], H x W o H x W x planes."""
    try:
        width, height, rows, info = png.Reader(filename=str(path)).asDirect()
        data = np.array([np.asarray(row, dtype=np.float64) for row in rows])
    except (OSError, png.Error) as e:
        raise MaterialIOError(f"cannot read {path}: {e}") from e
    planes = info["planes"]
    data = data.reshape(height, width, planes) / float(2 ** info["bitdepth"] - 1)
    return data[..., 0] if planes == 1 else data


def read_image(path: PathLike) -> np.ndarray:
    """.npy (qualsiasi forma, float64) oppure .png."""
    path = Path(path)
    if not path.is_file():
        raise MaterialIOError(f"no such file: {path}")
    if path.suffix.lower() == ".npy":
        try:
            return np.asarray(np.load(path, allow_pickle=False), dtype=np.float64)
        except (OSError, ValueError) as e:
            raise MaterialIOError(f"cannot read {path}: {e}") from e
    if path.suffix.lower() == ".png":
        return read_png(path)
    raise MaterialIOError(f"unsupported image format: {path.suffix}")


def save_image(path: PathLike, img: np.ndarray, srgb: bool = True):
    """Salva un render: .npy grezzo, altrimenti PNG 16 bit (sRGB se richiesto)."""
    path = Path(path)
    if path.suffix.lower() == ".npy":
        np.save(path, np.asarray(img, dtype=np.float64))
        return
    img = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    write_png16(path, to_srgb(img) if srgb else img)

# ============================================================================
# MAPPE + MANIFEST
# ============================================================================

def save_maps(maps: MaterialMaps, out_dir: PathLike, displacement_factor: float = 0.0) -> Path:
    """Scrive le 6 mappe e il manifest; restituisce il path del manifest."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise MaterialIOError(f"cannot create {out_dir}: {e}") from e

    write_png16(out_dir / MAP_FILES["basecolor"], to_srgb(maps.basecolor))
    write_png16(out_dir / MAP_FILES["normal"], (maps.normal_xyz() + 1.0) / 2.0)
    for name in ("height", "roughness", "metalness", "opacity"):
        write_png16(out_dir / MAP_FILES[name], getattr(maps, name))

    h, w = maps.shape
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "resolution": [h, w],
        "displacement_factor": float(displacement_factor),
        "maps": dict(MAP_FILES),
        "encoding": {"basecolor": "srgb", "normal": "rgb_unit_vector", "default": "linear"},
        "bitdepth": 16,
    }
    path = out_dir / MANIFEST_NAME
    with open(path, "w") as f:
        f.write(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    logger.info(f"💾 Mappe salvate in {out_dir} ({h}x{w})")
    return path


def load_manifest(manifest_path: PathLike) -> Dict:
    path = Path(manifest_path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    try:
        with open(path) as f:
            manifest = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise MaterialIOError(f"cannot read manifest {path}: {e}") from e
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise MaterialIOError(f"unsupported manifest schema {manifest.get('schema_version')!r}")
    missing = [k for k in MAP_FILES if k not in manifest.get("maps", {})]
    if missing:
        raise MaterialIOError(f"manifest is missing maps: {missing}")
    manifest["_dir"] = str(path.parent)
    return manifest


def load_maps(manifest_path: PathLike) -> Tuple[MaterialMaps, Dict]:
    """Legge manifest + mappe; verifica che ogni mappa abbia la risoluzione dichiarata."""
    manifest = load_manifest(manifest_path)
    base = Path(manifest["_dir"])
    h, w = manifest["resolution"]

    def read(name: str, planes: int) -> np.ndarray:
        img = read_png(base / manifest["maps"][name])
        got_planes = 1 if img.ndim == 2 else img.shape[-1]
        if img.shape[:2] != (h, w) or got_planes != planes:
            raise MaterialIOError(f"{name} map has shape {img.shape}, manifest says {h}x{w}x{planes}")
        return img

    normal = read("normal", 3) * 2.0 - 1.0
    maps = MaterialMaps(
        basecolor=from_srgb(read("basecolor", 3)),
        normal_xy=normal[..., :2],
        height=read("height", 1),
        roughness=read("roughness", 1),
        metalness=read("metalness", 1),
        opacity=read("opacity", 1),
    )
    return maps, manifest

# End material_io.py
