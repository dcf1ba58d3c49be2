"""
SVBRDF Module
Rappresentazione materiale a 9 canali, rendering Cook-Torrance/GGX,
height ↔ normal, fit del displacement factor e metriche di valutazione.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar
from skimage.metrics import structural_similarity

import config as settings
from error_handlers import ShapeError, require

logger = logging.getLogger(__name__)

F0_DIELECTRIC = 0.04
MIN_ALPHA = 1e-3
MIN_NZ = 1e-4

# basecolor 3, normal_xy 2, height, roughness, metalness, opacity
STACK_LAYOUT = (("basecolor", 3), ("normal_xy", 2), ("height", 1),
                ("roughness", 1), ("metalness", 1), ("opacity", 1))

# ============================================================================
# MATERIAL MAPS
# ============================================================================

def _clip_unit_disk(xy: np.ndarray) -> np.ndarray:
    r = np.sqrt(np.sum(xy * xy, axis=-1, keepdims=True))
    return np.where(r > 1.0, xy / np.maximum(r, 1e-12), xy)


@dataclass
class MaterialMaps:
    """
    Stack SVBRDF in pixel space (lineare). Le mappe scalari sono H x W.

    Il costruttore porta i valori nei loro range: [0, 1] per le scalari e il
    basecolor, disco unitario per normal_xy.
    """

    basecolor: np.ndarray
    normal_xy: np.ndarray
    height: np.ndarray
    roughness: np.ndarray
    metalness: np.ndarray
    opacity: np.ndarray

    def __post_init__(self):
        self.basecolor = np.clip(np.asarray(self.basecolor, dtype=np.float64), 0.0, 1.0)
        if self.basecolor.ndim != 3 or self.basecolor.shape[-1] != 3:
            raise ShapeError(f"basecolor must be H x W x 3, got {self.basecolor.shape}")
        hw = self.basecolor.shape[:2]
        self.normal_xy = _clip_unit_disk(np.asarray(self.normal_xy, dtype=np.float64))
        if self.normal_xy.shape != hw + (2,):
            raise ShapeError(f"normal_xy must be {hw + (2,)}, got {self.normal_xy.shape}")
        for name in ("height", "roughness", "metalness", "opacity"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.ndim == 3 and arr.shape[-1] == 1:
                arr = arr[..., 0]
            if arr.shape != hw:
                raise ShapeError(f"{name} must be {hw}, got {arr.shape}")
            setattr(self, name, np.clip(arr, 0.0, 1.0))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.basecolor.shape[:2]

    @classmethod
    def from_stack(cls, stack: np.ndarray) -> "MaterialMaps":
        stack = np.asarray(stack, dtype=np.float64)
        if stack.ndim != 3 or stack.shape[-1] != settings.MAP_CHANNELS:
            raise ShapeError(f"material stack must be H x W x {settings.MAP_CHANNELS}, got {stack.shape}")
        parts, start = {}, 0
        for name, n in STACK_LAYOUT:
            parts[name] = stack[..., start:start + n] if n > 1 else stack[..., start]
            start += n
        return cls(**parts)

    @classmethod
    def uniform(cls, h: int, w: int, basecolor=0.5, roughness=0.5, metalness=0.0,
                height=0.5, opacity=1.0) -> "MaterialMaps":
        full = lambda v: np.full((h, w), float(v))
        return cls(basecolor=np.broadcast_to(np.asarray(basecolor, float), (h, w, 3)).copy(),
                   normal_xy=np.zeros((h, w, 2)), height=full(height),
                   roughness=full(roughness), metalness=full(metalness), opacity=full(opacity))

    def to_stack(self) -> np.ndarray:
        return np.concatenate([self.basecolor, self.normal_xy, self.height[..., None],
                               self.roughness[..., None], self.metalness[..., None],
                               self.opacity[..., None]], axis=-1)

    def normal_xyz(self) -> np.ndarray:
        z = np.sqrt(np.clip(1.0 - np.sum(self.normal_xy ** 2, axis=-1), 0.0, 1.0))
        return np.concatenate([self.normal_xy, z[..., None]], axis=-1)

# ============================================================================
# LUCI
# ============================================================================

def _normalize(v: np.ndarray) -> np.ndarray:
    return v / np.maximum(np.linalg.norm(v, axis=-1, keepdims=True), 1e-12)


@dataclass(frozen=True)
class LightSpec:
    """Luce analitica: direzionale (verso la luce) o puntiforme (posizione, caduta 1/d²)."""

    kind: str
    vector: Tuple[float, float, float]
    intensity: Tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        require(self.kind in ("directional", "point"), "light kind must be directional or point",
                "kind", self.kind)
        vec = np.asarray(self.vector, dtype=np.float64)
        require(vec.shape == (3,) and np.isfinite(vec).all(), "light vector must be a finite 3-vector",
                "vector", self.vector)
        if self.kind == "directional":
            n = float(np.linalg.norm(vec))
            require(n > 0, "light direction must be non-zero", "vector", self.vector)
            vec = vec / n
        intensity = np.broadcast_to(np.asarray(self.intensity, dtype=np.float64), (3,))
        object.__setattr__(self, "vector", tuple(float(x) for x in vec))
        object.__setattr__(self, "intensity", tuple(float(x) for x in intensity))

    @classmethod
    def directional(cls, direction=(0.0, 0.0, 1.0), intensity=1.0) -> "LightSpec":
        return cls("directional", tuple(direction), intensity)

    @classmethod
    def point(cls, position, intensity=1.0) -> "LightSpec":
        return cls("point", tuple(position), intensity)

    def incident(self, positions: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(direzioni l per punto, fattore di caduta)."""
        if self.kind == "directional":
            l = np.broadcast_to(np.asarray(self.vector), positions.shape)
            return l, np.ones(positions.shape[:-1])
        d = np.asarray(self.vector) - positions
        dist2 = np.sum(d * d, axis=-1)
        return d / np.sqrt(dist2)[..., None], 1.0 / dist2


def pixel_positions(h: int, w: int) -> np.ndarray:
    """Centri dei pixel sul piano z=0, il materiale copre [0,1]²."""
    ys = (np.arange(h) + 0.5) / h
    xs = (np.arange(w) + 0.5) / w
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx, gy, np.zeros_like(gx)], axis=-1)

# ============================================================================
# BRDF
# ============================================================================

def _dot(a, b):
    return np.sum(a * b, axis=-1)


def ggx_d(n_dot_h, alpha):
    a2 = alpha * alpha
    d = n_dot_h * n_dot_h * (a2 - 1.0) + 1.0
    return a2 / (math.pi * d * d)


def smith_visibility(n_dot_l, n_dot_v, alpha):
    """Smith height-correlated, gia' diviso per 4·(n·l)·(n·v)."""
    a2 = alpha * alpha
    gv = n_dot_l * np.sqrt(n_dot_v * n_dot_v * (1.0 - a2) + a2)
    gl = n_dot_v * np.sqrt(n_dot_l * n_dot_l * (1.0 - a2) + a2)
    return 0.5 / np.maximum(gv + gl, 1e-12)


def fresnel_schlick(cos_theta, f0):
    return f0 + (1.0 - f0) * np.asarray(1.0 - cos_theta)[..., None] ** 5


def brdf_components(basecolor, roughness, metalness, n, l, v) -> Tuple[np.ndarray, np.ndarray]:
    """
    (diffuso, speculare) senza il fattore n·l; zero dove n·l <= 0 o n·v <= 0.

    Il diffuso e' pesato dalla trasmissione di Fresnel in ingresso e in uscita.
    """
    basecolor = np.asarray(basecolor, dtype=np.float64)
    roughness = np.asarray(roughness, dtype=np.float64)
    metalness = np.asarray(metalness, dtype=np.float64)
    n, l, v = (np.asarray(x, dtype=np.float64) for x in (n, l, v))

    n_dot_l = _dot(n, l)
    n_dot_v = _dot(n, v)
    lit = (n_dot_l > 0) & (n_dot_v > 0)
    nl = np.clip(n_dot_l, 0.0, 1.0)
    nv = np.clip(n_dot_v, 0.0, 1.0)
    h = _normalize(l + v)
    nh = np.clip(_dot(n, h), 0.0, 1.0)
    vh = np.clip(_dot(v, h), 0.0, 1.0)

    alpha = np.maximum(roughness * roughness, MIN_ALPHA)
    m = metalness[..., None]
    f0 = F0_DIELECTRIC * (1.0 - m) + basecolor * m

    specular = np.asarray(ggx_d(nh, alpha) * smith_visibility(nl, nv, alpha))[..., None] * fresnel_schlick(vh, f0)
    diffuse = (1.0 - m) * basecolor / math.pi * (1.0 - fresnel_schlick(nl, f0)) * (1.0 - fresnel_schlick(nv, f0))

    mask = np.asarray(lit)[..., None]
    return np.where(mask, diffuse, 0.0), np.where(mask, specular, 0.0)


def brdf_eval(basecolor, roughness, metalness, n, l, v) -> np.ndarray:
    """Riflettanza RGB (diffuso + speculare)·(n·l)."""
    diffuse, specular = brdf_components(basecolor, roughness, metalness, n, l, v)
    n_dot_l = np.asarray(np.clip(_dot(np.asarray(n, float), np.asarray(l, float)), 0.0, None))
    return (diffuse + specular) * n_dot_l[..., None]

# ============================================================================
# HEIGHT / NORMAL
# ============================================================================

def height_gradient(height: np.ndarray, displacement_factor: float) -> Tuple[np.ndarray, np.ndarray]:
    """Differenze centrali toroidali, in unita' di larghezza del tile."""
    height = np.asarray(height, dtype=np.float64)
    if height.ndim == 3 and height.shape[-1] == 1:
        height = height[..., 0]
    if height.ndim != 2:
        raise ShapeError(f"height must be H x W, got {height.shape}")
    h, w = height.shape
    gx = (np.roll(height, -1, axis=1) - np.roll(height, 1, axis=1)) * (0.5 * w * displacement_factor)
    gy = (np.roll(height, -1, axis=0) - np.roll(height, 1, axis=0)) * (0.5 * h * displacement_factor)
    return gx, gy


def height_to_normal(height: np.ndarray, displacement_factor: float) -> np.ndarray:
    """normalize(−g_x, −g_y, 1) per pixel; x = colonne, y = righe."""
    require(displacement_factor >= 0, "displacement factor must be >= 0",
            "displacement_factor", displacement_factor)
    gx, gy = height_gradient(height, displacement_factor)
    return _normalize(np.stack([-gx, -gy, np.ones_like(gx)], axis=-1))


def combine_normals(normal_xy: np.ndarray, height: np.ndarray, displacement_factor: float) -> np.ndarray:
    """Somma delle pendenze della normale salvata e di quella dall'altezza."""
    nz = np.sqrt(np.clip(1.0 - np.sum(normal_xy ** 2, axis=-1), MIN_NZ ** 2, 1.0))
    sx = normal_xy[..., 0] / nz
    sy = normal_xy[..., 1] / nz
    if displacement_factor:
        gx, gy = height_gradient(height, displacement_factor)
        sx = sx - gx
        sy = sy - gy
    return _normalize(np.stack([sx, sy, np.ones_like(sx)], axis=-1))

# ============================================================================
# RENDERING
# ============================================================================

def render(maps: MaterialMaps, light: LightSpec, view: Sequence[float] = (0.0, 0.0, 1.0),
           displacement_factor: float = 0.0) -> np.ndarray:
    """Shading per pixel (camera ortografica lungo `view`), RGB lineare."""
    require(displacement_factor >= 0, "displacement factor must be >= 0",
            "displacement_factor", displacement_factor)
    h, w = maps.shape
    n = combine_normals(maps.normal_xy, maps.height, displacement_factor)
    v = _normalize(np.asarray(view, dtype=np.float64))
    l, falloff = light.incident(pixel_positions(h, w))
    f = brdf_eval(maps.basecolor, maps.roughness, maps.metalness, n, l, np.broadcast_to(v, n.shape))
    return f * np.asarray(light.intensity) * falloff[..., None] * maps.opacity[..., None]


def clay_render(height: np.ndarray, displacement_factor: float, light: LightSpec,
                view: Sequence[float] = (0.0, 0.0, 1.0)) -> np.ndarray:
    """Render con mappe neutre (grigio 0.5, roughness 0.6, non metallico) e sola normale da altezza."""
    height = np.asarray(height, dtype=np.float64)
    if height.ndim == 3:
        height = height[..., 0]
    h, w = height.shape
    clay = MaterialMaps.uniform(h, w, basecolor=0.5, roughness=0.6, metalness=0.0, opacity=1.0)
    clay.height = np.asarray(height, dtype=np.float64)  # senza clip: offset costanti non cambiano lo shading
    return render(clay, light, view, displacement_factor)

# ============================================================================
# DISPLACEMENT FACTOR
# ============================================================================

@dataclass(frozen=True)
class DisplacementFit:
    factor: float
    residual_rmse: float
    degenerate: bool = False


def _as_normals(target: np.ndarray) -> np.ndarray:
    target = np.asarray(target, dtype=np.float64)
    if target.shape[-1] == 2:
        z = np.sqrt(np.clip(1.0 - np.sum(target ** 2, axis=-1), 0.0, 1.0))
        target = np.concatenate([target, z[..., None]], axis=-1)
    if target.ndim != 3 or target.shape[-1] != 3:
        raise ShapeError(f"target normals must be H x W x 3, got {target.shape}")
    return target


def fit_displacement_factor(height: np.ndarray, target_normals: np.ndarray,
                            d_max: float = settings.DISPLACEMENT_MAX) -> DisplacementFit:
    """
    d in [0, d_max] che minimizza RMSE(height_to_normal(height, d), target).

    Scansione grossolana per isolare il minimo, poi Brent limitato
    (golden section + parabole) sull'intervallo attorno al migliore.
    """
    require(d_max > 0, "d_max must be positive", "d_max", d_max)
    target = _as_normals(target_normals)
    height = np.asarray(height, dtype=np.float64)
    if height.ndim == 3:
        height = height[..., 0]
    if height.shape != target.shape[:2]:
        raise ShapeError(f"height {height.shape} and normals {target.shape[:2]} differ")

    def residual(d: float) -> float:
        return rmse(height_to_normal(height, d), target)

    gx, gy = height_gradient(height, 1.0)
    if not (gx.any() or gy.any()):
        res = residual(0.0)
        logger.warning(f"⚠️ altezza piatta: displacement non identificabile (residuo {res:.4f})")
        return DisplacementFit(0.0, res, degenerate=True)

    grid = np.concatenate([[0.0], np.geomspace(d_max * 1e-4, d_max, 64)])
    values = np.array([residual(d) for d in grid])
    best = int(np.argmin(values))
    lo = grid[max(best - 1, 0)]
    hi = grid[min(best + 1, grid.size - 1)]
    result = minimize_scalar(residual, bounds=(lo, hi), method="bounded",
                             options={"xatol": 1e-9 * max(hi, 1.0)})
    factor, res = float(result.x), float(result.fun)
    if values[best] < res:
        factor, res = float(grid[best]), float(values[best])
    logger.info(f"📏 displacement factor {factor:.5f} (residuo RMSE {res:.5f})")
    return DisplacementFit(factor, res)

# ============================================================================
# METRICHE
# ============================================================================

def _same_shape(a, b) -> Tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"metric inputs differ in shape: {a.shape} vs {b.shape}")
    return a, b


def rmse(a, b) -> float:
    a, b = _same_shape(a, b)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def normal_cosine_error(a, b) -> float:
    """mean(1 − n_a·n_b) su normali unitarie."""
    a, b = _same_shape(a, b)
    return float(np.mean(1.0 - _dot(a, b)))


def ssim(a, b) -> float:
    """SSIM con finestra gaussiana 11x11 (σ=1.5), k1=0.01, k2=0.03, range dinamico 1."""
    a, b = _same_shape(a, b)
    if a.ndim == 3 and a.shape[-1] == 1:
        a, b = a[..., 0], b[..., 0]
    return float(structural_similarity(
        a, b, data_range=1.0, gaussian_weights=True, sigma=1.5, use_sample_covariance=False,
        K1=0.01, K2=0.03, channel_axis=-1 if a.ndim == 3 else None,
    ))


def evaluate_maps(pred: MaterialMaps, truth: MaterialMaps, light: Optional[LightSpec] = None,
                  displacement_factor: float = 0.0) -> Dict[str, Dict[str, float]]:
    """Tabella per mappa: rmse/ssim, errore coseno sulle normali, RMSE del rendering."""
    if pred.shape != truth.shape:
        raise ShapeError(f"material resolutions differ: {pred.shape} vs {truth.shape}")
    table = {}
    for name in ("basecolor", "height", "roughness", "metalness", "opacity"):
        a, b = getattr(pred, name), getattr(truth, name)
        table[name] = {"rmse": rmse(a, b), "ssim": ssim(a, b)}
    na, nb = pred.normal_xyz(), truth.normal_xyz()
    table["normal"] = {"rmse": rmse(na, nb), "cosine": normal_cosine_error(na, nb),
                       "ssim": ssim((na + 1.0) / 2.0, (nb + 1.0) / 2.0)}
    light = light or LightSpec.directional((0.3, 0.3, 1.0))
    ra = np.clip(render(pred, light, displacement_factor=displacement_factor), 0.0, 1.0)
    rb = np.clip(render(truth, light, displacement_factor=displacement_factor), 0.0, 1.0)
    table["render"] = {"rmse": rmse(ra, rb), "ssim": ssim(ra, rb)}
    return table

# ============================================================================
# COLORE
# ============================================================================

def to_srgb(x: np.ndarray) -> np.ndarray:
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * np.power(x, 1.0 / 2.4) - 0.055)


def from_srgb(x: np.ndarray) -> np.ndarray:
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    return np.where(x <= 0.04045, x / 12.92, np.power((x + 0.055) / 1.055, 2.4))

# End svbrdf.py
