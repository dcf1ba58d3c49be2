"""
Tiling Module
Noise rolling, patch/unpatch e campionamento patchato con rolling; diagnostica delle cuciture.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from error_handlers import ShapeError, ValidationError, require
from rng import SeedStreams, Stream
from sampler import (
    DenoiserOracle, LatentGrid, NoiseSchedule, SamplerConfig,
    assert_finite, ddim_step, step_generator, timestep_pairs, validate_grid,
)

logger = logging.getLogger(__name__)

PATCH_MODES = ("rolling", "naive", "overlap")

# ============================================================================
# TIPI
# ============================================================================

@dataclass(frozen=True)
class RollOffset:
    rx: int  # righe
    ry: int  # colonne

    def inverse(self) -> "RollOffset":
        return RollOffset(-self.rx, -self.ry)


@dataclass(frozen=True)
class PatchLayout:
    patch_size: int
    rows: int
    cols: int

    @classmethod
    def for_shape(cls, shape: Sequence[int], p: int) -> "PatchLayout":
        h, w = int(shape[0]), int(shape[1])
        require(p >= 1, "patch size must be positive", "p", p)
        if h % p or w % p:
            raise ShapeError("patch size must divide grid dimensions")
        return cls(patch_size=p, rows=h // p, cols=w // p)

    @property
    def count(self) -> int:
        return self.rows * self.cols

    def origins(self) -> List[Tuple[int, int]]:
        p = self.patch_size
        return [(r * p, c * p) for r in range(self.rows) for c in range(self.cols)]

# ============================================================================
# OPERAZIONI ELEMENTARI
# ============================================================================

def roll(z: np.ndarray, offset: Union[RollOffset, Tuple[int, int]]) -> np.ndarray:
    """Traslazione toroidale: out[(i+rx) % h, (j+ry) % w] = z[i, j]."""
    if not isinstance(offset, RollOffset):
        offset = RollOffset(*offset)
    return np.roll(z, shift=(offset.rx, offset.ry), axis=(0, 1))


def patch_grid(z: np.ndarray, p: int) -> List[np.ndarray]:
    """Patch p x p non sovrapposte, row-major, dall'angolo in alto a sinistra."""
    layout = PatchLayout.for_shape(z.shape, p)
    return [z[i:i + p, j:j + p].copy() for i, j in layout.origins()]


def unpatch_grid(patches: Sequence[np.ndarray], original_shape: Sequence[int], p: int) -> np.ndarray:
    """Inverso esatto di patch_grid."""
    layout = PatchLayout.for_shape(original_shape, p)
    if len(patches) != layout.count:
        raise ShapeError(f"expected {layout.count} patches for shape {tuple(original_shape)}, got {len(patches)}")
    out = np.empty(tuple(original_shape), dtype=np.float64)
    for k, ((i, j), patch) in enumerate(zip(layout.origins(), patches)):
        if patch.shape != (p, p) + tuple(original_shape[2:]):
            raise ShapeError(f"patch {k} has shape {patch.shape}")
        out[i:i + p, j:j + p] = patch
    return out


def draw_offset(streams: SeedStreams, stage: int, step: int, max_roll: Optional[int],
                shape: Sequence[int]) -> RollOffset:
    """Offset uniforme in [0, max_roll]^2 (estremi inclusi); None = dimensione della griglia."""
    if max_roll == 0:
        return RollOffset(0, 0)
    high = [shape[0], shape[1]] if max_roll is None else [max_roll, max_roll]
    rx, ry = streams.generator(Stream.ROLL, stage, step).integers(0, high, endpoint=True)
    return RollOffset(int(rx), int(ry))

# ============================================================================
# CAMPIONAMENTO PATCHATO
# ============================================================================

class _PatchRunner:
    """Applica denoiser + passo DDIM a batch di patch (<= max_parallel)."""

    def __init__(self, denoiser: DenoiserOracle, sched: NoiseSchedule, config: SamplerConfig,
                 streams: SeedStreams, stage: int):
        self.denoiser = denoiser
        self.sched = sched
        self.config = config
        self.streams = streams
        self.stage = stage
        self.pool = None

    def __enter__(self):
        if self.config.max_parallel_patches > 1:
            self.pool = ThreadPoolExecutor(max_workers=self.config.max_parallel_patches,
                                           thread_name_prefix="patch")
        return self

    def __exit__(self, *exc):
        if self.pool is not None:
            self.pool.shutdown(wait=True)
        return False

    def map(self, fn, n: int) -> list:
        if self.pool is None or n == 1:
            return [fn(k) for k in range(n)]
        batch = self.config.max_parallel_patches
        out = []
        for start in range(0, n, batch):
            out.extend(self.pool.map(fn, range(start, min(start + batch, n))))
        return out

    def step(self, z_patches, c_patches, t: int, t_prev: int, step: int) -> list:
        def one(k):
            eps = self.denoiser(z_patches[k], t, c_patches[k])
            rng = step_generator(self.streams, self.config.eta, self.stage, step, k)
            return ddim_step(z_patches[k], eps, t, t_prev, self.sched, self.config.eta, rng)
        return self.map(one, len(z_patches))

    def eps(self, z_patches, c_patches, t: int) -> list:
        return self.map(lambda k: self.denoiser(z_patches[k], t, c_patches[k]), len(z_patches))


def _prepare(denoiser, shape, config, sched, init, timesteps, stage):
    shape = tuple(int(s) for s in shape)
    require(len(shape) == 3, "shape must be (h, w, c)", "shape", shape)
    streams = SeedStreams(config.seed)
    ts = list(timesteps) if timesteps is not None else config.timesteps(sched.T)
    if init is None:
        z = streams.normal(shape, Stream.INIT_NOISE, stage)
    else:
        z = validate_grid(init, "init")
        if z.shape != shape:
            raise ShapeError(f"init shape {z.shape} != {shape}")
    cond = denoiser.condition_for(shape)
    return shape, streams, ts, z, cond


def rolled_patched_sample(denoiser: DenoiserOracle, shape: Tuple[int, int, int], config: SamplerConfig,
                          sched: NoiseSchedule, p: int, max_roll: Optional[int] = None, *,
                          init: Optional[LatentGrid] = None, timesteps: Optional[Sequence[int]] = None,
                          stage: int = 0, progress: bool = False) -> LatentGrid:
    """
    Diffusione patchata con noise rolling.

    Ad ogni passo: estrae (rx, ry) in [0, max_roll]^2, trasla griglia e condizione,
    applica denoiser + DDIM a ogni patch, ricompone e annulla la traslazione.

    Args:
        max_roll: None = dimensioni della griglia, 0 = patch fisse (approccio naive)
        init: griglia iniziale (default: rumore seedato dello stage)
        timesteps: sotto-sequenza da usare al posto di quella di config
        stage: indice di stage per i sotto-flussi casuali
    """
    require(max_roll is None or max_roll >= 0, "max_roll must be >= 0", "max_roll", max_roll)
    shape, streams, ts, z, cond = _prepare(denoiser, shape, config, sched, init, timesteps, stage)
    layout = PatchLayout.for_shape(shape, p)
    logger.debug(f"🧩 stage {stage}: {layout.rows}x{layout.cols} patch {p}, max_roll={max_roll}")

    with _PatchRunner(denoiser, sched, config, streams, stage) as runner:
        pairs = timestep_pairs(ts)
        for i, (t, t_prev) in enumerate(tqdm(pairs, desc=f"stage {stage}", disable=not progress, leave=False)):
            offset = draw_offset(streams, stage, i, max_roll, shape)
            z_patches = patch_grid(roll(z, offset), p)
            c_patches = patch_grid(roll(cond, offset), p) if cond is not None else [None] * layout.count
            stepped = runner.step(z_patches, c_patches, t, t_prev, i)
            z = roll(unpatch_grid(stepped, shape, p), offset.inverse())
            assert_finite(z, stage, i, t)
    return z


def _wrapped_index(origin: int, size: int, dim: int) -> np.ndarray:
    return (origin + np.arange(size)) % dim


def overlap_patched_sample(denoiser: DenoiserOracle, shape: Tuple[int, int, int], config: SamplerConfig,
                           sched: NoiseSchedule, p: int, *, init: Optional[LatentGrid] = None,
                           timesteps: Optional[Sequence[int]] = None, stage: int = 0,
                           progress: bool = False) -> LatentGrid:
    """Baseline a patch sovrapposte (stride p/2, toroidale): ε̂ mediato sulle sovrapposizioni."""
    shape, streams, ts, z, cond = _prepare(denoiser, shape, config, sched, init, timesteps, stage)
    h, w = shape[:2]
    PatchLayout.for_shape(shape, p)
    stride = max(p // 2, 1)
    origins = [(i, j) for i in range(0, h, stride) for j in range(0, w, stride)]
    index = [np.ix_(_wrapped_index(i, p, h), _wrapped_index(j, p, w)) for i, j in origins]

    with _PatchRunner(denoiser, sched, config, streams, stage) as runner:
        for step, (t, t_prev) in enumerate(tqdm(timestep_pairs(ts), desc=f"overlap {stage}",
                                                disable=not progress, leave=False)):
            z_patches = [z[ix] for ix in index]
            c_patches = [cond[ix] for ix in index] if cond is not None else [None] * len(index)
            acc = np.zeros(shape)
            count = np.zeros(shape[:2] + (1,))
            for ix, eps in zip(index, runner.eps(z_patches, c_patches, t)):
                acc[ix] += eps
                count[ix] += 1.0
            rng = step_generator(streams, config.eta, stage, step, 0)
            z = ddim_step(z, acc / count, t, t_prev, sched, config.eta, rng)
            assert_finite(z, stage, step, t)
    return z


def patched_sample(denoiser: DenoiserOracle, shape: Tuple[int, int, int], config: SamplerConfig,
                   sched: NoiseSchedule, p: int, max_roll: Optional[int] = None, *,
                   mode: str = "rolling", **kwargs) -> LatentGrid:
    """Dispatcher per le varianti di ablazione: rolling, naive, overlap."""
    if mode == "rolling":
        return rolled_patched_sample(denoiser, shape, config, sched, p, max_roll, **kwargs)
    if mode == "naive":
        return rolled_patched_sample(denoiser, shape, config, sched, p, 0, **kwargs)
    if mode == "overlap":
        return overlap_patched_sample(denoiser, shape, config, sched, p, **kwargs)
    raise ValidationError(f"unknown patch mode {mode!r}, expected one of {PATCH_MODES}")

# ============================================================================
# DIAGNOSTICA CUCITURE
# ============================================================================

def _as_hwc(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[..., None]
    if img.ndim != 3:
        raise ShapeError(f"expected a 2-D or 3-D image, got shape {img.shape}")
    return img


def _axis_pairs(img: np.ndarray, axis: int, patch: Optional[int]):
    """Differenze adiacenti lungo axis, separate in (bordo, interno)."""
    n = img.shape[axis]
    diffs = np.diff(img, axis=axis)  # coppie (k, k+1), k = 0..n-2
    wrap = np.take(img, [0], axis=axis) - np.take(img, [n - 1], axis=axis)
    if patch:
        is_boundary = (np.arange(1, n) % patch) == 0
    else:
        is_boundary = np.zeros(n - 1, dtype=bool)
    boundary = np.concatenate([wrap, np.compress(is_boundary, diffs, axis=axis)], axis=axis)
    interior = np.compress(~is_boundary, diffs, axis=axis)
    return boundary, interior


def _axes(axis: str) -> List[int]:
    # "horizontal" = differenze tra colonne adiacenti
    if axis == "both":
        return [1, 0]
    if axis == "horizontal":
        return [1]
    if axis == "vertical":
        return [0]
    raise ValidationError(f"axis must be both, horizontal or vertical, got {axis!r}")


def _energy(parts: List[np.ndarray]) -> float:
    return float(sum(np.mean(d ** 2) if d.size else 0.0 for d in parts))


def seam_energy(img, axis: str = "both", patch: Optional[int] = None) -> float:
    """
    Energia media al quadrato sulle coppie di pixel a cavallo del bordo toroidale
    (e dei bordi patch se `patch` e' dato), per asse; "both" somma i due assi.
    """
    img = _as_hwc(img)
    return _energy([_axis_pairs(img, a, patch)[0] for a in _axes(axis)])


def interior_energy(img, axis: str = "both", patch: Optional[int] = None) -> float:
    """Come seam_energy ma sulle coppie che non attraversano bordi."""
    img = _as_hwc(img)
    return _energy([_axis_pairs(img, a, patch)[1] for a in _axes(axis)])


def seam_report(img, patch: Optional[int] = None, threshold: float = 2.0, axis: str = "both") -> Dict:
    seam = seam_energy(img, axis, patch)
    interior = interior_energy(img, axis, patch)
    if interior > 0:
        ratio = seam / interior
    else:
        ratio = 0.0 if seam == 0 else float("inf")
    return {
        "seam_energy": seam,
        "interior_energy": interior,
        "ratio": ratio,
        "threshold": float(threshold),
        "passed": bool(ratio <= threshold),
    }

# End tiling.py
