"""
Inpaint Module
Maschere (bordo per la tileabilita', aree casuali) e packing della condizione RGB + maschera.
"""

import logging
import math
from typing import Optional, Tuple

import numpy as np

import config as settings
from error_handlers import ShapeError, ValidationError, require
from oracles import InpaintAttractorDenoiser
from sampler import DenoiserOracle, LatentGrid, NoiseSchedule, SamplerConfig
from tiling import rolled_patched_sample

logger = logging.getLogger(__name__)

# 1 = regione da rigenerare; valori esattamente 0.0 / 1.0
BinaryMask = np.ndarray

# ============================================================================
# MASCHERE
# ============================================================================

def border_width(dim: int, frac: float) -> int:
    return int(math.floor(frac * dim + 0.5))


def border_mask(h: int, w: int, frac: float = settings.BORDER_FRAC) -> BinaryMask:
    """Anello di bordo di larghezza round(frac·dim) per lato."""
    require(h >= 1 and w >= 1, "mask dimensions must be positive", "h/w", (h, w))
    require(0.0 < frac < 0.5, "border fraction must lie in (0, 0.5)", "frac", frac)
    bh, bw = border_width(h, frac), border_width(w, frac)
    if bh == 0 or bw == 0:
        raise ValidationError("empty border")
    mask = np.ones((h, w))
    mask[bh:h - bh, bw:w - bw] = 0.0
    return mask


def random_area_mask(h: int, w: int, rng: np.random.Generator,
                     max_frac: float = settings.MASK_MAX_FRAC) -> BinaryMask:
    """
    Rettangolo con area uniforme in [0, max_frac]·h·w, aspect ratio log-uniforme
    in [1/√2, √2], posizione uniforme.
    """
    require(0.0 <= max_frac <= 1.0, "max_frac must lie in [0, 1]", "max_frac", max_frac)
    area = rng.uniform(0.0, max_frac) * h * w
    aspect = math.exp(rng.uniform(-0.5 * math.log(2.0), 0.5 * math.log(2.0)))
    rh = min(h, int(math.floor(math.sqrt(area * aspect) + 0.5)))
    rw = min(w, int(math.floor(math.sqrt(area / aspect) + 0.5)))
    mask = np.zeros((h, w))
    if rh == 0 or rw == 0:
        return mask
    y0 = int(rng.integers(0, h - rh, endpoint=True))
    x0 = int(rng.integers(0, w - rw, endpoint=True))
    mask[y0:y0 + rh, x0:x0 + rw] = 1.0
    return mask


def latent_mask(mask: BinaryMask, factor: int = settings.LATENT_FACTOR) -> BinaryMask:
    """Maschera pixel → latente: una cella e' mascherata se lo e' almeno un suo pixel."""
    mask = np.asarray(mask, dtype=np.float64)
    h, w = mask.shape
    if h % factor or w % factor:
        raise ShapeError(f"mask {h}x{w} is not divisible by {factor}")
    return mask.reshape(h // factor, factor, w // factor, factor).max(axis=(1, 3))

# ============================================================================
# CONDIZIONE
# ============================================================================

def pack_condition(rgb: np.ndarray, mask: BinaryMask) -> np.ndarray:
    """[R, G, B, mask] con i pixel mascherati azzerati."""
    rgb = np.asarray(rgb, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[-1] != 3:
        raise ShapeError(f"rgb must be H x W x 3, got {rgb.shape}")
    if mask.shape != rgb.shape[:2]:
        raise ShapeError(f"mask shape {mask.shape} != image shape {rgb.shape[:2]}")
    require(bool(np.all((mask == 0) | (mask == 1))), "mask values must be 0 or 1")
    require(bool(np.all((rgb >= 0) & (rgb <= 1))), "rgb values must lie in [0, 1]")
    return np.concatenate([rgb * (1.0 - mask)[..., None], mask[..., None]], axis=-1)


def unpack_condition(packed: np.ndarray) -> Tuple[np.ndarray, BinaryMask]:
    packed = np.asarray(packed, dtype=np.float64)
    if packed.ndim != 3 or packed.shape[-1] != 4:
        raise ShapeError(f"packed condition must be H x W x 4, got {packed.shape}")
    return packed[..., :3].copy(), packed[..., 3].copy()

# ============================================================================
# INPAINTING ORACOLO
# ============================================================================

def inpaint_sample(prior: DenoiserOracle, known: LatentGrid, mask: BinaryMask, config: SamplerConfig,
                   sched: NoiseSchedule, p: int, max_roll: Optional[int] = None, *,
                   progress: bool = False) -> LatentGrid:
    """
    Rigenera la regione mascherata con il prior, riproducendo il resto di `known`.

    Con il rolling l'anello di bordo viene riempito attraverso il bordo toroidale,
    quindi il risultato e' tileabile.
    """
    known = np.asarray(known, dtype=np.float64)
    denoiser = InpaintAttractorDenoiser(known, mask, prior, sched)
    logger.info(f"🎭 inpainting {known.shape[:2]}: {int(np.sum(mask))} celle mascherate")
    return rolled_patched_sample(denoiser, known.shape, config, sched, p, max_roll, progress=progress)

# End inpaint.py
