"""
Decode Module
Decodifica latente → pixel a patch, con mean matching su un riferimento a bassa
risoluzione e blending a pesi gaussiani troncati.
"""

import logging
import math
import time
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

import config
from error_handlers import ContractError, NumericalError, ShapeError, ValidationError, require
from multiscale import downsample_latent, upsample_latent
from rng import SeedStreams, Stream
from sampler import LatentGrid, validate_grid
from svbrdf import MaterialMaps

logger = logging.getLogger(__name__)

DECODE_MODES = ("mean_match", "overlap", "naive")

# ============================================================================
# DECODER CONTRACT
# ============================================================================

class LatentDecoder(ABC):
    """
    Contratto: griglia h x w x c_in → mappe 8h x 8w x 9, funzione pura.

    `halo` = celle di contesto che servono attorno a una patch perche' la sua
    decodifica coincida con quella globale.
    """

    factor = config.LATENT_FACTOR
    out_channels = config.MAP_CHANNELS
    halo = 0

    @abstractmethod
    def decode(self, z: LatentGrid) -> np.ndarray:
        ...

    def __call__(self, z: LatentGrid) -> np.ndarray:
        out = np.asarray(self.decode(z), dtype=np.float64)
        expected = (z.shape[0] * self.factor, z.shape[1] * self.factor, self.out_channels)
        if out.shape != expected:
            raise ContractError(f"decoder returned {out.shape}, expected {expected}")
        if not np.isfinite(out).all():
            raise NumericalError("decoder returned non-finite values")
        return out


class LinearMockDecoder(LatentDecoder):
    """Combinazione lineare fissa dei canali latenti + upsampling 8x (box o bilineare)."""

    def __init__(self, seed: int, in_channels: int = config.LATENT_CHANNELS,
                 upsample: str = "bilinear", halo: Optional[int] = None):
        require(upsample in ("box", "bilinear"), "upsample must be box or bilinear", "upsample", upsample)
        rng = SeedStreams(seed).generator(Stream.DECODER)
        self.in_channels = int(in_channels)
        self.mix = rng.normal(0.0, 0.25 / math.sqrt(self.in_channels), size=(self.in_channels, self.out_channels))
        self.upsample = upsample
        self.halo = (1 if upsample == "bilinear" else 0) if halo is None else int(halo)

    def decode(self, z):
        if z.shape[-1] != self.in_channels:
            raise ShapeError(f"decoder expects {self.in_channels} latent channels, got {z.shape[-1]}")
        mixed = np.tensordot(z, self.mix, axes=([2], [0]))
        if self.upsample == "box":
            return np.repeat(np.repeat(mixed, self.factor, axis=0), self.factor, axis=1)
        return upsample_latent(mixed, self.factor, mode="wrap")


def linear_mock_decoder(seed: int, in_channels: int = config.LATENT_CHANNELS,
                        upsample: str = "bilinear") -> LinearMockDecoder:
    return LinearMockDecoder(seed, in_channels=in_channels, upsample=upsample)

# ============================================================================
# BLEND KERNEL
# ============================================================================

@dataclass(frozen=True)
class BlendKernel:
    patch_px: int
    profile: np.ndarray  # 1-D, i pesi 2-D sono outer(profile, profile)

    @property
    def weights(self) -> np.ndarray:
        return np.outer(self.profile, self.profile)


def gaussian_weights(patch_px: int, sigma_frac: float = config.DECODE_SIGMA_FRAC) -> BlendKernel:
    """Gaussiana separabile σ = sigma_frac·patch_px, traslata a 0 sul bordo."""
    require(patch_px >= 4, "patch_px must be >= 4", "patch_px", patch_px)
    require(sigma_frac > 0, "sigma_frac must be positive", "sigma_frac", sigma_frac)
    x = np.arange(patch_px) - (patch_px - 1) / 2.0
    g = np.exp(-0.5 * (x / (sigma_frac * patch_px)) ** 2)
    g = g - g[0]
    g[0] = g[-1] = 0.0
    g.setflags(write=False)
    return BlendKernel(patch_px=int(patch_px), profile=g)


def blend_normalizer(dim_px: int, origins_px: Sequence[int], profile: np.ndarray) -> np.ndarray:
    """Somma toroidale dei profili 1-D per asse; il normalizzatore 2-D e' il prodotto esterno."""
    total = np.zeros(dim_px)
    size = profile.size
    for o in origins_px:
        idx = (o + np.arange(size)) % dim_px
        np.add.at(total, idx, profile)
    return total

# ============================================================================
# MEAN MATCHING
# ============================================================================

def _channel_shift(patch: np.ndarray, ref: np.ndarray) -> np.ndarray:
    if patch.shape[-1] != ref.shape[-1]:
        raise ShapeError(f"channel mismatch: {patch.shape[-1]} vs {ref.shape[-1]}")
    return ref.mean(axis=(0, 1)) - patch.mean(axis=(0, 1))


def mean_match(patch: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Shift additivo per canale: media(out) = media(ref), varianza invariata.

    `ref` puo' essere la regione a bassa risoluzione: l'upsampling a blocchi
    non cambia la media.
    """
    shift = _channel_shift(patch, ref)
    if not shift.any():
        return patch.copy()
    return patch + shift

# ============================================================================
# PATCHED DECODE
# ============================================================================

def _axis_origins(dim: int, patch: int, stride: int, align: int) -> List[int]:
    """Origini toroidali equispaziate (n = ceil(dim/stride)), allineate ad `align`."""
    if dim <= patch:
        return [0]
    n = -(-dim // stride)
    cells = dim // align
    return sorted({align * int(math.floor(k * cells / n + 0.5)) % dim for k in range(n)})


def _wrapped_slices(origin: int, size: int, dim: int) -> List[Tuple[slice, slice]]:
    """(destinazione, sorgente) contigue per un intervallo toroidale."""
    first = min(size, dim - origin)
    parts = [(slice(origin, origin + first), slice(0, first))]
    if first < size:
        parts.append((slice(0, size - first), slice(first, size)))
    return parts


def _crop(px: np.ndarray, m: int) -> np.ndarray:
    if not m:
        return px
    return px[m:px.shape[0] - m, m:px.shape[1] - m]


def _reference_factor(h: int, w: int, patch: int) -> int:
    f = 1
    while h // f > patch or w // f > patch:
        f *= 2
    return f


@dataclass(frozen=True)
class _Axis:
    dim: int        # celle latenti
    size: int       # celle latenti per patch
    origins: Tuple[int, ...]
    profile: np.ndarray  # pesi pixel


def _plan_axis(dim: int, patch_latent: int, overlap_frac: float, align: int, factor: int,
               sigma_frac: float, mode: str) -> _Axis:
    if dim <= patch_latent:
        return _Axis(dim, dim, (0,), np.ones(dim * factor))
    if mode == "naive":
        if dim % patch_latent:
            raise ShapeError("patch size must divide grid dimensions")
        origins = tuple(range(0, dim, patch_latent))
        return _Axis(dim, patch_latent, origins, np.ones(patch_latent * factor))
    stride = (int(patch_latent * (1.0 - overlap_frac)) // align) * align
    if stride < 1 or stride >= patch_latent or patch_latent % align:
        raise ValidationError(f"patch of {patch_latent} cells is too small to decode a {dim}-cell axis "
                              f"with reference alignment {align}")
    origins = tuple(_axis_origins(dim, patch_latent, stride, align))
    return _Axis(dim, patch_latent, origins, gaussian_weights(patch_latent * factor, sigma_frac).profile)


def patched_decode_stack(decoder: LatentDecoder, z: LatentGrid, patch_latent: int = config.DECODE_PATCH,
                         overlap_frac: float = config.DECODE_OVERLAP, *,
                         sigma_frac: float = config.DECODE_SIGMA_FRAC, mode: str = "mean_match",
                         max_parallel: int = config.MAX_PARALLEL_PATCHES,
                         run_logger=None) -> np.ndarray:
    """
    Decodifica a patch sovrapposte, restituisce lo stack 8h x 8w x 9 grezzo.

    1. riferimento: z ridotto (media a blocchi) decodificato in un solo passo
    2. patch latenti sovrapposte (stride = patch·(1−overlap)), con halo toroidale
    3. mean matching: ogni patch riceve lo shift fra la regione del riferimento e
       la propria finestra decodificata alla scala del riferimento
    4. blending con pesi gaussiani troncati normalizzati

    Args:
        mode: "mean_match" (completo), "overlap" (solo blending), "naive" (patch affiancate)
    """
    z = validate_grid(z)
    require(mode in DECODE_MODES, f"decode mode must be one of {DECODE_MODES}", "mode", mode)
    require(0.0 < overlap_frac <= 0.5, "overlap_frac must lie in (0, 0.5]", "overlap_frac", overlap_frac)
    require(patch_latent >= 1, "patch_latent must be positive", "patch_latent", patch_latent)
    require(max_parallel >= 1, "max_parallel must be >= 1", "max_parallel", max_parallel)
    h, w = z.shape[:2]
    fac = decoder.factor
    started = time.perf_counter()

    if h <= patch_latent and w <= patch_latent:
        out = decoder(z)
        if run_logger is not None:
            run_logger.log_stage("decode", 0, out.shape, time.perf_counter() - started, patches=1)
        return out

    f = _reference_factor(h, w, patch_latent)
    if h % f or w % f:
        raise ShapeError(f"latent {h}x{w} is not divisible by the reference factor {f}")
    ay = _plan_axis(h, patch_latent, overlap_frac, f, fac, sigma_frac, mode)
    ax = _plan_axis(w, patch_latent, overlap_frac, f, fac, sigma_frac, mode)

    ref = decoder(downsample_latent(z, f)) if mode == "mean_match" else None
    # con il riferimento l'halo va in blocchi interi, cosi' la finestra si riduce di f
    pad = decoder.halo * (f if ref is not None else 1)
    out = np.zeros((h * fac, w * fac, decoder.out_channels))
    jobs = [(oy, ox) for oy in ay.origins for ox in ax.origins]
    logger.info(f"🧩 patched decode {h}x{w} → {len(jobs)} patch ({mode}, ref factor {f})")

    def latent_window(origin: int, axis: _Axis) -> np.ndarray:
        return np.arange(origin - pad, origin + axis.size + pad) % axis.dim

    def ref_window(origin: int, axis: _Axis) -> np.ndarray:
        n = axis.size * fac // f
        return (origin * fac // f + np.arange(n)) % (axis.dim * fac // f)

    def decode_one(job) -> np.ndarray:
        oy, ox = job
        window = z[np.ix_(latent_window(oy, ay), latent_window(ox, ax))]
        px = _crop(decoder(window), pad * fac)
        if ref is not None:
            # la stessa finestra a scala del riferimento: lo scarto dal riferimento
            # globale e' la deriva dovuta al contesto mancante
            low = _crop(decoder(downsample_latent(window, f)), pad * fac // f)
            px += _channel_shift(low, ref[np.ix_(ref_window(oy, ay), ref_window(ox, ax))])
        return px

    def accumulate(job, px: np.ndarray):
        oy, ox = job
        px *= ay.profile[:, None, None]
        px *= ax.profile[None, :, None]
        for dy, sy in _wrapped_slices(oy * fac, px.shape[0], h * fac):
            for dx, sx in _wrapped_slices(ox * fac, px.shape[1], w * fac):
                out[dy, dx] += px[sy, sx]

    if max_parallel == 1:
        for job in jobs:
            accumulate(job, decode_one(job))
    else:
        with ThreadPoolExecutor(max_workers=max_parallel, thread_name_prefix="decode") as pool:
            for start in range(0, len(jobs), max_parallel):
                batch = jobs[start:start + max_parallel]
                # accumulo in ordine fisso
                for job, px in zip(batch, pool.map(decode_one, batch)):
                    accumulate(job, px)

    ny = blend_normalizer(h * fac, [o * fac for o in ay.origins], ay.profile)
    nx = blend_normalizer(w * fac, [o * fac for o in ax.origins], ax.profile)
    if not (ny > 0).all() or not (nx > 0).all():
        raise NumericalError("blend weights leave uncovered pixels")
    out /= ny[:, None, None]
    out /= nx[None, :, None]

    if run_logger is not None:
        run_logger.log_stage("decode", 0, out.shape, time.perf_counter() - started,
                             patches=min(len(jobs), max_parallel), patch_total=len(jobs), ref_factor=f)
    return out


def patched_decode(decoder: LatentDecoder, z: LatentGrid, patch_latent: int = config.DECODE_PATCH,
                   overlap_frac: float = config.DECODE_OVERLAP, **kwargs):
    """Come patched_decode_stack, ma restituisce MaterialMaps (con clamp dei range)."""
    return MaterialMaps.from_stack(patched_decode_stack(decoder, z, patch_latent, overlap_frac, **kwargs))

# End decode.py
