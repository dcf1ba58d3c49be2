"""
Multiscale Module
Diffusione gerarchica coarse-to-fine: diffondi a bassa risoluzione, upsample + renoise, raffina.
"""

import logging
import time
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

import config as settings
from error_handlers import ShapeError, ValidationError, require
from rng import SeedStreams, Stream
from sampler import DenoiserOracle, LatentGrid, NoiseSchedule, SamplerConfig, forward_diffuse, validate_grid
from tiling import PatchLayout, patched_sample

logger = logging.getLogger(__name__)

# ============================================================================
# RICAMPIONAMENTO
# ============================================================================

def _interp_axis(z: np.ndarray, factor: int, axis: int, mode: str) -> np.ndarray:
    n = z.shape[axis]
    m = n * factor
    if mode == "wrap":
        # centri dei pixel a mezzo passo, bordo toroidale
        u = (np.arange(m) + 0.5) / factor - 0.5
        i0 = np.floor(u).astype(np.int64)
        frac = u - i0
        i1 = (i0 + 1) % n
        i0 = i0 % n
    elif mode == "aligned":
        u = np.arange(m) * ((n - 1) / (m - 1)) if n > 1 else np.zeros(m)
        i0 = np.minimum(np.floor(u).astype(np.int64), n - 1)
        i1 = np.minimum(i0 + 1, n - 1)
        frac = u - i0
    else:
        raise ValidationError(f"unknown upsampling mode {mode!r}")

    shape = [1] * z.ndim
    shape[axis] = m
    frac = frac.reshape(shape)
    out = np.take(z, i0, axis=axis)
    out *= 1.0 - frac
    hi = np.take(z, i1, axis=axis)
    hi *= frac
    out += hi
    return out


def upsample_latent(z: LatentGrid, factor: int, mode: str = "wrap") -> LatentGrid:
    """
    Upsampling bilineare per canale.

    mode="wrap": campioni a mezzo pixel su toro (conserva la media, commuta con roll);
    mode="aligned": angoli allineati.
    """
    require(int(factor) == factor and factor >= 2, "upsampling factor must be an integer >= 2", "factor", factor)
    z = np.asarray(z, dtype=np.float64)
    out = _interp_axis(z, int(factor), 0, mode)
    return _interp_axis(out, int(factor), 1, mode)


def downsample_latent(z: np.ndarray, factor: int) -> np.ndarray:
    """Media a blocchi factor x factor."""
    z = np.asarray(z, dtype=np.float64)
    if factor == 1:
        return z
    h, w = z.shape[:2]
    if h % factor or w % factor:
        raise ShapeError(f"grid {h}x{w} is not divisible by {factor}")
    return z.reshape(h // factor, factor, w // factor, factor, *z.shape[2:]).mean(axis=(1, 3))


def lowpass(z: np.ndarray, sigma: float) -> np.ndarray:
    """Filtro gaussiano spaziale toroidale (canali indipendenti)."""
    z = np.asarray(z, dtype=np.float64)
    sig = (sigma, sigma) + (0,) * (z.ndim - 2)
    return ndimage.gaussian_filter(z, sigma=sig, mode="wrap")


def renoise(z: LatentGrid, restart_strength: float, sched: NoiseSchedule,
            rng: np.random.Generator) -> Tuple[LatentGrid, int]:
    """Riporta z al timestep t_restart = round(s·(T−1)) con rumore fresco."""
    require(0.0 < restart_strength <= 1.0, "restart_strength must lie in (0, 1]",
            "restart_strength", restart_strength)
    t_restart = int(np.floor(restart_strength * (sched.T - 1) + 0.5))
    eps = rng.standard_normal(np.shape(z))
    return forward_diffuse(z, t_restart, eps, sched), t_restart

# ============================================================================
# SCALE CHAIN
# ============================================================================

@dataclass(frozen=True)
class ScaleChain:
    resolutions: Tuple[Tuple[int, int], ...]
    restart_strength: float = settings.RESTART_STRENGTH

    def __post_init__(self):
        require(len(self.resolutions) >= 1, "scale chain needs at least one resolution")
        for (h0, w0), (h1, w1) in zip(self.resolutions, self.resolutions[1:]):
            require(h1 == 2 * h0 and w1 == 2 * w0, "each scale must double the previous one",
                    "resolutions", self.resolutions)
        require(0.0 < self.restart_strength <= 1.0, "restart_strength must lie in (0, 1]",
                "restart_strength", self.restart_strength)

    @classmethod
    def build(cls, base: Sequence[int], target: Sequence[int],
              restart_strength: float = settings.RESTART_STRENGTH) -> "ScaleChain":
        bh, bw = int(base[0]), int(base[1])
        th, tw = int(target[0]), int(target[1])
        require(bh >= 1 and bw >= 1, "base resolution must be positive", "base", (bh, bw))
        if th % bh or tw % bw or th // bh != tw // bw:
            raise ValidationError(f"target {th}x{tw} is not a power-of-two multiple of base {bh}x{bw}")
        ratio = th // bh
        if ratio & (ratio - 1):
            raise ValidationError(f"target/base ratio {ratio} is not a power of two")
        k = ratio.bit_length() - 1
        return cls(tuple((bh << i, bw << i) for i in range(k + 1)), restart_strength)

    @property
    def stages(self) -> int:
        return len(self.resolutions)

    def describe(self, pixel_factor: int = settings.LATENT_FACTOR) -> str:
        """es. 512→1024→2048→4096 (pixel)."""
        parts = []
        for h, w in self.resolutions:
            parts.append(str(h * pixel_factor) if h == w else f"{h * pixel_factor}x{w * pixel_factor}")
        return "→".join(parts)

# ============================================================================
# CAMPIONAMENTO MULTISCALA
# ============================================================================

def multiscale_stages(denoiser: DenoiserOracle, target_shape: Tuple[int, int, int],
                      base_shape: Sequence[int], config: SamplerConfig, sched: NoiseSchedule,
                      p: int, max_roll: Optional[int] = None,
                      restart_strength: float = None, *, patch_mode: str = "rolling",
                      upsample_mode: str = "wrap", progress: bool = False,
                      run_logger=None) -> Iterator[Tuple[int, LatentGrid]]:
    """Genera (stage, griglia) per ogni stage della catena, dal piu' grossolano."""
    if restart_strength is None:
        restart_strength = settings.RESTART_STRENGTH
    target_shape = tuple(int(s) for s in target_shape)
    require(len(target_shape) == 3, "target_shape must be (h, w, c)", "target_shape", target_shape)
    chain = ScaleChain.build(base_shape[:2], target_shape[:2], restart_strength)
    channels = target_shape[2]
    streams = SeedStreams(config.seed)
    base_ts = config.timesteps(sched.T)
    logger.info(f"📐 scale chain {chain.describe()} ({chain.stages} stage)")

    z = None
    for stage, (h, w) in enumerate(chain.resolutions):
        shape = (h, w, channels)
        p_eff = min(p, h, w)
        layout = PatchLayout.for_shape(shape, p_eff)
        started = time.perf_counter()
        if stage == 0:
            z = patched_sample(denoiser, shape, config, sched, p_eff, max_roll, mode=patch_mode,
                               stage=0, progress=progress)
        else:
            up = upsample_latent(z, 2, upsample_mode)
            z_init, t_restart = renoise(up, restart_strength, sched, streams.generator(Stream.RENOISE, stage))
            ts = [t_restart] + [t for t in base_ts if t < t_restart]
            logger.debug(f"🔁 stage {stage}: restart at t={t_restart}, {len(ts)} steps")
            z = patched_sample(denoiser, shape, config, sched, p_eff, max_roll, mode=patch_mode,
                               init=z_init, timesteps=ts, stage=stage, progress=progress)
        z = validate_grid(z, f"stage {stage} output")
        if run_logger is not None:
            run_logger.log_stage("diffusion", stage, shape, time.perf_counter() - started,
                                 patches=min(layout.count, config.max_parallel_patches),
                                 patch_total=layout.count)
        yield stage, z


def multiscale_sample(denoiser: DenoiserOracle, target_shape: Tuple[int, int, int],
                      base_shape: Sequence[int], config: SamplerConfig, sched: NoiseSchedule,
                      p: int, max_roll: Optional[int] = None,
                      restart_strength: float = None, **kwargs) -> LatentGrid:
    """Esegue tutta la catena e restituisce la griglia finale."""
    z = None
    for _, z in multiscale_stages(denoiser, target_shape, base_shape, config, sched, p, max_roll,
                                  restart_strength, **kwargs):
        pass
    return z

# End multiscale.py
