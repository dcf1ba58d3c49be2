"""
Sampler Module
Noise schedule, diffusione in avanti e campionamento DDIM sul contratto denoiser.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

import config
from error_handlers import ContractError, NumericalError, ShapeError, ValidationError, require
from rng import SeedStreams, Stream

logger = logging.getLogger(__name__)

# h x w x c, float64
LatentGrid = np.ndarray

# ============================================================================
# GRIGLIE
# ============================================================================

def validate_grid(z, name: str = "z") -> LatentGrid:
    """Converte in float64 e verifica forma (h, w, c) e finitezza."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 3 or min(z.shape) < 1:
        raise ShapeError(f"{name} must be an h x w x c grid, got shape {z.shape}")
    if not np.isfinite(z).all():
        raise NumericalError(f"{name} contains non-finite values")
    return z


def _check_same_shape(a: np.ndarray, b: np.ndarray, what: str):
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shape mismatch {a.shape} vs {b.shape}")

# ============================================================================
# NOISE SCHEDULE
# ============================================================================

@dataclass(frozen=True)
class NoiseSchedule:
    betas: np.ndarray
    alphas: np.ndarray = field(repr=False)
    alpha_bars: np.ndarray = field(repr=False)

    @classmethod
    def from_betas(cls, betas: Sequence[float]) -> "NoiseSchedule":
        betas = np.asarray(betas, dtype=np.float64)
        require(betas.ndim == 1 and betas.size >= 1, "betas must be a non-empty 1-D sequence")
        require(bool(np.all((betas > 0) & (betas < 1))), "betas must lie in (0, 1)", "betas", betas)
        require(bool(np.all(np.diff(betas) >= 0)), "betas must be non-decreasing", "betas", betas)
        alphas = 1.0 - betas
        alpha_bars = np.cumprod(alphas)
        for arr in (betas, alphas, alpha_bars):
            arr.setflags(write=False)
        return cls(betas=betas, alphas=alphas, alpha_bars=alpha_bars)

    @property
    def T(self) -> int:
        return int(self.betas.size)

    def alpha_bar(self, t: int) -> float:
        """ᾱ_t; t = -1 indica l'output finale (ᾱ = 1)."""
        t = int(t)
        if t == -1:
            return 1.0
        if not 0 <= t < self.T:
            raise ValidationError(f"timestep {t} outside [0, {self.T})")
        return float(self.alpha_bars[t])


def make_linear_schedule(T: int = None, beta_start: float = None, beta_end: float = None) -> NoiseSchedule:
    """Betas lineari da beta_start a beta_end su T passi."""
    T = config.SCHEDULE_T if T is None else int(T)
    beta_start = config.BETA_START if beta_start is None else float(beta_start)
    beta_end = config.BETA_END if beta_end is None else float(beta_end)

    require(T >= 2, "schedule needs T >= 2", "T", T)
    require(0 < beta_start <= beta_end < 1, "betas must satisfy 0 < beta_start <= beta_end < 1",
            "beta_start/beta_end", (beta_start, beta_end))
    return NoiseSchedule.from_betas(np.linspace(beta_start, beta_end, T, dtype=np.float64))

# ============================================================================
# CONFIG SAMPLER
# ============================================================================

@dataclass(frozen=True)
class SamplerConfig:
    steps: int = config.DEFAULT_STEPS
    eta: float = config.DEFAULT_ETA
    seed: int = config.DEFAULT_SEED
    timestep_subsequence: Optional[Tuple[int, ...]] = None
    max_parallel_patches: int = config.MAX_PARALLEL_PATCHES

    def __post_init__(self):
        require(self.steps >= 1, "steps must be >= 1", "steps", self.steps)
        require(0.0 <= self.eta <= 1.0, "eta must lie in [0, 1]", "eta", self.eta)
        require(self.max_parallel_patches >= 1, "max_parallel_patches must be >= 1",
                "max_parallel_patches", self.max_parallel_patches)
        if self.timestep_subsequence is not None:
            object.__setattr__(self, "timestep_subsequence",
                               tuple(int(t) for t in self.timestep_subsequence))

    def timesteps(self, T: int) -> List[int]:
        """Sotto-sequenza strettamente decrescente in [0, T), il maggiore per primo."""
        if self.timestep_subsequence is not None:
            ts = list(self.timestep_subsequence)
            require(len(ts) == self.steps, "timestep_subsequence length must equal steps",
                    "timestep_subsequence", ts)
            require(all(0 <= t < T for t in ts), f"timesteps must lie in [0, {T})",
                    "timestep_subsequence", ts)
            require(all(a > b for a, b in zip(ts, ts[1:])), "timesteps must be strictly decreasing",
                    "timestep_subsequence", ts)
            return ts
        stride = T // self.steps
        require(stride >= 1, f"cannot take {self.steps} steps from a {T}-step schedule", "steps", self.steps)
        return list(range(0, stride * self.steps, stride))[::-1]


def timestep_pairs(timesteps: Sequence[int]) -> List[Tuple[int, int]]:
    """[(t, t_prev)], l'ultimo t_prev e' -1."""
    ts = list(timesteps)
    return list(zip(ts, ts[1:] + [-1]))

# ============================================================================
# DENOISER CONTRACT
# ============================================================================

class DenoiserOracle(ABC):
    """
    Contratto: (z_t, t, cond) -> ε̂ della stessa forma di z_t.

    Il denoiser vede solo il contenuto della patch (e della condizione
    allineata), mai coordinate globali.
    """

    name = "denoiser"

    def condition_for(self, shape: Tuple[int, ...]) -> Optional[np.ndarray]:
        """Griglia di condizione per una griglia latente di questa forma."""
        return None

    @abstractmethod
    def predict_eps(self, z_t: LatentGrid, t: int, cond: Optional[np.ndarray] = None) -> LatentGrid:
        ...

    def __call__(self, z_t: LatentGrid, t: int, cond: Optional[np.ndarray] = None) -> LatentGrid:
        eps = np.asarray(self.predict_eps(z_t, t, cond), dtype=np.float64)
        if eps.shape != z_t.shape:
            raise ContractError(f"{self.name}: output shape {eps.shape} != input shape {z_t.shape}")
        if not np.isfinite(eps).all():
            raise NumericalError(f"{self.name}: non-finite prediction at t={t}")
        return eps

# ============================================================================
# OPERAZIONI
# ============================================================================

def forward_diffuse(z0: LatentGrid, t: int, eps: LatentGrid, sched: NoiseSchedule) -> LatentGrid:
    """q(z_t | z_0): √ᾱ_t·z0 + √(1−ᾱ_t)·ε."""
    z0 = np.asarray(z0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    _check_same_shape(z0, eps, "forward_diffuse")
    require(0 <= int(t) < sched.T, f"timestep must lie in [0, {sched.T})", "t", t)
    ab = sched.alpha_bar(t)
    return np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * eps


def ddim_step(z_t: LatentGrid, eps_hat: LatentGrid, t: int, t_prev: int, sched: NoiseSchedule,
              eta: float = 0.0, rng: Optional[np.random.Generator] = None) -> LatentGrid:
    """
    Un passo DDIM da t a t_prev (t_prev = -1 restituisce x0 predetto).

    Con eta > 0 aggiunge rumore σ_t estratto da `rng`.
    """
    z_t = np.asarray(z_t, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    _check_same_shape(z_t, eps_hat, "ddim_step")
    if not (np.isfinite(z_t).all() and np.isfinite(eps_hat).all()):
        raise NumericalError(f"ddim_step: non-finite input at t={t}")
    if t_prev >= t or t_prev < -1:
        raise ValidationError(f"ddim_step needs t > t_prev >= -1, got t={t}, t_prev={t_prev}")
    require(0.0 <= eta <= 1.0, "eta must lie in [0, 1]", "eta", eta)

    ab_t = sched.alpha_bar(t)
    ab_prev = sched.alpha_bar(t_prev)
    x0_pred = (z_t - np.sqrt(1.0 - ab_t) * eps_hat) / np.sqrt(ab_t)
    if t_prev == -1:
        return x0_pred
    if eta == 0.0:
        return np.sqrt(ab_prev) * x0_pred + np.sqrt(1.0 - ab_prev) * eps_hat

    if rng is None:
        raise ValidationError("ddim_step with eta > 0 needs a generator")
    sigma = eta * np.sqrt((1.0 - ab_prev) / (1.0 - ab_t)) * np.sqrt(1.0 - ab_t / ab_prev)
    direction = np.sqrt(max(1.0 - ab_prev - sigma ** 2, 0.0)) * eps_hat
    return np.sqrt(ab_prev) * x0_pred + direction + sigma * rng.standard_normal(z_t.shape)


def step_generator(streams: SeedStreams, eta: float, stage: int, step: int,
                   patch: int) -> Optional[np.random.Generator]:
    """Sotto-flusso del rumore di passo; None con eta = 0."""
    if eta == 0.0:
        return None
    return streams.generator(Stream.STEP_NOISE, stage, step, patch)


def assert_finite(z: np.ndarray, stage: int, step: int, t: int):
    if not np.isfinite(z).all():
        raise NumericalError(f"non-finite latent after stage {stage} step {step} (t={t})")


def ddim_sample(denoiser: DenoiserOracle, shape: Tuple[int, int, int], config: SamplerConfig,
                sched: NoiseSchedule, *, progress: bool = False) -> LatentGrid:
    """Loop DDIM non patchato, dal rumore seedato fino a t = -1."""
    shape = tuple(int(s) for s in shape)
    require(len(shape) == 3 and min(shape) >= 1, "shape must be (h, w, c)", "shape", shape)
    streams = SeedStreams(config.seed)
    timesteps = config.timesteps(sched.T)

    z = streams.normal(shape, Stream.INIT_NOISE, 0)
    cond = denoiser.condition_for(shape)
    logger.debug(f"🎲 ddim_sample seed={config.seed} steps={len(timesteps)} shape={shape}")

    pairs = timestep_pairs(timesteps)
    for i, (t, t_prev) in enumerate(tqdm(pairs, desc="ddim", disable=not progress, leave=False)):
        eps = denoiser(z, t, cond)
        z = ddim_step(z, eps, t, t_prev, sched, config.eta, step_generator(streams, config.eta, 0, i, 0))
        assert_finite(z, 0, i, t)
    return z

# End sampler.py
