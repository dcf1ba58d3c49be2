"""
Oracles Module
Denoiser analitici al posto della rete addestrata: ogni proprieta' della
pipeline diventa verificabile in forma chiusa.
"""

import logging
import math
from typing import Optional, Tuple

import numpy as np

from error_handlers import ContractError, NumericalError, ShapeError, require
from multiscale import downsample_latent
from sampler import DenoiserOracle, LatentGrid, NoiseSchedule, validate_grid

logger = logging.getLogger(__name__)

# ============================================================================
# FORMULE
# ============================================================================

def gaussian_eps(z_t: LatentGrid, t: int, mu, sigma_data: float, sched: NoiseSchedule) -> LatentGrid:
    """ε̂ ottimo a posteriori per dati ~ Normal(μ, σ_data²·I); μ scalare o per canale."""
    require(sigma_data > 0, "sigma_data must be positive", "sigma_data", sigma_data)
    z_t = np.asarray(z_t, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    if mu.ndim > 0 and mu.shape[-1] != z_t.shape[-1]:
        raise ShapeError(f"mu has {mu.shape[-1]} channels, grid has {z_t.shape[-1]}")
    ab = sched.alpha_bar(t)
    return math.sqrt(1.0 - ab) * (z_t - math.sqrt(ab) * mu) / (ab * sigma_data ** 2 + (1.0 - ab))


def attractor_eps(z_t: LatentGrid, t: int, target: LatentGrid, sched: NoiseSchedule) -> LatentGrid:
    """(z_t − √ᾱ_t·x*) / √(1−ᾱ_t): il rumore che riporta esattamente a x*."""
    z_t = np.asarray(z_t, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if z_t.shape != target.shape:
        raise ShapeError(f"attractor target shape {target.shape} != grid shape {z_t.shape}")
    ab = sched.alpha_bar(t)
    if ab >= 1.0:
        raise NumericalError("attractor noise is undefined at alpha_bar = 1")
    return (z_t - math.sqrt(ab) * target) / math.sqrt(1.0 - ab)


def binomial_kernel(radius: int) -> np.ndarray:
    """Kernel binomiale normalizzato di lunghezza 2r+1."""
    w = np.array([math.comb(2 * radius, k) for k in range(2 * radius + 1)], dtype=np.float64)
    return w / w.sum()


def toroidal_blur(x: np.ndarray, radius: int) -> np.ndarray:
    """Blur separabile con bordo toroidale tramite np.roll (commuta esattamente con roll)."""
    if radius == 0:
        return x.copy()
    weights = binomial_kernel(radius)
    out = x
    for axis in (0, 1):
        acc = np.zeros_like(out)
        for k, wk in enumerate(weights):
            acc += wk * np.roll(out, k - radius, axis=axis)
        out = acc
    return out


def _rescale_condition(cond: np.ndarray, shape: Tuple[int, ...], reduce: str = "mean") -> np.ndarray:
    """Riporta una condizione alla risoluzione di una griglia (stadi multiscala)."""
    h, w = shape[0], shape[1]
    H, W = cond.shape[:2]
    if (H, W) == (h, w):
        return cond
    if H % h or W % w or H // h != W // w:
        raise ShapeError(f"cannot bring a {H}x{W} condition to a {h}x{w} grid")
    f = H // h
    if reduce == "max":
        return cond.reshape(h, f, w, f, *cond.shape[2:]).max(axis=(1, 3))
    return downsample_latent(cond, f)

# ============================================================================
# DENOISER
# ============================================================================

class GaussianScoreDenoiser(DenoiserOracle):
    name = "gaussian"

    def __init__(self, sched: NoiseSchedule, mu=0.0, sigma_data: float = 1.0):
        require(sigma_data > 0, "sigma_data must be positive", "sigma_data", sigma_data)
        self.sched = sched
        self.mu = mu
        self.sigma_data = float(sigma_data)

    def predict_eps(self, z_t, t, cond=None):
        return gaussian_eps(z_t, t, self.mu, self.sigma_data, self.sched)


class AttractorDenoiser(DenoiserOracle):
    """Limite σ_data→0: il target arriva come condizione, cosi' segue roll e patch."""

    name = "attractor"

    def __init__(self, target: LatentGrid, sched: NoiseSchedule):
        self.target = validate_grid(target, "attractor target")
        self.sched = sched

    def condition_for(self, shape):
        if tuple(shape[2:]) != self.target.shape[2:]:
            raise ShapeError(f"grid has {shape[2:]} channels, target has {self.target.shape[2:]}")
        return _rescale_condition(self.target, shape)

    def predict_eps(self, z_t, t, cond=None):
        if cond is None:
            raise ContractError("attractor denoiser needs its target condition")
        return attractor_eps(z_t, t, cond, self.sched)


class SmoothingDenoiser(DenoiserOracle):
    """
    Texture stazionaria: x0 = blend(x0_naive, blur toroidale di raggio r, λ),
    con x0_naive = √ᾱ_t·z_t (posteriore del prior gaussiano unitario).

    Vede solo la patch: il blur e' toroidale sulla patch stessa.
    """

    name = "smoothing"

    def __init__(self, sched: NoiseSchedule, radius: int = 2, strength: float = 1.0):
        require(radius >= 0, "radius must be >= 0", "radius", radius)
        require(0.0 < strength <= 1.0, "strength must lie in (0, 1]", "strength", strength)
        self.sched = sched
        self.radius = int(radius)
        self.strength = float(strength)

    def predict_eps(self, z_t, t, cond=None):
        ab = self.sched.alpha_bar(t)
        if ab >= 1.0:
            raise NumericalError("smoothing denoiser is undefined at alpha_bar = 1")
        x0_naive = math.sqrt(ab) * z_t
        x0 = (1.0 - self.strength) * x0_naive + self.strength * toroidal_blur(x0_naive, self.radius)
        return (z_t - math.sqrt(ab) * x0) / math.sqrt(1.0 - ab)


class InpaintAttractorDenoiser(DenoiserOracle):
    """
    Inpainting oracolo: fuori maschera attrae verso il contenuto noto,
    dentro maschera segue il prior.

    Condizione = [noto·(1−maschera), maschera], come pack_condition in spazio latente.
    """

    name = "inpaint"

    def __init__(self, known: LatentGrid, mask: np.ndarray, prior: DenoiserOracle, sched: NoiseSchedule):
        self.known = validate_grid(known, "known content")
        mask = np.asarray(mask, dtype=np.float64)
        if mask.shape != self.known.shape[:2]:
            raise ShapeError(f"mask shape {mask.shape} != grid shape {self.known.shape[:2]}")
        self.mask = mask
        self.prior = prior
        self.sched = sched

    def condition_for(self, shape):
        mask = _rescale_condition(self.mask, shape, reduce="max")
        known = _rescale_condition(self.known, shape)
        return np.concatenate([known * (1.0 - mask)[..., None], mask[..., None]], axis=-1)

    def predict_eps(self, z_t, t, cond=None):
        if cond is None or cond.shape[-1] != z_t.shape[-1] + 1:
            raise ContractError("inpaint denoiser needs a [known, mask] condition")
        known, m = cond[..., :-1], cond[..., -1:]
        prior_eps = self.prior(z_t, t, self.prior.condition_for(z_t.shape))
        return m * prior_eps + (1.0 - m) * attractor_eps(z_t, t, known, self.sched)

# End oracles.py
