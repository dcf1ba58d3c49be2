import math

import numpy as np
import pytest

from error_handlers import ShapeError, ValidationError
from inpaint import (
    border_mask, border_width, inpaint_sample, latent_mask, pack_condition, random_area_mask, unpack_condition,
)
from oracles import SmoothingDenoiser
from rng import SeedStreams, Stream
from sampler import SamplerConfig
from tiling import seam_energy

# ============================================================================
# MASCHERE
# ============================================================================

def test_border_mask_ring():
    mask = border_mask(16, 16, 1 / 16)
    assert int(mask.sum()) == 60
    assert mask[0].all() and mask[:, -1].all()
    assert mask[1:-1, 1:-1].sum() == 0
    assert set(np.unique(mask)) == {0.0, 1.0}


def test_border_width_rounds():
    assert border_width(1024, 1 / 16) == 64
    assert border_width(24, 1 / 16) == 2


def test_empty_border_rejected():
    with pytest.raises(ValidationError, match="empty border"):
        border_mask(8, 8, 1 / 32)
    with pytest.raises(ValidationError):
        border_mask(8, 8, 0.5)


def test_random_mask_bounds():
    for k in range(50):
        rng = SeedStreams(k).generator(Stream.MASK)
        mask = random_area_mask(64, 64, rng, max_frac=0.4)
        assert mask.sum() <= 0.45 * 64 * 64
        if mask.any():
            rows = np.flatnonzero(mask.any(axis=1))
            cols = np.flatnonzero(mask.any(axis=0))
            assert mask.sum() == rows.size * cols.size
        if mask.sum() >= 100:
            aspect = rows.size / cols.size
            assert 1 / math.sqrt(2) - 0.2 <= aspect <= math.sqrt(2) + 0.2


def test_random_mask_mean_fraction():
    rng = np.random.default_rng(11)
    fractions = [random_area_mask(128, 128, rng, max_frac=0.4).mean() for _ in range(10_000)]
    assert np.mean(fractions) == pytest.approx(0.2, abs=0.01)


def test_random_mask_deterministic():
    a = random_area_mask(32, 32, SeedStreams(5).generator(Stream.MASK))
    b = random_area_mask(32, 32, SeedStreams(5).generator(Stream.MASK))
    np.testing.assert_array_equal(a, b)


def test_latent_mask_uses_block_max():
    mask = np.zeros((16, 16))
    mask[9, 3] = 1.0
    lat = latent_mask(mask)
    assert lat.shape == (2, 2)
    np.testing.assert_array_equal(lat, [[0, 0], [1, 0]])
    with pytest.raises(ShapeError):
        latent_mask(np.zeros((12, 16)))

# ============================================================================
# CONDIZIONE
# ============================================================================

def test_pack_condition_zeroes_masked_pixels():
    rgb = np.full((4, 4, 3), 0.5)
    mask = np.zeros((4, 4))
    mask[0, 0] = 1.0
    packed = pack_condition(rgb, mask)
    assert packed.shape == (4, 4, 4)
    np.testing.assert_array_equal(packed[0, 0], [0, 0, 0, 1])
    np.testing.assert_array_equal(packed[1, 1], [0.5, 0.5, 0.5, 0])

    known, m = unpack_condition(packed)
    np.testing.assert_array_equal(m, mask)
    np.testing.assert_array_equal(known[1:, 1:], 0.5)


def test_pack_condition_validation():
    with pytest.raises(ValidationError):
        pack_condition(np.zeros((4, 4, 3)), np.full((4, 4), 0.5))
    with pytest.raises(ValidationError):
        pack_condition(np.full((4, 4, 3), 1.5), np.zeros((4, 4)))
    with pytest.raises(ShapeError):
        pack_condition(np.zeros((4, 4, 3)), np.zeros((4, 5)))
    with pytest.raises(ShapeError):
        unpack_condition(np.zeros((4, 4, 3)))

# ============================================================================
# INPAINTING
# ============================================================================

def test_border_inpainting_makes_ramp_tileable(sched):
    h = w = 32
    ramp = np.tile((np.arange(w) / w)[None, :, None], (h, 1, 2))
    mask = border_mask(h, w, 1 / 16)
    assert seam_energy(ramp, axis="horizontal") > 0.9

    out = inpaint_sample(SmoothingDenoiser(sched, radius=2), ramp, mask,
                         SamplerConfig(steps=20, seed=3), sched, 32, 32)

    assert seam_energy(out, axis="horizontal") < 0.5
    keep = mask == 0
    np.testing.assert_allclose(out[keep], ramp[keep], atol=1e-8)
