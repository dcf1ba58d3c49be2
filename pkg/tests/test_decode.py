import tracemalloc

import numpy as np
import pytest

from decode import (
    LatentDecoder, LinearMockDecoder, blend_normalizer, gaussian_weights, linear_mock_decoder,
    mean_match, patched_decode, patched_decode_stack,
)
from enhanced_logging import RunLogger
from error_handlers import ContractError, ShapeError, ValidationError
from svbrdf import MaterialMaps
from tiling import seam_report


def _noise(shape, seed=0):
    return np.random.default_rng(seed).standard_normal(shape)


def _smooth(h, w, c=14, seed=0):
    rng = np.random.default_rng(seed)
    i, j = np.mgrid[0:h, 0:w]
    waves = [np.sin(2 * np.pi * (i / h + rng.uniform())) * np.cos(2 * np.pi * (j / w + rng.uniform()))
             for _ in range(c)]
    return np.stack(waves, axis=-1)


class _BadDecoder(LatentDecoder):
    def decode(self, z):
        return np.zeros((z.shape[0], z.shape[1], 9))


class _GlobalMeanDecoder(LinearMockDecoder):
    """Colore che dipende dalla media dell'input: una patch isolata deriva."""

    def decode(self, z):
        return super().decode(z) + 4.0 * z[..., 0].mean()

# ============================================================================
# DECODER
# ============================================================================

def test_mock_decoder_shape_and_determinism():
    z = _noise((4, 6, 14))
    a = linear_mock_decoder(3)(z)
    assert a.shape == (32, 48, 9)
    np.testing.assert_array_equal(a, linear_mock_decoder(3)(z))
    assert not np.array_equal(a, linear_mock_decoder(4)(z))
    assert not linear_mock_decoder(3)(np.zeros((4, 6, 14))).any()


def test_mock_decoder_halo():
    assert LinearMockDecoder(0, upsample="bilinear").halo == 1
    assert LinearMockDecoder(0, upsample="box").halo == 0
    with pytest.raises(ValidationError):
        LinearMockDecoder(0, upsample="nearest")
    with pytest.raises(ShapeError):
        LinearMockDecoder(0, in_channels=4)(np.zeros((2, 2, 3)))


def test_decoder_contract():
    with pytest.raises(ContractError):
        _BadDecoder()(np.zeros((2, 2, 4)))

# ============================================================================
# BLENDING
# ============================================================================

def test_gaussian_weights_vanish_at_edges():
    g = gaussian_weights(64).profile
    assert g[0] == 0.0 and g[-1] == 0.0
    np.testing.assert_allclose(g, g[::-1])
    assert g[31] == g.max() and g[31] > 0
    with pytest.raises(ValidationError):
        gaussian_weights(2)


def test_blend_normalizer_wraps():
    profile = np.ones(4)
    np.testing.assert_array_equal(blend_normalizer(6, [0, 4], profile), [2, 2, 1, 1, 1, 1])


def test_normalized_weights_partition_unity():
    profile = gaussian_weights(512).profile
    dim, origins = 1536, [0, 384, 768, 1152]
    norm = blend_normalizer(dim, origins, profile)
    assert (norm > 0).all()

    total = np.zeros(dim)
    for o in origins:
        idx = (o + np.arange(512)) % dim
        total[idx] += profile / norm[idx]
    np.testing.assert_allclose(total, 1.0, atol=1e-6)
    np.testing.assert_allclose(np.outer(total, total), 1.0, atol=1e-6)


def test_mean_match_shifts_per_channel():
    patch = _noise((8, 8, 3))
    ref = np.ones((2, 2, 3)) * [1.0, 2.0, 3.0]
    out = mean_match(patch, ref)
    np.testing.assert_allclose(out.mean(axis=(0, 1)), [1.0, 2.0, 3.0])
    np.testing.assert_allclose(out.std(axis=(0, 1)), patch.std(axis=(0, 1)))
    np.testing.assert_array_equal(mean_match(patch, patch), patch)

# ============================================================================
# PATCHED DECODE
# ============================================================================

def test_single_patch_is_plain_decode():
    z = _noise((16, 16, 14))
    dec = linear_mock_decoder(1)
    np.testing.assert_array_equal(patched_decode_stack(dec, z, 16), dec(z))


def test_box_decoder_patched_equals_full():
    z = _noise((32, 32, 14), seed=2)
    dec = LinearMockDecoder(5, upsample="box")
    out = patched_decode_stack(dec, z, patch_latent=16, overlap_frac=0.25, mode="mean_match")
    np.testing.assert_allclose(out, dec(z), atol=1e-4)


def test_bilinear_overlap_blend_equals_full():
    z = _noise((32, 32, 14), seed=3)
    dec = LinearMockDecoder(5, upsample="bilinear")
    out = patched_decode_stack(dec, z, patch_latent=16, overlap_frac=0.25, mode="overlap")
    np.testing.assert_allclose(out, dec(z), atol=1e-10)


def test_mean_match_equals_full_decode_on_noise():
    z = _noise((128, 128, 14))
    dec = linear_mock_decoder(0)
    out = patched_decode_stack(dec, z, patch_latent=64, overlap_frac=0.25)
    assert np.sqrt(np.mean((out - dec(z)) ** 2)) <= 1e-4


def test_mean_match_removes_context_drift():
    z = _smooth(32, 32, seed=4)
    dec = _GlobalMeanDecoder(5)
    full = dec(z)
    matched = patched_decode_stack(dec, z, patch_latent=16, overlap_frac=0.25, mode="mean_match")
    blended = patched_decode_stack(dec, z, patch_latent=16, overlap_frac=0.25, mode="overlap")
    np.testing.assert_allclose(matched, full, atol=1e-8)
    assert np.abs(blended - full).max() > 1e-2


def test_thread_count_does_not_change_decode():
    z = _noise((32, 32, 14), seed=6)
    dec = linear_mock_decoder(2)
    serial = patched_decode_stack(dec, z, 16, max_parallel=1)
    np.testing.assert_array_equal(serial, patched_decode_stack(dec, z, 16, max_parallel=4))


def test_decoded_material_tiles():
    z = _smooth(32, 32, seed=8)
    stack = patched_decode_stack(linear_mock_decoder(0), z, 16)
    assert seam_report(stack)["passed"]


def test_naive_mode_needs_divisible_grid():
    z = _noise((24, 24, 14))
    with pytest.raises(ShapeError):
        patched_decode_stack(linear_mock_decoder(0), z, 16, mode="naive")
    out = patched_decode_stack(LinearMockDecoder(0, upsample="box"), _noise((32, 32, 14)), 16, mode="naive")
    assert out.shape == (256, 256, 9)


def test_patch_too_small_for_overlap():
    with pytest.raises(ValidationError):
        patched_decode_stack(linear_mock_decoder(0), _noise((32, 32, 14)), 1)
    with pytest.raises(ValidationError):
        patched_decode_stack(linear_mock_decoder(0), _noise((32, 32, 14)), 10)


def test_patched_decode_returns_material():
    maps = patched_decode(linear_mock_decoder(0), _noise((8, 8, 14)), 4)
    assert isinstance(maps, MaterialMaps)
    assert maps.shape == (64, 64)
    assert maps.roughness.min() >= 0.0 and maps.roughness.max() <= 1.0


def test_peak_memory_bounded():
    z = _noise((64, 64, 14), seed=1)
    dec = LinearMockDecoder(0, upsample="box")
    out_bytes = 512 * 512 * 9 * 8
    patch_bytes = 128 * 128 * 9 * 8

    tracemalloc.start()
    try:
        patched_decode_stack(dec, z, patch_latent=16, overlap_frac=0.25, max_parallel=1)
        _, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
    assert peak - out_bytes <= 8 * patch_bytes


def test_decode_event_logged(logs_dir):
    run_logger = RunLogger(str(logs_dir))
    try:
        patched_decode_stack(linear_mock_decoder(0), _noise((32, 32, 14)), 16, run_logger=run_logger)
    finally:
        run_logger.close()
    (event,) = run_logger.get_stats()["stages"]
    assert event["event"] == "decode"
    assert event["shape"] == [256, 256, 9]
