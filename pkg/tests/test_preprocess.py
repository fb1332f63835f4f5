import numpy as np
import pytest
import torch

from sfuda_seg.errors import ContractViolation
from sfuda_seg.preprocess import (
    FIXED_STATS,
    ZSCORE,
    preprocess_image,
    preprocess_mask,
)


def test_zscore_statistics():
    rng = np.random.default_rng(0)
    raw = rng.uniform(0, 1, size=(300, 300)).astype(np.float32)
    img = preprocess_image(raw, normalization=ZSCORE)
    assert img.pixels.shape == (1, 256, 256)
    assert abs(float(img.pixels.mean())) <= 1e-4
    assert abs(float(img.pixels.std(unbiased=False)) - 1.0) <= 1e-3


def test_constant_image_maps_to_zeros():
    raw = np.full((64, 64), 0.7, dtype=np.float32)
    img = preprocess_image(raw)
    assert torch.allclose(img.pixels, torch.zeros_like(img.pixels))


def test_zscore_idempotent():
    rng = np.random.default_rng(1)
    raw = rng.uniform(0, 1, size=(256, 256)).astype(np.float32)
    once = preprocess_image(raw).pixels
    twice = preprocess_image(once.numpy()).pixels
    assert torch.allclose(once, twice, atol=1e-5)


def test_fixed_stats_normalization_per_channel():
    raw = np.zeros((10, 10, 3), dtype=np.float32)
    raw[..., 0] = 0.485
    raw[..., 1] = 0.456
    raw[..., 2] = 0.406
    img = preprocess_image(raw, normalization=FIXED_STATS)
    assert torch.allclose(img.pixels, torch.zeros_like(img.pixels), atol=1e-5)


def test_fixed_stats_requires_matching_channels():
    raw = np.zeros((10, 10), dtype=np.float32)
    with pytest.raises(ContractViolation):
        preprocess_image(raw, normalization=FIXED_STATS)  # 3-channel stats on 1-channel image


def test_unknown_mode_rejected():
    with pytest.raises(ContractViolation):
        preprocess_image(np.zeros((8, 8)), normalization="minmax")


def test_mask_resampling_keeps_label_set():
    # 512x512 mask with a 2-pixel-wide diagonal-ish structure
    raw = np.zeros((512, 512), dtype=np.uint8)
    raw[100:102, :] = 1
    mask = preprocess_mask(raw)
    assert mask.labels.shape == (256, 256)
    assert set(mask.labels.unique().tolist()) <= {0, 1}
    assert not mask.labels.is_floating_point()
    assert int(mask.labels.sum()) > 0


def test_mask_rejects_multichannel():
    with pytest.raises(ContractViolation):
        preprocess_mask(np.zeros((8, 8, 3), dtype=np.uint8))


def test_mask_values_survive_resize_exactly():
    raw = np.zeros((256, 256), dtype=np.uint8)
    raw[10:50, 10:50] = 1
    mask = preprocess_mask(raw)
    assert torch.equal(mask.labels, torch.as_tensor(raw, dtype=torch.int64))
