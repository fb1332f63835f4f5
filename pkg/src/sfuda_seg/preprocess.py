"""Image and mask preprocessing.

Images are resized to TARGET_SIZE x TARGET_SIZE with bilinear resampling and
normalized either to zero mean / unit variance per image or with fixed
per-channel statistics (ImageNet constants shipped as the default for RGB
data). Masks are resized with nearest-neighbor so no labels outside
{0, ..., K-1} are ever introduced.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

from .errors import ContractViolation
from .types import Image2D, MaskMap

TARGET_SIZE = 256
STD_FLOOR = 1e-6

ZSCORE = "zscore_per_image"
FIXED_STATS = "fixed_stats"

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


def _to_chw(raw) -> torch.Tensor:
    arr = torch.as_tensor(np.asarray(raw), dtype=torch.float32)
    if arr.ndim == 2:
        arr = arr.unsqueeze(0)
    elif arr.ndim == 3 and arr.shape[-1] in (1, 3) and arr.shape[0] not in (1, 3):
        arr = arr.permute(2, 0, 1)
    if arr.ndim != 3:
        raise ContractViolation(f"cannot interpret raster of shape {tuple(arr.shape)}")
    return arr


def resize_bilinear(pixels: torch.Tensor, size: int = TARGET_SIZE) -> torch.Tensor:
    if pixels.shape[1] == size and pixels.shape[2] == size:
        return pixels
    return F.interpolate(
        pixels.unsqueeze(0), size=(size, size), mode="bilinear", align_corners=False
    )[0]


def resize_nearest(labels: torch.Tensor, size: int = TARGET_SIZE) -> torch.Tensor:
    if labels.shape[0] == size and labels.shape[1] == size:
        return labels
    out = F.interpolate(labels[None, None].float(), size=(size, size), mode="nearest")
    return out[0, 0].to(labels.dtype)


def preprocess_image(
    raw,
    normalization: str = ZSCORE,
    fixed_mean=IMAGENET_MEAN,
    fixed_std=IMAGENET_STD,
    size: int = TARGET_SIZE,
) -> Image2D:
    """Resize then normalize a raw raster (HW, HWC or CHW layout) into an Image2D.

    zscore_per_image: (x - mean) / max(std, STD_FLOOR) over the whole image.
    fixed_stats: per-channel (x - m_c) / s_c with the manifest's constants.
    """
    pixels = resize_bilinear(_to_chw(raw), size)
    if normalization == ZSCORE:
        centered = pixels - pixels.mean()
        std = centered.std(unbiased=False)
        # a (near-)constant image carries no contrast to normalize
        pixels = torch.zeros_like(pixels) if float(std) <= STD_FLOOR else centered / std
    elif normalization == FIXED_STATS:
        mean = torch.as_tensor(fixed_mean, dtype=torch.float32)
        std = torch.as_tensor(fixed_std, dtype=torch.float32)
        if mean.numel() != pixels.shape[0] or std.numel() != pixels.shape[0]:
            raise ContractViolation(
                f"fixed stats need {pixels.shape[0]} channels, got {mean.numel()}/{std.numel()}"
            )
        pixels = (pixels - mean.view(-1, 1, 1)) / std.view(-1, 1, 1)
    else:
        raise ContractViolation(f"unknown normalization mode {normalization!r}")
    return Image2D(pixels=pixels)


def preprocess_mask(raw, class_count: int = 2, size: int = TARGET_SIZE) -> MaskMap:
    arr = torch.as_tensor(np.array(raw))
    if arr.ndim != 2:
        raise ContractViolation(f"mask must be single-channel, got shape {tuple(arr.shape)}")
    labels = resize_nearest(arr.to(torch.int64), size)
    return MaskMap(labels=labels, class_count=class_count)
