"""Core raster and record types.

All containers are frozen dataclasses wrapping torch tensors and are treated
as immutable value objects after construction; validation happens once in
``__post_init__``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import torch

from .errors import ContractViolation

PROB_SUM_TOL = 1e-5


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ContractViolation(msg)


@dataclass(frozen=True)
class Image2D:
    """Preprocessed image, float32 grid of shape [channels, height, width]."""

    pixels: torch.Tensor

    def __post_init__(self):
        p = self.pixels
        _require(p.ndim == 3, f"Image2D expects [C,H,W], got shape {tuple(p.shape)}")
        _require(p.shape[0] in (1, 3), f"channels must be 1 or 3, got {p.shape[0]}")
        _require(bool(torch.isfinite(p).all()), "Image2D pixels must be finite")

    @property
    def channels(self) -> int:
        return self.pixels.shape[0]

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]


@dataclass(frozen=True)
class MaskMap:
    """Integer label grid [height, width] with entries in {0, ..., class_count-1}."""

    labels: torch.Tensor
    class_count: int = 2

    def __post_init__(self):
        m = self.labels
        _require(m.ndim == 2, f"MaskMap expects [H,W], got shape {tuple(m.shape)}")
        _require(not m.is_floating_point(), "MaskMap labels must be integer-typed")
        _require(self.class_count >= 2, "class_count must be >= 2")
        if m.numel():
            _require(int(m.min()) >= 0, "labels must be non-negative")
            _require(
                int(m.max()) < self.class_count,
                f"labels must be < class_count={self.class_count}, got max {int(m.max())}",
            )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.labels.shape[0], self.labels.shape[1])

    def foreground_fraction(self, foreground_class: int = 1) -> float:
        return float((self.labels == foreground_class).float().mean())


@dataclass(frozen=True)
class ProbMap:
    """Per-pixel class probabilities, float grid [class_count, height, width].

    The class axis must sum to 1 within PROB_SUM_TOL at every pixel.
    """

    probs: torch.Tensor

    def __post_init__(self):
        p = self.probs
        _require(p.ndim == 3, f"ProbMap expects [K,H,W], got shape {tuple(p.shape)}")
        _require(p.shape[0] >= 2, "ProbMap needs at least 2 classes")
        _require(bool(torch.isfinite(p).all()), "probabilities must be finite")
        _require(
            bool((p >= -PROB_SUM_TOL).all()) and bool((p <= 1 + PROB_SUM_TOL).all()),
            "probabilities must lie in [0, 1]",
        )
        sums = p.sum(dim=0)
        _require(
            bool(((sums - 1.0).abs() <= PROB_SUM_TOL).all()),
            "per-pixel probabilities must sum to 1",
        )

    @property
    def class_count(self) -> int:
        return self.probs.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.probs.shape[1], self.probs.shape[2])


@dataclass(frozen=True)
class FeatureMap:
    """Activations immediately before the segmentation head, [C, H, W]."""

    features: torch.Tensor

    def __post_init__(self):
        f = self.features
        _require(f.ndim == 3, f"FeatureMap expects [C,H,W], got shape {tuple(f.shape)}")
        _require(f.numel() > 0, "FeatureMap must be non-empty")
        _require(bool(torch.isfinite(f).all()), "features must be finite")

    @property
    def channels(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class SampleRecord:
    """One (image, optional mask) pair belonging to a domain."""

    id: str
    image_path: Path
    mask_path: Path | None = None
    domain_tag: str = "source"
    patient_id: str = ""

    def __post_init__(self):
        _require(self.domain_tag in ("source", "target"), f"bad domain_tag {self.domain_tag!r}")
        if self.domain_tag == "source":
            _require(self.mask_path is not None, f"source record {self.id!r} must carry a mask")


@dataclass(frozen=True)
class Checkpoint:
    """Persisted model parameters plus selection metadata.

    ``parameters`` maps names to tensors (parameters and buffers); ``digest``
    is deterministically recomputable from them via checkpoints.state_digest.
    """

    parameters: dict[str, torch.Tensor]
    digest: str
    metadata: dict = field(default_factory=dict)
