"""Segmentation network and shape-prior autoencoder.

The segmenter follows the ENet encoder-decoder layout (initial block, five
bottleneck stages with dilated/asymmetric convolutions and max-unpooling
decoder) with a width multiplier so desk-scale runs finish in minutes. The
activations entering the final transposed-conv classifier are exposed as the
feature map whose positional norms the Ring loss constrains.

The shape prior is a denoising autoencoder over mask probability maps: four
strided conv stages to a dense bottleneck, mirrored transposed-conv decoder,
softmax output.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ContractViolation
from .types import FeatureMap, Image2D, ProbMap


@dataclass(frozen=True)
class SegmentationNetworkSpec:
    input_channels: int = 1
    class_count: int = 2
    width_multiplier: float = 1.0

    def __post_init__(self):
        if self.input_channels not in (1, 3):
            raise ContractViolation("input_channels must be 1 or 3")
        if self.class_count < 2:
            raise ContractViolation("class_count must be >= 2")
        if self.width_multiplier <= 0:
            raise ContractViolation("width_multiplier must be > 0")

    @property
    def stage_channels(self) -> tuple[int, int, int]:
        w = self.width_multiplier
        return (max(2, round(16 * w)), max(4, round(64 * w)), max(8, round(128 * w)))

    @property
    def feature_channels(self) -> int:
        """Channel count C of the exposed pre-classifier feature map."""
        return self.stage_channels[0]


@dataclass(frozen=True)
class ShapePriorSpec:
    class_count: int = 2
    bottleneck_dim: int = 64
    base_channels: int = 16
    input_size: int = 256
    frozen: bool = False

    def __post_init__(self):
        if self.class_count < 2:
            raise ContractViolation("class_count must be >= 2")
        if self.bottleneck_dim < 1:
            raise ContractViolation("bottleneck_dim must be positive")
        if self.input_size % 16 != 0:
            raise ContractViolation("input_size must be divisible by 16")


class _InitialBlock(nn.Module):
    """Strided conv concatenated with max-pool of the input."""

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, out_channels - in_channels, 3, stride=2, padding=1, bias=False)
        self.pool = nn.MaxPool2d(2, stride=2)
        self.bn = nn.BatchNorm2d(out_channels)
        self.act = nn.PReLU(out_channels)

    def forward(self, x):
        out = torch.cat([self.conv(x), self.pool(x)], dim=1)
        return self.act(self.bn(out))


class _Bottleneck(nn.Module):
    """Regular / dilated / asymmetric bottleneck with residual add."""

    def __init__(self, channels: int, kind: str = "regular", dilation: int = 1, dropout: float = 0.1):
        super().__init__()
        internal = max(1, channels // 4)
        layers = [
            nn.Conv2d(channels, internal, 1, bias=False),
            nn.BatchNorm2d(internal),
            nn.PReLU(internal),
        ]
        if kind == "regular":
            layers += [nn.Conv2d(internal, internal, 3, padding=1, bias=False)]
        elif kind == "dilated":
            layers += [nn.Conv2d(internal, internal, 3, padding=dilation, dilation=dilation, bias=False)]
        elif kind == "asymmetric":
            layers += [
                nn.Conv2d(internal, internal, (5, 1), padding=(2, 0), bias=False),
                nn.Conv2d(internal, internal, (1, 5), padding=(0, 2), bias=False),
            ]
        else:
            raise ValueError(f"unknown bottleneck kind {kind!r}")
        layers += [
            nn.BatchNorm2d(internal),
            nn.PReLU(internal),
            nn.Conv2d(internal, channels, 1, bias=False),
            nn.BatchNorm2d(channels),
            nn.Dropout2d(dropout),
        ]
        self.ext = nn.Sequential(*layers)
        self.act = nn.PReLU(channels)

    def forward(self, x):
        return self.act(x + self.ext(x))


class _DownsamplingBottleneck(nn.Module):
    def __init__(self, in_channels: int, out_channels: int, dropout: float):
        super().__init__()
        internal = max(1, out_channels // 4)
        self.pool = nn.MaxPool2d(2, stride=2, return_indices=True)
        self.ext = nn.Sequential(
            nn.Conv2d(in_channels, internal, 2, stride=2, bias=False),
            nn.BatchNorm2d(internal),
            nn.PReLU(internal),
            nn.Conv2d(internal, internal, 3, padding=1, bias=False),
            nn.BatchNorm2d(internal),
            nn.PReLU(internal),
            nn.Conv2d(internal, out_channels, 1, bias=False),
            nn.BatchNorm2d(out_channels),
            nn.Dropout2d(dropout),
        )
        self.act = nn.PReLU(out_channels)
        self.pad_channels = out_channels - in_channels

    def forward(self, x):
        main, indices = self.pool(x)
        main = F.pad(main, (0, 0, 0, 0, 0, self.pad_channels))
        out = self.act(main + self.ext(x))
        return out, indices


class _UpsamplingBottleneck(nn.Module):
    def __init__(self, in_channels: int, out_channels: int, dropout: float):
        super().__init__()
        internal = max(1, in_channels // 4)
        self.main_conv = nn.Sequential(
            nn.Conv2d(in_channels, out_channels, 1, bias=False),
            nn.BatchNorm2d(out_channels),
        )
        self.unpool = nn.MaxUnpool2d(2, stride=2)
        self.ext = nn.Sequential(
            nn.Conv2d(in_channels, internal, 1, bias=False),
            nn.BatchNorm2d(internal),
            nn.PReLU(internal),
            nn.ConvTranspose2d(internal, internal, 3, stride=2, padding=1, output_padding=1, bias=False),
            nn.BatchNorm2d(internal),
            nn.PReLU(internal),
            nn.Conv2d(internal, out_channels, 1, bias=False),
            nn.BatchNorm2d(out_channels),
            nn.Dropout2d(dropout),
        )
        self.act = nn.PReLU(out_channels)

    def forward(self, x, indices, output_size):
        main = self.unpool(self.main_conv(x), indices, output_size=output_size)
        return self.act(main + self.ext(x))


class SegmentationNetwork(nn.Module):
    """ENet-style segmenter returning (softmax probabilities, feature map)."""

    def __init__(self, spec: SegmentationNetworkSpec):
        super().__init__()
        self.spec = spec
        c1, c2, c3 = spec.stage_channels
        self.initial = _InitialBlock(spec.input_channels, c1)

        self.down1 = _DownsamplingBottleneck(c1, c2, dropout=0.01)
        self.stage1 = nn.Sequential(*[_Bottleneck(c2, dropout=0.01) for _ in range(4)])

        self.down2 = _DownsamplingBottleneck(c2, c3, dropout=0.1)
        self.stage2 = nn.Sequential(*self._dilated_stage(c3))
        self.stage3 = nn.Sequential(*self._dilated_stage(c3))

        self.up4 = _UpsamplingBottleneck(c3, c2, dropout=0.1)
        self.stage4 = nn.Sequential(_Bottleneck(c2), _Bottleneck(c2))
        self.up5 = _UpsamplingBottleneck(c2, c1, dropout=0.1)
        self.stage5 = _Bottleneck(c1)

        self.classifier = nn.ConvTranspose2d(c1, spec.class_count, 3, stride=2, padding=1, output_padding=1)
        # near-uniform probabilities before any training step; a hard zero
        # init would block gradient flow into the decoder
        nn.init.normal_(self.classifier.weight, std=0.01)
        nn.init.zeros_(self.classifier.bias)

    @staticmethod
    def _dilated_stage(channels: int) -> list[nn.Module]:
        return [
            _Bottleneck(channels, "regular"),
            _Bottleneck(channels, "dilated", dilation=2),
            _Bottleneck(channels, "asymmetric"),
            _Bottleneck(channels, "dilated", dilation=4),
            _Bottleneck(channels, "regular"),
            _Bottleneck(channels, "dilated", dilation=8),
            _Bottleneck(channels, "asymmetric"),
            _Bottleneck(channels, "dilated", dilation=16),
        ]

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if x.ndim != 4 or x.shape[1] != self.spec.input_channels:
            raise ContractViolation(
                f"expected input [B,{self.spec.input_channels},H,W], got {tuple(x.shape)}"
            )
        if x.shape[2] % 8 or x.shape[3] % 8:
            raise ContractViolation("input height/width must be divisible by 8")
        x = self.initial(x)
        size1 = x.shape
        x, idx1 = self.down1(x)
        x = self.stage1(x)
        size2 = x.shape
        x, idx2 = self.down2(x)
        x = self.stage2(x)
        x = self.stage3(x)
        x = self.up4(x, idx2, output_size=size2)
        x = self.stage4(x)
        x = self.up5(x, idx1, output_size=size1)
        features = self.stage5(x)
        logits = self.classifier(features)
        probs = torch.softmax(logits, dim=1)
        return probs, features

    @torch.no_grad()
    def predict(self, image: Image2D) -> tuple[ProbMap, FeatureMap]:
        """Deterministic single-image inference with typed outputs."""
        was_training = self.training
        self.eval()
        try:
            probs, feats = self.forward(image.pixels.unsqueeze(0))
        finally:
            self.train(was_training)
        return ProbMap(probs[0]), FeatureMap(feats[0])


class ShapePriorNetwork(nn.Module):
    """Denoising autoencoder mapping mask probability maps to plausible shapes."""

    def __init__(self, spec: ShapePriorSpec):
        super().__init__()
        self.spec = spec
        b = spec.base_channels
        k = spec.class_count
        self.encoder = nn.Sequential(
            nn.Conv2d(k, b, 3, stride=2, padding=1, bias=False), nn.BatchNorm2d(b), nn.ReLU(inplace=True),
            nn.Conv2d(b, 2 * b, 3, stride=2, padding=1, bias=False), nn.BatchNorm2d(2 * b), nn.ReLU(inplace=True),
            nn.Conv2d(2 * b, 4 * b, 3, stride=2, padding=1, bias=False), nn.BatchNorm2d(4 * b), nn.ReLU(inplace=True),
            nn.Conv2d(4 * b, 4 * b, 3, stride=2, padding=1, bias=False), nn.BatchNorm2d(4 * b), nn.ReLU(inplace=True),
        )
        side = spec.input_size // 16
        flat = 4 * b * side * side
        self._latent_shape = (4 * b, side, side)
        self.to_latent = nn.Linear(flat, spec.bottleneck_dim)
        self.from_latent = nn.Linear(spec.bottleneck_dim, flat)
        self.decoder = nn.Sequential(
            nn.ConvTranspose2d(4 * b, 4 * b, 3, stride=2, padding=1, output_padding=1, bias=False),
            nn.BatchNorm2d(4 * b), nn.ReLU(inplace=True),
            nn.ConvTranspose2d(4 * b, 2 * b, 3, stride=2, padding=1, output_padding=1, bias=False),
            nn.BatchNorm2d(2 * b), nn.ReLU(inplace=True),
            nn.ConvTranspose2d(2 * b, b, 3, stride=2, padding=1, output_padding=1, bias=False),
            nn.BatchNorm2d(b), nn.ReLU(inplace=True),
            nn.ConvTranspose2d(b, b, 3, stride=2, padding=1, output_padding=1, bias=False),
            nn.BatchNorm2d(b), nn.ReLU(inplace=True),
            nn.Conv2d(b, k, 1),
        )
        # near-uniform reconstruction before any training step
        nn.init.normal_(self.decoder[-1].weight, std=0.01)
        nn.init.zeros_(self.decoder[-1].bias)
        if spec.frozen:
            freeze(self)

    def forward(self, p: torch.Tensor) -> torch.Tensor:
        if p.ndim != 4 or p.shape[1] != self.spec.class_count:
            raise ContractViolation(
                f"expected probs [B,{self.spec.class_count},H,W], got {tuple(p.shape)}"
            )
        if p.shape[2] != self.spec.input_size or p.shape[3] != self.spec.input_size:
            raise ContractViolation(
                f"shape prior built for {self.spec.input_size}px inputs, got {tuple(p.shape[2:])}"
            )
        z = self.encoder(p)
        z = F.relu(self.to_latent(z.flatten(1)))
        z = F.relu(self.from_latent(z))
        z = z.view(-1, *self._latent_shape)
        logits = self.decoder(z)
        return torch.softmax(logits, dim=1)

    @torch.no_grad()
    def refine(self, p: ProbMap) -> ProbMap:
        """Single-map convenience wrapper around forward."""
        was_training = self.training
        self.eval()
        try:
            out = self.forward(p.probs.unsqueeze(0))
        finally:
            self.train(was_training)
        return ProbMap(out[0])


def freeze(module: nn.Module) -> nn.Module:
    """Disable gradients and switch to eval mode so no state (including BN
    running statistics) can change during further training steps."""
    for param in module.parameters():
        param.requires_grad_(False)
    module.eval()
    return module


def one_hot_probs(labels: torch.Tensor, class_count: int) -> torch.Tensor:
    """Lift an integer mask [B,H,W] to an exact one-hot probability map [B,K,H,W]."""
    return F.one_hot(labels.long(), class_count).permute(0, 3, 1, 2).float()
