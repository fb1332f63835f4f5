"""Synthetic two-domain dataset generator.

Source and target share one shape family (random ellipse unions with an
anatomically motivated center bias) but differ in appearance: the target
domain applies an intensity remap (e.g. inversion of the foreground/background
contrast), a contrast/gamma tone change and Gaussian blur before noise.
Masks are exact by construction, everything is reproducible bit-for-bit from
the seed, and each domain is written to disk as PNGs plus a manifest.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

from .errors import ContractViolation
from .manifest import DatasetManifest, save_manifest
from .preprocess import ZSCORE
from .types import SampleRecord


@dataclass(frozen=True)
class SyntheticShiftConfig:
    sample_count: int = 24
    image_size: int = 256
    shape_count_min: int = 1
    shape_count_max: int = 1
    radius_min: float = 0.18   # fractions of image size
    radius_max: float = 0.28
    center_span: float = 0.30  # centers land within this fraction around the middle
    min_fg_fraction: float = 0.08
    max_fg_fraction: float = 0.45
    fg_mean: float = 0.75
    bg_mean: float = 0.25
    noise_sigma: float = 0.04
    target_fg_mean: float | None = None  # None -> same appearance as source
    target_bg_mean: float | None = None
    target_blur_sigma: float = 0.0
    target_contrast: float = 1.0
    target_gamma: float = 1.0
    target_noise_sigma: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.sample_count < 1:
            raise ContractViolation("sample_count must be >= 1")
        if not (0 < self.radius_min <= self.radius_max < 0.5):
            raise ContractViolation("radius range must satisfy 0 < min <= max < 0.5")
        if not (0 <= self.min_fg_fraction < self.max_fg_fraction <= 1):
            raise ContractViolation("fg fraction bounds must satisfy 0 <= min < max <= 1")
        if self.shape_count_min < 1 or self.shape_count_max < self.shape_count_min:
            raise ContractViolation("bad shape count range")


def inverted_shift(cfg: SyntheticShiftConfig, blur_sigma: float = 1.5) -> SyntheticShiftConfig:
    """Derive the standard acceptance shift: swap fg/bg intensities and blur."""
    return replace(
        cfg,
        target_fg_mean=cfg.bg_mean,
        target_bg_mean=cfg.fg_mean,
        target_blur_sigma=blur_sigma,
    )


def _render_mask(cfg: SyntheticShiftConfig, rng: np.random.Generator) -> np.ndarray:
    s = cfg.image_size
    yy, xx = np.mgrid[0:s, 0:s].astype(np.float64)
    for _ in range(40):
        mask = np.zeros((s, s), dtype=bool)
        n = int(rng.integers(cfg.shape_count_min, cfg.shape_count_max + 1))
        for _ in range(n):
            cx = s * (0.5 + cfg.center_span * (rng.random() - 0.5))
            cy = s * (0.5 + cfg.center_span * (rng.random() - 0.5))
            a = s * rng.uniform(cfg.radius_min, cfg.radius_max)
            b = s * rng.uniform(cfg.radius_min, cfg.radius_max)
            theta = rng.uniform(0, np.pi)
            dx, dy = xx - cx, yy - cy
            u = dx * np.cos(theta) + dy * np.sin(theta)
            v = -dx * np.sin(theta) + dy * np.cos(theta)
            mask |= (u / a) ** 2 + (v / b) ** 2 <= 1.0
        frac = mask.mean()
        if cfg.min_fg_fraction <= frac <= cfg.max_fg_fraction:
            return mask
    raise ContractViolation(
        "could not draw a mask within the configured foreground-fraction range"
    )


def _render_image(mask: np.ndarray, cfg: SyntheticShiftConfig, rng: np.random.Generator, target: bool) -> np.ndarray:
    if target:
        fg = cfg.fg_mean if cfg.target_fg_mean is None else cfg.target_fg_mean
        bg = cfg.bg_mean if cfg.target_bg_mean is None else cfg.target_bg_mean
        noise = cfg.noise_sigma if cfg.target_noise_sigma is None else cfg.target_noise_sigma
    else:
        fg, bg, noise = cfg.fg_mean, cfg.bg_mean, cfg.noise_sigma
    img = np.where(mask, fg, bg).astype(np.float64)
    if target:
        if cfg.target_contrast != 1.0:
            img = 0.5 + cfg.target_contrast * (img - 0.5)
        if cfg.target_gamma != 1.0:
            img = np.clip(img, 0.0, 1.0) ** cfg.target_gamma
        if cfg.target_blur_sigma > 0:
            img = gaussian_filter(img, sigma=cfg.target_blur_sigma, mode="nearest")
    img = img + rng.normal(0.0, noise, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def _write_png(path: Path, arr: np.ndarray) -> None:
    Image.fromarray(arr).save(path, format="PNG")


def generate_synthetic(
    cfg: SyntheticShiftConfig, out_dir: str | Path
) -> tuple[DatasetManifest, DatasetManifest]:
    """Write paired source/target datasets under out_dir and return their manifests."""
    out_dir = Path(out_dir)
    manifests = []
    for domain_index, domain in enumerate(("source", "target")):
        rng = np.random.default_rng([cfg.seed, domain_index])
        root = out_dir / domain
        (root / "images").mkdir(parents=True, exist_ok=True)
        (root / "masks").mkdir(parents=True, exist_ok=True)
        records = []
        for i in range(cfg.sample_count):
            mask = _render_mask(cfg, rng)
            img = _render_image(mask, cfg, rng, target=(domain == "target"))
            stem = f"{domain}_{i:04d}"
            image_path = root / "images" / f"{stem}.png"
            mask_path = root / "masks" / f"{stem}.png"
            _write_png(image_path, (img * 255).round().astype(np.uint8))
            _write_png(mask_path, mask.astype(np.uint8))
            records.append(
                SampleRecord(
                    id=stem,
                    image_path=image_path,
                    mask_path=mask_path,
                    domain_tag=domain,
                )
            )
        manifest = DatasetManifest(
            name=f"synthetic-{domain}",
            records=tuple(records),
            channels=1,
            normalization=ZSCORE,
        )
        save_manifest(manifest, root / "manifest.csv")
        manifests.append(manifest)
    return manifests[0], manifests[1]
