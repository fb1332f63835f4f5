"""Dataset manifests and raster file I/O.

A dataset is a CSV manifest with header ``id,image_path,mask_path,patient_id``
(mask_path and patient_id may be empty) plus a JSON sidecar of dataset-level
settings: name, channels, normalization mode and fixed statistics. Images are
PNG (8/16-bit grayscale or 8-bit RGB); masks are single-channel PNG holding
raw label values.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .audit import AuditLog
from .errors import ContractViolation, MissingArtifact
from .preprocess import (
    IMAGENET_MEAN,
    IMAGENET_STD,
    ZSCORE,
    preprocess_image,
    preprocess_mask,
)
from .types import Image2D, MaskMap, SampleRecord

CSV_HEADER = ["id", "image_path", "mask_path", "patient_id"]


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    records: tuple[SampleRecord, ...]
    channels: int = 1
    normalization: str = ZSCORE
    fixed_mean: tuple[float, ...] = IMAGENET_MEAN
    fixed_std: tuple[float, ...] = IMAGENET_STD

    def __post_init__(self):
        if self.channels not in (1, 3):
            raise ContractViolation("channels must be 1 or 3")

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    def fully_labeled(self) -> bool:
        return all(r.mask_path is not None for r in self.records)


def save_manifest(manifest: DatasetManifest, csv_path: str | Path) -> Path:
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)

    def portable(p: Path | None) -> str:
        if p is None:
            return ""
        p = Path(p)
        try:  # keep datasets relocatable (and byte-reproducible) when self-contained
            return p.relative_to(csv_path.parent).as_posix()
        except ValueError:
            return str(p)

    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for r in manifest.records:
            writer.writerow([r.id, portable(r.image_path), portable(r.mask_path), r.patient_id])
    sidecar = {
        "name": manifest.name,
        "channels": manifest.channels,
        "normalization": manifest.normalization,
        "fixed_mean": list(manifest.fixed_mean),
        "fixed_std": list(manifest.fixed_std),
    }
    csv_path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))
    return csv_path


def load_manifest(csv_path: str | Path, domain_tag: str = "source") -> DatasetManifest:
    """Load and validate a manifest; every referenced file must exist."""
    csv_path = Path(csv_path)
    if not csv_path.exists():
        raise MissingArtifact(f"manifest not found: {csv_path}")
    sidecar_path = csv_path.with_suffix(".json")
    if not sidecar_path.exists():
        raise MissingArtifact(f"manifest sidecar not found: {sidecar_path}")
    sidecar = json.loads(sidecar_path.read_text())

    base = csv_path.parent
    records = []
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise ContractViolation(
                f"manifest header must be {','.join(CSV_HEADER)}, got {reader.fieldnames}"
            )
        for row in reader:
            image_path = _resolve(base, row["image_path"])
            mask_path = _resolve(base, row["mask_path"]) if row["mask_path"] else None
            if not image_path.exists():
                raise MissingArtifact(f"image missing for record {row['id']!r}: {image_path}")
            if mask_path is not None and not mask_path.exists():
                raise MissingArtifact(f"mask missing for record {row['id']!r}: {mask_path}")
            records.append(
                SampleRecord(
                    id=row["id"],
                    image_path=image_path,
                    mask_path=mask_path,
                    domain_tag=domain_tag,
                    patient_id=row.get("patient_id", "") or "",
                )
            )
    return DatasetManifest(
        name=sidecar.get("name", csv_path.stem),
        records=tuple(records),
        channels=int(sidecar.get("channels", 1)),
        normalization=sidecar.get("normalization", ZSCORE),
        fixed_mean=tuple(sidecar.get("fixed_mean", IMAGENET_MEAN)),
        fixed_std=tuple(sidecar.get("fixed_std", IMAGENET_STD)),
    )


def _resolve(base: Path, p: str) -> Path:
    path = Path(p)
    return path if path.is_absolute() else base / path


def _decode_image(path: Path, channels: int) -> np.ndarray:
    try:
        img = Image.open(path)
        img.load()
    except OSError as exc:
        raise MissingArtifact(f"cannot decode image {path}: {exc}") from exc
    arr = np.asarray(img)
    if arr.ndim == 2:
        decoded = 1
        scale = 65535.0 if arr.dtype == np.uint16 else 255.0
    elif arr.ndim == 3 and arr.shape[-1] == 3:
        decoded = 3
        scale = 255.0
    else:
        raise ContractViolation(f"unsupported image layout {arr.shape} in {path}")
    if decoded != channels:
        raise ContractViolation(
            f"{path} decodes to {decoded} channel(s), manifest declares {channels}"
        )
    return arr.astype(np.float32) / scale


def load_image(record: SampleRecord, manifest: DatasetManifest, audit: AuditLog | None = None) -> Image2D:
    arr = _decode_image(record.image_path, manifest.channels)
    if audit is not None:
        audit.record("image_read", record.id)
    return preprocess_image(
        arr,
        normalization=manifest.normalization,
        fixed_mean=manifest.fixed_mean,
        fixed_std=manifest.fixed_std,
    )


def load_mask(
    record: SampleRecord,
    class_count: int = 2,
    audit: AuditLog | None = None,
    purpose: str = "",
) -> MaskMap:
    """Read a ground-truth mask. Always leaves an audit trace when a log is given."""
    if record.mask_path is None:
        raise ContractViolation(f"record {record.id!r} has no mask")
    if audit is not None:
        audit.record("mask_read", f"{record.id} purpose={purpose}")
    arr = np.asarray(Image.open(record.mask_path))
    return preprocess_mask(arr, class_count=class_count)


def estimate_class_ratio(
    manifest: DatasetManifest, class_count: int = 2, audit: AuditLog | None = None
) -> list[float]:
    """Mean per-class pixel fraction over all masks; entries sum to 1.

    Meant to run in the source phase, before source data is discarded; the
    result rides along in the source checkpoint for the AdaEnt-style baseline.
    """
    if not manifest.records:
        raise ContractViolation("manifest has no records")
    totals = torch.zeros(class_count, dtype=torch.float64)
    for record in manifest.records:
        mask = load_mask(record, class_count, audit=audit, purpose="class-ratio-estimation")
        counts = torch.bincount(mask.labels.flatten(), minlength=class_count).double()
        totals += counts / counts.sum()
    ratio = totals / len(manifest.records)
    return [float(x) for x in ratio]


def filter_nonempty_masks(
    manifest: DatasetManifest, foreground_class: int = 1, audit: AuditLog | None = None
) -> DatasetManifest:
    """Drop records whose mask has no foreground pixels (source data only).

    Stands in for upstream slice selection on volumetric datasets.
    """
    kept = []
    for record in manifest.records:
        mask = load_mask(record, audit=audit, purpose="slice-filtering")
        if bool((mask.labels == foreground_class).any()):
            kept.append(record)
    return DatasetManifest(
        name=manifest.name,
        records=tuple(kept),
        channels=manifest.channels,
        normalization=manifest.normalization,
        fixed_mean=manifest.fixed_mean,
        fixed_std=manifest.fixed_std,
    )
