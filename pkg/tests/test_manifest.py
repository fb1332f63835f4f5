import numpy as np
import pytest
import torch
from PIL import Image

from sfuda_seg.audit import AuditLog
from sfuda_seg.errors import ContractViolation, MissingArtifact
from sfuda_seg.manifest import (
    DatasetManifest,
    estimate_class_ratio,
    filter_nonempty_masks,
    load_image,
    load_manifest,
    load_mask,
    save_manifest,
)
from sfuda_seg.types import SampleRecord


def write_sample(root, stem, fg_rows=0, size=32, value=180):
    img = np.full((size, size), value, dtype=np.uint8)
    mask = np.zeros((size, size), dtype=np.uint8)
    if fg_rows:
        mask[:fg_rows, :] = 1
    img_path = root / f"{stem}_img.png"
    mask_path = root / f"{stem}_mask.png"
    Image.fromarray(img).save(img_path)
    Image.fromarray(mask).save(mask_path)
    return SampleRecord(id=stem, image_path=img_path, mask_path=mask_path, domain_tag="source")


def make_manifest(tmp_path, n=3, fg_rows=(8, 16, 0)):
    records = [write_sample(tmp_path, f"s{i}", fg_rows=fg_rows[i % len(fg_rows)]) for i in range(n)]
    return DatasetManifest(name="toy", records=tuple(records), channels=1)


def test_save_load_roundtrip(tmp_path):
    manifest = make_manifest(tmp_path)
    save_manifest(manifest, tmp_path / "manifest.csv")
    loaded = load_manifest(tmp_path / "manifest.csv", domain_tag="source")
    assert loaded.name == "toy"
    assert loaded.ids == manifest.ids
    assert loaded.channels == 1


def test_load_missing_manifest(tmp_path):
    with pytest.raises(MissingArtifact):
        load_manifest(tmp_path / "absent.csv")


def test_load_detects_missing_image(tmp_path):
    manifest = make_manifest(tmp_path)
    save_manifest(manifest, tmp_path / "manifest.csv")
    manifest.records[0].image_path.unlink()
    with pytest.raises(MissingArtifact):
        load_manifest(tmp_path / "manifest.csv")


def test_channel_mismatch_detected(tmp_path):
    record = write_sample(tmp_path, "gray")
    manifest = DatasetManifest(name="x", records=(record,), channels=3)
    with pytest.raises(ContractViolation):
        load_image(record, manifest)


def test_image_loading_is_audited_and_normalized(tmp_path):
    rng = np.random.default_rng(0)
    img_path = tmp_path / "noisy.png"
    Image.fromarray(rng.integers(0, 255, size=(64, 64), dtype=np.uint8)).save(img_path)
    record = SampleRecord(id="n", image_path=img_path, domain_tag="target")
    manifest = DatasetManifest(name="x", records=(record,), channels=1)
    audit = AuditLog()
    image = load_image(record, manifest, audit)
    assert image.pixels.shape == (1, 256, 256)
    assert abs(float(image.pixels.mean())) < 1e-4
    assert [e.event for e in audit.events] == ["image_read"]


def test_mask_reads_always_leave_audit_trace(tmp_path):
    record = write_sample(tmp_path, "a", fg_rows=4)
    audit = AuditLog()
    with audit.phase("somephase"):
        load_mask(record, audit=audit, purpose="evaluation")
    reads = audit.mask_reads()
    assert len(reads) == 1
    assert reads[0].phase == "somephase"
    assert "purpose=evaluation" in reads[0].detail


def test_class_ratio_all_background(tmp_path):
    manifest = make_manifest(tmp_path, n=2, fg_rows=(0, 0))
    assert estimate_class_ratio(manifest) == pytest.approx([1.0, 0.0])


def test_class_ratio_hand_mean(tmp_path):
    # fg fractions 0.25 and 0.5 -> mean (0.625, 0.375)
    manifest = make_manifest(tmp_path, n=2, fg_rows=(8, 16))
    ratio = estimate_class_ratio(manifest)
    assert ratio == pytest.approx([1 - 0.375, 0.375])
    assert sum(ratio) == pytest.approx(1.0)


def test_class_ratio_requires_masks(tmp_path):
    record = SampleRecord(id="t", image_path=tmp_path / "x.png", domain_tag="target")
    manifest = DatasetManifest(name="x", records=(record,), channels=1)
    with pytest.raises(ContractViolation):
        estimate_class_ratio(manifest)


def test_filter_nonempty_masks(tmp_path):
    manifest = make_manifest(tmp_path, n=3, fg_rows=(8, 0, 16))
    filtered = filter_nonempty_masks(manifest)
    assert [r.id for r in filtered.records] == ["s0", "s2"]
