import math

import pytest
import torch

from sfuda_seg.errors import ContractViolation
from sfuda_seg.types import FeatureMap, Image2D, MaskMap, ProbMap, SampleRecord


def test_image_requires_chw_and_finite():
    Image2D(pixels=torch.zeros(1, 8, 8))
    with pytest.raises(ContractViolation):
        Image2D(pixels=torch.zeros(8, 8))
    with pytest.raises(ContractViolation):
        Image2D(pixels=torch.zeros(2, 8, 8))  # bad channel count
    bad = torch.zeros(1, 4, 4)
    bad[0, 0, 0] = math.nan
    with pytest.raises(ContractViolation):
        Image2D(pixels=bad)


def test_mask_label_range_enforced():
    MaskMap(labels=torch.tensor([[0, 1]]), class_count=2)
    with pytest.raises(ContractViolation):
        MaskMap(labels=torch.tensor([[0, 2]]), class_count=2)
    with pytest.raises(ContractViolation):
        MaskMap(labels=torch.tensor([[-1, 0]]), class_count=2)
    with pytest.raises(ContractViolation):
        MaskMap(labels=torch.tensor([[0.0, 1.0]]))


def test_probmap_normalization_enforced():
    ProbMap(probs=torch.full((2, 3, 3), 0.5))
    with pytest.raises(ContractViolation):
        ProbMap(probs=torch.full((2, 3, 3), 0.6))
    with pytest.raises(ContractViolation):
        ProbMap(probs=torch.tensor([[[1.2]], [[-0.2]]]))


def test_featuremap_rejects_empty_and_nonfinite():
    FeatureMap(features=torch.randn(4, 2, 2))
    with pytest.raises(ContractViolation):
        FeatureMap(features=torch.zeros(0, 2, 2))
    bad = torch.zeros(1, 2, 2)
    bad[0, 0, 0] = math.inf
    with pytest.raises(ContractViolation):
        FeatureMap(features=bad)


def test_source_record_needs_mask():
    SampleRecord(id="a", image_path="x.png", mask_path="y.png", domain_tag="source")
    SampleRecord(id="b", image_path="x.png", domain_tag="target")
    with pytest.raises(ContractViolation):
        SampleRecord(id="c", image_path="x.png", domain_tag="source")
    with pytest.raises(ContractViolation):
        SampleRecord(id="d", image_path="x.png", domain_tag="elsewhere")
