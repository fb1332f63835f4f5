"""Evaluation-side raster operations: hard Dice coefficient and binarization."""

from __future__ import annotations

import torch

from .errors import ContractViolation, UnsupportedConfiguration
from .types import MaskMap, ProbMap


def dice_coefficient(pred: MaskMap, truth: MaskMap, foreground_class: int = 1) -> float:
    """Dice overlap 2|P∩T| / (|P| + |T|) of the foreground pixel sets.

    Returns 1.0 when both foreground sets are empty (perfect agreement on
    an all-background slice).
    """
    if pred.shape != truth.shape:
        raise ContractViolation(f"shape mismatch: pred {pred.shape} vs truth {truth.shape}")
    if foreground_class >= pred.class_count or foreground_class >= truth.class_count:
        raise ContractViolation(f"foreground_class {foreground_class} out of range")
    p = pred.labels == foreground_class
    t = truth.labels == foreground_class
    p_size = int(p.sum())
    t_size = int(t.sum())
    if p_size + t_size == 0:
        return 1.0
    inter = int((p & t).sum())
    return 2.0 * inter / (p_size + t_size)


def binarize(p: ProbMap, threshold: float = 0.5) -> MaskMap:
    """Threshold the foreground channel of a binary ProbMap into a MaskMap.

    A pixel is labeled 1 iff probs[1] >= threshold.
    """
    if p.class_count != 2:
        raise UnsupportedConfiguration(f"binarize requires K=2, got K={p.class_count}")
    if not (0.0 < threshold < 1.0):
        raise ContractViolation(f"threshold must lie in (0,1), got {threshold}")
    labels = (p.probs[1] >= threshold).to(torch.int64)
    return MaskMap(labels=labels, class_count=2)
