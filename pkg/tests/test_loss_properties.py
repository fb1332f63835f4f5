"""Analytic bounds and structural properties of the losses."""

import inspect
import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from sfuda_seg.losses import (
    LossWeights,
    adaptation_loss,
    dice_loss,
    entropy_loss,
    ring_loss,
    source_loss,
)
from sfuda_seg.types import ProbMap


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 5))
def test_entropy_within_analytic_bounds(seed, k):
    gen = torch.Generator().manual_seed(seed)
    probs = torch.softmax(torch.randn(k, 4, 4, generator=gen) * 3, dim=0)
    value = float(entropy_loss(ProbMap(probs=probs)))
    assert -1e-6 <= value <= math.log(k) + 1e-6


@pytest.mark.parametrize("k", [2, 3, 5])
def test_entropy_equality_cases(k):
    uniform = ProbMap(probs=torch.full((k, 3, 3), 1.0 / k))
    assert float(entropy_loss(uniform)) == pytest.approx(math.log(k), abs=1e-6)
    labels = torch.zeros(3, 3, dtype=torch.int64)
    one_hot = torch.zeros(k, 3, 3)
    one_hot[0] = 1.0
    assert float(entropy_loss(ProbMap(probs=one_hot))) == pytest.approx(0.0, abs=1e-6)


def test_entropy_maximal_only_at_uniform():
    # anything bounded away from uniform stays below ln K
    probs = torch.full((2, 4, 4), 0.5)
    probs[0] += 0.05
    probs[1] -= 0.05
    assert float(entropy_loss(ProbMap(probs=probs))) < math.log(2) - 1e-4


def test_ring_nonnegative_and_zero_iff_norms_on_ring():
    # 1000 random feature maps: loss >= 0, and small loss forces norms ~ R
    rng = np.random.default_rng(0)
    radius = 1.0
    for _ in range(1000):
        c = int(rng.integers(1, 5))
        h = int(rng.integers(1, 5))
        w = int(rng.integers(1, 5))
        feats = torch.tensor(rng.normal(size=(c, h, w)), dtype=torch.float64)
        value = float(ring_loss(feats, radius))
        assert value >= 0.0
        norms = feats.pow(2).sum(dim=0).sqrt()
        worst = float((norms - radius).abs().max())
        if worst > 1e-3:
            assert value > 0.0
        # forward direction: scaling every vector onto the ring kills the loss
        scaled = feats / norms.clamp(min=1e-9) * radius
        assert float(ring_loss(scaled, radius)) == pytest.approx(0.0, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_dice_loss_bounded_and_monotone_toward_truth(seed):
    gen = torch.Generator().manual_seed(seed)
    labels = torch.randint(0, 2, (4, 4), generator=gen)
    fg = torch.rand(4, 4, generator=gen)
    t = labels.float()
    previous = None
    for alpha in (0.0, 0.25, 0.5, 0.75, 1.0):
        moved = fg + alpha * (t - fg)
        probs = ProbMap(probs=torch.stack([1 - moved, moved]))
        value = float(dice_loss(probs, labels))
        assert -1e-9 <= value <= 1.0 + 1e-9
        if previous is not None:
            assert value <= previous + 1e-7
        previous = value


def test_adaptation_loss_is_label_free_by_signature():
    params = inspect.signature(adaptation_loss).parameters
    assert not any(name in params for name in ("truth", "mask", "labels", "y"))


def test_composites_linear_in_weights():
    gen = torch.Generator().manual_seed(42)
    probs = ProbMap(probs=torch.softmax(torch.randn(2, 4, 4, generator=gen), dim=0))
    labels = torch.randint(0, 2, (4, 4), generator=gen)
    feats = torch.randn(3, 4, 4, generator=gen)
    delta = 0.618
    base = LossWeights(w_d=1.0, w_r=1.0)
    bumped = LossWeights(w_d=1.0 + delta, w_r=1.0)
    diff = float(source_loss(probs, labels, feats, bumped)) - float(
        source_loss(probs, labels, feats, base)
    )
    assert diff == pytest.approx(delta * float(dice_loss(probs, labels)), rel=1e-5)
