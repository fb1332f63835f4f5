"""Loss functions for source training, shape-prior training and adaptation.

Every function accepts either the typed raster containers or raw tensors; raw
tensors may carry a leading batch axis, in which case pixel means run over the
whole batch. All logs are natural, probabilities are clamped to
[LOG_EPS, 1] before any log, and everything is differentiable so the same
code serves both training and the finite-difference gradient checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import ContractViolation
from .types import FeatureMap, MaskMap, ProbMap

LOG_EPS = 1e-7
DICE_SMOOTH = 1.0
# keeps the norm differentiable at the origin without shifting values measurably
_NORM_EPS = 1e-12


@dataclass(frozen=True)
class LossWeights:
    """Weights of the composite losses plus the Ring target norm.

    w_d, w_r weight Dice/Ring in the supervised source loss; w_d_prime weights
    Dice in the shape-prior loss; w_r_prime weights Ring during adaptation;
    ring_target is the radius R every positional feature norm is pulled to.
    """

    w_d: float = 1.0
    w_r: float = 1.0
    w_d_prime: float = 1.0
    w_r_prime: float = 1.0
    ring_target: float = 1.0

    def __post_init__(self):
        for name in ("w_d", "w_r", "w_d_prime", "w_r_prime"):
            if getattr(self, name) < 0:
                raise ContractViolation(f"{name} must be >= 0")
        if self.ring_target <= 0:
            raise ContractViolation("ring_target must be > 0")


def _probs_tensor(p) -> torch.Tensor:
    t = p.probs if isinstance(p, ProbMap) else p
    if t.ndim == 3:
        t = t.unsqueeze(0)
    if t.ndim != 4:
        raise ContractViolation(f"expected probs [K,H,W] or [B,K,H,W], got {tuple(t.shape)}")
    return t


def _mask_tensor(m) -> torch.Tensor:
    t = m.labels if isinstance(m, MaskMap) else m
    if t.ndim == 2:
        t = t.unsqueeze(0)
    if t.ndim != 3:
        raise ContractViolation(f"expected mask [H,W] or [B,H,W], got {tuple(t.shape)}")
    return t.long()


def _features_tensor(f) -> torch.Tensor:
    t = f.features if isinstance(f, FeatureMap) else f
    if t.ndim == 3:
        t = t.unsqueeze(0)
    if t.ndim != 4:
        raise ContractViolation(f"expected features [C,H,W] or [B,C,H,W], got {tuple(t.shape)}")
    if t.numel() == 0:
        raise ContractViolation("feature map is empty")
    return t


def cross_entropy_loss(p, truth) -> torch.Tensor:
    """Mean over pixels of -log p(true class)."""
    probs = _probs_tensor(p)
    labels = _mask_tensor(truth)
    if probs.shape[0] != labels.shape[0] or probs.shape[2:] != labels.shape[1:]:
        raise ContractViolation(
            f"shape mismatch: probs {tuple(probs.shape)} vs mask {tuple(labels.shape)}"
        )
    picked = probs.gather(1, labels.unsqueeze(1)).squeeze(1)
    return -torch.log(picked.clamp(min=LOG_EPS)).mean()


def dice_loss(p, truth, smooth: float = DICE_SMOOTH, foreground_class: int = 1) -> torch.Tensor:
    """Soft Dice complement on the foreground channel, no binarization.

    1 - (2 * sum(p_fg * t) + smooth) / (sum(p_fg) + sum(t) + smooth)
    with sums over all pixels (and the batch axis when present).
    """
    if smooth <= 0:
        raise ContractViolation("smooth must be > 0")
    probs = _probs_tensor(p)
    labels = _mask_tensor(truth)
    if probs.shape[0] != labels.shape[0] or probs.shape[2:] != labels.shape[1:]:
        raise ContractViolation(
            f"shape mismatch: probs {tuple(probs.shape)} vs mask {tuple(labels.shape)}"
        )
    p_fg = probs[:, foreground_class]
    t = (labels == foreground_class).to(probs.dtype)
    inter = (p_fg * t).sum()
    denom = p_fg.sum() + t.sum()
    return 1.0 - (2.0 * inter + smooth) / (denom + smooth)


def ring_loss(f, ring_target: float) -> torch.Tensor:
    """Mean over positions of (||F(h,w)||_2 - R)^2."""
    if ring_target <= 0:
        raise ContractViolation("ring_target must be > 0")
    feats = _features_tensor(f)
    norms = torch.sqrt((feats * feats).sum(dim=1) + _NORM_EPS)
    return ((norms - ring_target) ** 2).mean()


def entropy_loss(p) -> torch.Tensor:
    """Shannon entropy of the per-pixel class distribution, averaged over pixels."""
    probs = _probs_tensor(p)
    plogp = probs * torch.log(probs.clamp(min=LOG_EPS))
    return -plogp.sum(dim=1).mean()


def source_loss(p, truth, f, w: LossWeights) -> torch.Tensor:
    """Supervised source objective: CE + w_d * Dice + w_r * Ring.

    The feature map is only touched when w_r > 0, so passing f=None is legal
    for the Ring-free source network.
    """
    total = cross_entropy_loss(p, truth) + w.w_d * dice_loss(p, truth)
    if w.w_r > 0:
        total = total + w.w_r * ring_loss(f, w.ring_target)
    return total


def shape_prior_loss(p, truth, w: LossWeights) -> torch.Tensor:
    """Autoencoder reconstruction objective: CE + w_d' * Dice against the clean mask."""
    return cross_entropy_loss(p, truth) + w.w_d_prime * dice_loss(p, truth)


def adaptation_loss(p_final, f, w: LossWeights) -> torch.Tensor:
    """Label-free target objective: entropy of the final mask + w_r' * Ring.

    p_final is the pipeline's final prediction (shape-prior output when a
    prior is in the graph, the segmenter's output otherwise); f is always the
    segmentation network's own feature map. There is no mask argument by
    construction.
    """
    total = entropy_loss(p_final)
    if w.w_r_prime > 0:
        total = total + w.w_r_prime * ring_loss(f, w.ring_target)
    return total


def class_ratio_prior_loss(p, prior_ratio) -> torch.Tensor:
    """KL(prior_ratio || mean-over-pixels of p), with epsilon clamping.

    Used by the AdaEnt-style baseline to keep entropy minimization from
    collapsing onto a single class.
    """
    probs = _probs_tensor(p)
    prior = torch.as_tensor(prior_ratio, dtype=probs.dtype)
    if prior.ndim != 1 or prior.shape[0] != probs.shape[1]:
        raise ContractViolation(f"prior_ratio must have length K={probs.shape[1]}")
    if bool((prior < 0).any()) or abs(float(prior.sum()) - 1.0) > 1e-6:
        raise ContractViolation("prior_ratio entries must be non-negative and sum to 1")
    mean_p = probs.mean(dim=(0, 2, 3)).clamp(min=LOG_EPS, max=1.0 - LOG_EPS)
    log_prior = torch.log(prior.clamp(min=LOG_EPS))
    terms = torch.where(
        prior > 0,
        prior * (log_prior - torch.log(mean_p)),
        torch.zeros_like(mean_p),
    )
    return terms.sum()
