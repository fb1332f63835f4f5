"""Training procedures: source phase, shape prior, target adaptation, baselines.

All loops share the same skeleton: Adam, closed-form cosine annealing of the
learning rate, per-epoch validation, and selection of the epoch with the
lowest validation loss (earliest epoch on ties). Adaptation validates on the
label-free adaptation loss itself so the source-free constraint holds end to
end; ground-truth masks never enter any adaptation optimization path, which
the audit log can prove.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import torch
import torch.nn.functional as F

from .audit import AuditLog
from .checkpoints import make_checkpoint, module_digest, restore_module
from .config import ExperimentConfig
from .errors import ContractViolation
from .folds import FoldEntry
from .losses import (
    adaptation_loss,
    class_ratio_prior_loss,
    cross_entropy_loss,
    dice_loss,
    entropy_loss,
    shape_prior_loss,
    source_loss,
)
from .manifest import DatasetManifest, estimate_class_ratio, load_image, load_mask
from .networks import SegmentationNetwork, ShapePriorNetwork, freeze, one_hot_probs
from .types import Checkpoint, SampleRecord


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    val_loss: float


def cosine_lr(initial_lr: float, epoch: int, total_epochs: int) -> float:
    """Half-cosine decay from initial_lr at epoch 0 to 0 at the final epoch."""
    if total_epochs < 1:
        raise ContractViolation("total_epochs must be >= 1")
    if not 0 <= epoch < total_epochs:
        raise ContractViolation(f"epoch {epoch} outside schedule of {total_epochs}")
    if total_epochs == 1:
        return initial_lr
    return initial_lr * 0.5 * (1.0 + math.cos(math.pi * epoch / (total_epochs - 1)))


def select_best_checkpoint(history: Sequence) -> int:
    """Index of the entry with the lowest validation loss, earliest on ties."""
    if not history:
        raise ContractViolation("cannot select from an empty history")
    return min(range(len(history)), key=lambda i: (history[i].val_loss, i))


def grid_search_lr(candidates: Sequence[float], objective: Callable[[float], float]) -> float:
    """Candidate minimizing the (already fold-averaged) validation objective.

    Ties break toward the smaller learning rate.
    """
    cands = list(candidates)
    if not cands:
        raise ContractViolation("lr grid must not be empty")
    return min(cands, key=lambda lr: (float(objective(lr)), lr))


def _phase_seed(seed: int, offset: int) -> int:
    return (seed * 9973 + offset) % (2**31 - 1)


def _set_lr(optimizer: torch.optim.Optimizer, lr: float) -> None:
    for group in optimizer.param_groups:
        group["lr"] = lr


def _make_optimizer(module: torch.nn.Module, lr: float) -> torch.optim.Optimizer:
    return torch.optim.Adam(module.parameters(), lr=lr, betas=(0.9, 0.999), eps=1e-8)


def _epoch_batches(n: int, batch_size: int, gen: torch.Generator):
    perm = torch.randperm(n, generator=gen)
    for start in range(0, n, batch_size):
        yield perm[start : start + batch_size]


def _eval_batches(n: int, batch_size: int):
    for start in range(0, n, batch_size):
        yield torch.arange(start, min(start + batch_size, n))


def _stack_images(records, manifest: DatasetManifest, audit: AuditLog | None) -> torch.Tensor:
    return torch.stack([load_image(r, manifest, audit).pixels for r in records])


def _stack_masks(records, class_count: int, audit: AuditLog | None, purpose: str) -> torch.Tensor:
    return torch.stack(
        [load_mask(r, class_count, audit, purpose).labels for r in records]
    )


def _records_for(manifest: DatasetManifest, ids: Sequence[str]) -> list[SampleRecord]:
    by_id = {r.id: r for r in manifest.records}
    missing = [i for i in ids if i not in by_id]
    if missing:
        raise ContractViolation(f"fold references unknown record ids {missing}")
    return [by_id[i] for i in ids]


def _split_train_val(n: int, seed: int, val_fraction: float = 0.2):
    """Seeded 80/20 split used in the source phase."""
    if n < 2:
        raise ContractViolation("need at least 2 samples to split train/validation")
    gen = torch.Generator().manual_seed(seed)
    perm = torch.randperm(n, generator=gen).tolist()
    n_val = max(1, round(n * val_fraction))
    return perm[n_val:], perm[:n_val]


def augment_masks(masks: torch.Tensor, gen: torch.Generator) -> torch.Tensor:
    """Family-preserving mask augmentation: random flips and translations.

    The shape prior must generalize from a handful of source masks; flips and
    modest rolls stay inside the same shape distribution.
    """
    out = masks.clone()
    max_shift = max(1, out.shape[-1] // 8)
    for i in range(out.shape[0]):
        if float(torch.rand((), generator=gen)) < 0.5:
            out[i] = out[i].flip(-1)
        if float(torch.rand((), generator=gen)) < 0.5:
            out[i] = out[i].flip(-2)
        dy = int(torch.randint(-max_shift, max_shift + 1, (), generator=gen))
        dx = int(torch.randint(-max_shift, max_shift + 1, (), generator=gen))
        out[i] = out[i].roll((dy, dx), dims=(0, 1))
    return out


def corrupt_masks(masks: torch.Tensor, gen: torch.Generator, prob: float = 0.5) -> torch.Tensor:
    """Random morphological noise on binary masks (dilate / erode / speckle).

    Each sample is corrupted independently with the given probability; masks
    with more than two classes pass through unchanged.
    """
    if int(masks.max()) > 1:
        return masks
    out = masks.clone()
    for i in range(out.shape[0]):
        if float(torch.rand((), generator=gen)) >= prob:
            continue
        fg = (out[i] == 1).float()[None, None]
        op = int(torch.randint(0, 3, (), generator=gen))
        if op in (0, 1):
            radius = int(torch.randint(1, 4, (), generator=gen))
            kernel = 2 * radius + 1
            if op == 0:
                fg = F.max_pool2d(fg, kernel, stride=1, padding=radius)
            else:
                fg = 1.0 - F.max_pool2d(1.0 - fg, kernel, stride=1, padding=radius)
        else:
            rate = 0.02 + 0.06 * float(torch.rand((), generator=gen))
            flip = torch.rand(fg.shape, generator=gen) < rate
            fg = torch.where(flip, 1.0 - fg, fg)
        out[i] = fg[0, 0].long()
    return out


class _BestTracker:
    """Keeps the state snapshot of the earliest lowest-validation epoch."""

    def __init__(self, module: torch.nn.Module):
        self.module = module
        self.best_val = math.inf
        self.best_epoch = -1
        self.state = None

    def update(self, epoch: int, val_loss: float) -> None:
        if val_loss < self.best_val:
            self.best_val = val_loss
            self.best_epoch = epoch
            self.state = {k: v.detach().clone() for k, v in self.module.state_dict().items()}


def train_source_segmentation(
    config: ExperimentConfig,
    source: DatasetManifest,
    audit: AuditLog | None = None,
) -> tuple[Checkpoint, list[EpochRecord]]:
    """Supervised source training of the segmentation network.

    Uses the Ring-free type-1 loss when the planned adaptation setting is S
    and the Ring-bearing type-2 loss otherwise. Also estimates the source
    class ratio and stores it in the checkpoint so the AdaEnt-style baseline
    stays source-free later on.
    """
    if not source.fully_labeled():
        raise ContractViolation("source manifest must be fully labeled")
    audit = audit if audit is not None else AuditLog()
    weights = config.resolved_weights()
    epochs = config.epochs_for("source")
    base_lr = config.lr_for("source")
    torch.manual_seed(_phase_seed(config.seed, 1))

    net = SegmentationNetwork(config.network)
    k = config.network.class_count
    with audit.phase("source-train"):
        class_ratio = estimate_class_ratio(source, k, audit=audit)
        images = _stack_images(source.records, source, audit)
        masks = _stack_masks(source.records, k, audit, purpose="source-supervision")
    train_idx, val_idx = _split_train_val(len(source.records), config.seed)
    train_x, train_y = images[train_idx], masks[train_idx]
    val_x, val_y = images[val_idx], masks[val_idx]

    opt = _make_optimizer(net, base_lr)
    gen = torch.Generator().manual_seed(_phase_seed(config.seed, 2))
    history: list[EpochRecord] = []
    tracker = _BestTracker(net)
    for epoch in range(epochs):
        lr = cosine_lr(base_lr, epoch, epochs)
        _set_lr(opt, lr)
        net.train()
        train_losses = []
        for batch in _epoch_batches(len(train_x), config.batch_size, gen):
            opt.zero_grad()
            probs, feats = net(train_x[batch])
            loss = source_loss(probs, train_y[batch], feats, weights)
            loss.backward()
            opt.step()
            train_losses.append(float(loss.detach()))
        net.eval()
        with torch.no_grad():
            val_losses = []
            for batch in _eval_batches(len(val_x), config.batch_size):
                probs, feats = net(val_x[batch])
                val_losses.append(
                    (float(source_loss(probs, val_y[batch], feats, weights)), len(batch))
                )
        val_loss = sum(l * n for l, n in val_losses) / sum(n for _, n in val_losses)
        history.append(EpochRecord(epoch, lr, sum(train_losses) / len(train_losses), val_loss))
        tracker.update(epoch, val_loss)

    best = select_best_checkpoint(history)
    net.load_state_dict(tracker.state)
    ckpt = make_checkpoint(
        net,
        phase="source-segmentation",
        epoch=best,
        validation_loss=history[best].val_loss,
        class_ratio=class_ratio,
        config=config.to_dict(),
    )
    return ckpt, history


def train_shape_prior(
    config: ExperimentConfig,
    source: DatasetManifest,
    audit: AuditLog | None = None,
) -> tuple[Checkpoint, list[EpochRecord]]:
    """Train the shape-prior autoencoder on source ground-truth masks.

    Inputs are one-hot masks, corrupted with random morphological noise when
    config.corrupt_prior_input is set; the reconstruction target is always
    the clean mask. Validation reconstructs clean inputs.
    """
    if not source.fully_labeled():
        raise ContractViolation("source manifest must be fully labeled")
    audit = audit if audit is not None else AuditLog()
    epochs = config.epochs_for("prior")
    base_lr = config.lr_for("prior")
    torch.manual_seed(_phase_seed(config.seed, 3))

    net = ShapePriorNetwork(config.shape_prior)
    k = config.shape_prior.class_count
    with audit.phase("shape-prior-train"):
        masks = _stack_masks(source.records, k, audit, purpose="shape-prior-supervision")
    train_idx, val_idx = _split_train_val(len(source.records), config.seed)
    train_y, val_y = masks[train_idx], masks[val_idx]

    opt = _make_optimizer(net, base_lr)
    gen = torch.Generator().manual_seed(_phase_seed(config.seed, 4))
    corrupt_gen = torch.Generator().manual_seed(_phase_seed(config.seed, 5))
    history: list[EpochRecord] = []
    tracker = _BestTracker(net)
    for epoch in range(epochs):
        lr = cosine_lr(base_lr, epoch, epochs)
        _set_lr(opt, lr)
        net.train()
        train_losses = []
        for batch in _epoch_batches(len(train_y), config.batch_size, gen):
            clean = train_y[batch]
            if config.augment_prior_input:
                clean = augment_masks(clean, corrupt_gen)
            fed = corrupt_masks(clean, corrupt_gen) if config.corrupt_prior_input else clean
            opt.zero_grad()
            recon = net(one_hot_probs(fed, k))
            loss = shape_prior_loss(recon, clean, config.weights)
            loss.backward()
            opt.step()
            train_losses.append(float(loss.detach()))
        net.eval()
        with torch.no_grad():
            val_losses = []
            for batch in _eval_batches(len(val_y), config.batch_size):
                recon = net(one_hot_probs(val_y[batch], k))
                val_losses.append(
                    (float(shape_prior_loss(recon, val_y[batch], config.weights)), len(batch))
                )
        val_loss = sum(l * n for l, n in val_losses) / sum(n for _, n in val_losses)
        history.append(EpochRecord(epoch, lr, sum(train_losses) / len(train_losses), val_loss))
        tracker.update(epoch, val_loss)

    best = select_best_checkpoint(history)
    net.load_state_dict(tracker.state)
    ckpt = make_checkpoint(
        net,
        phase="shape-prior",
        epoch=best,
        validation_loss=history[best].val_loss,
        config=config.to_dict(),
    )
    return ckpt, history


def _label_free_val_loss(f, g, val_x, weights, batch_size) -> float:
    f.eval()
    with torch.no_grad():
        losses = []
        for batch in _eval_batches(len(val_x), batch_size):
            probs, feats = f(val_x[batch])
            p_final = g(probs) if g is not None else probs
            losses.append((float(adaptation_loss(p_final, feats, weights)), len(batch)))
    return sum(l * n for l, n in losses) / sum(n for _, n in losses)


def adapt_target(
    config: ExperimentConfig,
    source_ckpt: Checkpoint,
    prior_ckpt: Checkpoint | None,
    target: DatasetManifest,
    fold: FoldEntry,
    audit: AuditLog | None = None,
) -> tuple[Checkpoint, dict]:
    """Source-free fine-tuning of the segmenter on one fold's unlabeled split.

    Per the setting: N uses the segmenter alone with entropy + Ring; S pipes
    predictions through the frozen shape prior and drops the Ring term; NS
    uses both. Model selection minimizes the label-free adaptation loss on
    the fold's validation group. The prior's digest is asserted unchanged.
    """
    setting = config.setting
    weights = config.resolved_weights()
    if setting in ("S", "NS") and prior_ckpt is None:
        raise ContractViolation(f"setting {setting} requires a shape-prior checkpoint")
    audit = audit if audit is not None else AuditLog()
    epochs = config.epochs_for("adapt")
    base_lr = config.lr_for("adapt")
    torch.manual_seed(_phase_seed(config.seed, 10 + fold.index))

    f = SegmentationNetwork(config.network)
    restore_module(f, source_ckpt)
    f_digest_before = module_digest(f)
    g = None
    g_digest_before = None
    if setting != "N":
        g = ShapePriorNetwork(config.shape_prior)
        restore_module(g, prior_ckpt)
        freeze(g)
        g_digest_before = module_digest(g)

    history: list[EpochRecord] = []
    tracker = _BestTracker(f)
    with audit.phase(f"adapt-{setting}-fold{fold.index}/optimize"):
        train_x = _stack_images(_records_for(target, fold.train_ids), target, audit)
        val_x = _stack_images(_records_for(target, fold.val_ids), target, audit)
        opt = _make_optimizer(f, base_lr)
        gen = torch.Generator().manual_seed(_phase_seed(config.seed, 20 + fold.index))
        for epoch in range(epochs):
            lr = cosine_lr(base_lr, epoch, epochs)
            _set_lr(opt, lr)
            f.train()
            train_losses = []
            for batch in _epoch_batches(len(train_x), config.batch_size, gen):
                opt.zero_grad()
                probs, feats = f(train_x[batch])
                p_final = g(probs) if g is not None else probs
                loss = adaptation_loss(p_final, feats, weights)
                loss.backward()
                opt.step()
                train_losses.append(float(loss.detach()))
            val_loss = _label_free_val_loss(f, g, val_x, weights, config.batch_size)
            history.append(
                EpochRecord(epoch, lr, sum(train_losses) / len(train_losses), val_loss)
            )
            tracker.update(epoch, val_loss)

    if g is not None:
        g_digest_after = module_digest(g)
        if g_digest_after != g_digest_before:
            raise ContractViolation("shape prior changed during adaptation")
    best = select_best_checkpoint(history)
    f.load_state_dict(tracker.state)
    ckpt = make_checkpoint(
        f,
        phase=f"adapted-{setting}",
        fold=fold.index,
        epoch=best,
        validation_loss=history[best].val_loss,
        class_ratio=source_ckpt.metadata.get("class_ratio"),
        config=config.to_dict(),
    )
    fragment = {
        "setting": setting,
        "fold": fold.index,
        "selected_epoch": best,
        "f_digest_before": f_digest_before,
        "f_digest_after": ckpt.digest,
        "g_digest_before": g_digest_before,
        "g_digest_after": g_digest_before if g is None else g_digest_after,
        "history": history,
    }
    return ckpt, fragment


def adapt_adaent_style(
    config: ExperimentConfig,
    source_ckpt: Checkpoint,
    target: DatasetManifest,
    fold: FoldEntry,
    audit: AuditLog | None = None,
) -> tuple[Checkpoint, dict]:
    """Entropy + class-ratio-prior adaptation (no shape prior, no Ring).

    The class ratio comes from the source checkpoint's metadata, estimated
    during the source phase, so no source data is touched here.
    """
    ratio = source_ckpt.metadata.get("class_ratio")
    if ratio is None:
        raise ContractViolation("source checkpoint carries no class_ratio metadata")
    audit = audit if audit is not None else AuditLog()
    epochs = config.epochs_for("adapt")
    base_lr = config.lr_for("adapt")
    lam = config.adaent_prior_weight
    torch.manual_seed(_phase_seed(config.seed, 40 + fold.index))

    f = SegmentationNetwork(config.network)
    restore_module(f, source_ckpt)

    def batch_loss(probs):
        return entropy_loss(probs) + lam * class_ratio_prior_loss(probs, ratio)

    history: list[EpochRecord] = []
    tracker = _BestTracker(f)
    with audit.phase(f"adaent-fold{fold.index}/optimize"):
        train_x = _stack_images(_records_for(target, fold.train_ids), target, audit)
        val_x = _stack_images(_records_for(target, fold.val_ids), target, audit)
        opt = _make_optimizer(f, base_lr)
        gen = torch.Generator().manual_seed(_phase_seed(config.seed, 50 + fold.index))
        for epoch in range(epochs):
            lr = cosine_lr(base_lr, epoch, epochs)
            _set_lr(opt, lr)
            f.train()
            train_losses = []
            for batch in _epoch_batches(len(train_x), config.batch_size, gen):
                opt.zero_grad()
                probs, _ = f(train_x[batch])
                loss = batch_loss(probs)
                loss.backward()
                opt.step()
                train_losses.append(float(loss.detach()))
            f.eval()
            with torch.no_grad():
                val_losses = []
                for batch in _eval_batches(len(val_x), config.batch_size):
                    probs, _ = f(val_x[batch])
                    val_losses.append((float(batch_loss(probs)), len(batch)))
            val_loss = sum(l * n for l, n in val_losses) / sum(n for _, n in val_losses)
            history.append(
                EpochRecord(epoch, lr, sum(train_losses) / len(train_losses), val_loss)
            )
            tracker.update(epoch, val_loss)

    best = select_best_checkpoint(history)
    f.load_state_dict(tracker.state)
    ckpt = make_checkpoint(
        f,
        phase="adaent-style",
        fold=fold.index,
        epoch=best,
        validation_loss=history[best].val_loss,
        config=config.to_dict(),
    )
    return ckpt, {"fold": fold.index, "selected_epoch": best, "history": history}


def finetune_oracle(
    config: ExperimentConfig,
    source_ckpt: Checkpoint,
    target: DatasetManifest,
    fold: FoldEntry,
    audit: AuditLog | None = None,
) -> tuple[Checkpoint, dict]:
    """Supervised upper bound: fine-tune on the fold's target labels."""
    train_recs = _records_for(target, fold.train_ids)
    val_recs = _records_for(target, fold.val_ids)
    if any(r.mask_path is None for r in train_recs + val_recs):
        raise ContractViolation("oracle fine-tuning requires target masks")
    audit = audit if audit is not None else AuditLog()
    epochs = config.epochs_for("oracle")
    base_lr = config.lr_for("oracle")
    k = config.network.class_count
    torch.manual_seed(_phase_seed(config.seed, 70 + fold.index))

    f = SegmentationNetwork(config.network)
    restore_module(f, source_ckpt)

    def batch_loss(probs, labels):
        return cross_entropy_loss(probs, labels) + config.weights.w_d * dice_loss(probs, labels)

    history: list[EpochRecord] = []
    tracker = _BestTracker(f)
    with audit.phase(f"oracle-fold{fold.index}/optimize"):
        train_x = _stack_images(train_recs, target, audit)
        train_y = _stack_masks(train_recs, k, audit, purpose="oracle-supervision")
        val_x = _stack_images(val_recs, target, audit)
        val_y = _stack_masks(val_recs, k, audit, purpose="oracle-validation")
        opt = _make_optimizer(f, base_lr)
        gen = torch.Generator().manual_seed(_phase_seed(config.seed, 80 + fold.index))
        for epoch in range(epochs):
            lr = cosine_lr(base_lr, epoch, epochs)
            _set_lr(opt, lr)
            f.train()
            train_losses = []
            for batch in _epoch_batches(len(train_x), config.batch_size, gen):
                opt.zero_grad()
                probs, _ = f(train_x[batch])
                loss = batch_loss(probs, train_y[batch])
                loss.backward()
                opt.step()
                train_losses.append(float(loss.detach()))
            f.eval()
            with torch.no_grad():
                val_losses = []
                for batch in _eval_batches(len(val_x), config.batch_size):
                    probs, _ = f(val_x[batch])
                    val_losses.append((float(batch_loss(probs, val_y[batch])), len(batch)))
            val_loss = sum(l * n for l, n in val_losses) / sum(n for _, n in val_losses)
            history.append(
                EpochRecord(epoch, lr, sum(train_losses) / len(train_losses), val_loss)
            )
            tracker.update(epoch, val_loss)

    best = select_best_checkpoint(history)
    f.load_state_dict(tracker.state)
    ckpt = make_checkpoint(
        f,
        phase="oracle",
        fold=fold.index,
        epoch=best,
        validation_loss=history[best].val_loss,
        config=config.to_dict(),
    )
    return ckpt, {"fold": fold.index, "selected_epoch": best, "history": history}


def adaptation_grid_objective(
    config: ExperimentConfig,
    source_ckpt: Checkpoint,
    prior_ckpt: Checkpoint | None,
    target: DatasetManifest,
    plan,
    audit: AuditLog | None = None,
) -> Callable[[float], float]:
    """Objective for grid_search_lr: mean best validation L_t over the 4 folds."""
    import dataclasses

    def objective(lr: float) -> float:
        cfg = dataclasses.replace(config, adapt_lr=lr)
        vals = []
        for fold in plan.folds:
            _, frag = adapt_target(cfg, source_ckpt, prior_ckpt, target, fold, audit)
            vals.append(frag["history"][frag["selected_epoch"]].val_loss)
        return sum(vals) / len(vals)

    return objective
