"""Cross-validation orchestration and run reports.

A RunReport aggregates per-fold test Dice into mean +/- standard deviation
per method, mirroring the ladder No adaptation -> AdaEnt-style -> Ours -> Oracle.
Evaluation always scores the method's own final mask: settings with a shape
prior in the graph are scored on the prior's output, everything else on the
segmenter's output.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
import torch

from .audit import AuditLog
from .checkpoints import restore_module
from .config import ExperimentConfig
from .errors import ContractViolation
from .folds import FoldEntry, FoldPlan, make_fold_plan
from .manifest import DatasetManifest, load_image, load_mask
from .metrics import binarize, dice_coefficient
from .networks import SegmentationNetwork, ShapePriorNetwork, freeze
from .training import (
    EpochRecord,
    adapt_adaent_style,
    adapt_target,
    finetune_oracle,
    train_shape_prior,
    train_source_segmentation,
)
from .types import Checkpoint

LADDER = ("no_adaptation", "adaent_style", "ours_n", "ours_s", "ours_ns", "oracle")


@dataclass(frozen=True)
class MethodResult:
    method: str
    fold_dice: tuple[float, ...]
    mean: float
    std: float


@dataclass(frozen=True)
class RunReport:
    methods: tuple[MethodResult, ...]
    fold_count: int
    config: dict
    checkpoint_digests: dict[str, str] = field(default_factory=dict)
    loss_curves: dict = field(default_factory=dict)
    label_free_validation: bool = True

    def result(self, method: str) -> MethodResult:
        for m in self.methods:
            if m.method == method:
                return m
        raise ContractViolation(f"report has no method {method!r}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def aggregate_folds(method: str, fold_dice) -> MethodResult:
    """Mean and (population) standard deviation over per-fold test Dice."""
    values = tuple(float(v) for v in fold_dice)
    if not values:
        raise ContractViolation("cannot aggregate an empty fold list")
    return MethodResult(
        method=method,
        fold_dice=values,
        mean=float(np.mean(values)),
        std=float(np.std(values)),
    )


def report_from_dict(data: dict) -> RunReport:
    methods = tuple(
        MethodResult(
            method=m["method"],
            fold_dice=tuple(m["fold_dice"]),
            mean=m["mean"],
            std=m["std"],
        )
        for m in data["methods"]
    )
    return RunReport(
        methods=methods,
        fold_count=data["fold_count"],
        config=data["config"],
        checkpoint_digests=dict(data.get("checkpoint_digests", {})),
        loss_curves=data.get("loss_curves", {}),
        label_free_validation=data.get("label_free_validation", True),
    )


def _history_curves(history: list[EpochRecord]) -> dict:
    return {
        "lr": [h.lr for h in history],
        "train": [h.train_loss for h in history],
        "val": [h.val_loss for h in history],
    }


def evaluate_fold_dice(
    config: ExperimentConfig,
    ckpt: Checkpoint,
    prior_ckpt: Checkpoint | None,
    target: DatasetManifest,
    ids,
    audit: AuditLog | None = None,
) -> list[float]:
    """Per-image test Dice of a checkpointed segmenter on the given records.

    prior_ckpt, when given, inserts the frozen shape prior so the scored mask
    is the pipeline's final output.
    """
    audit = audit if audit is not None else AuditLog()
    f = SegmentationNetwork(config.network)
    restore_module(f, ckpt)
    f.eval()
    g = None
    if prior_ckpt is not None:
        g = ShapePriorNetwork(config.shape_prior)
        restore_module(g, prior_ckpt)
        freeze(g)
    by_id = {r.id: r for r in target.records}
    scores = []
    with audit.phase("evaluate"):
        for rid in ids:
            record = by_id[rid]
            image = load_image(record, target, audit)
            probs, _ = f.predict(image)
            if g is not None:
                probs = g.refine(probs)
            pred = binarize(probs, config.threshold)
            truth = load_mask(record, config.network.class_count, audit, purpose="evaluation")
            scores.append(dice_coefficient(pred, truth))
    return scores


def _mean(xs) -> float:
    return float(np.mean(xs))


def run_cross_validation(
    config: ExperimentConfig,
    source_ckpt: Checkpoint,
    prior_ckpt: Checkpoint | None,
    target: DatasetManifest,
    plan: FoldPlan | None = None,
    audit: AuditLog | None = None,
    include_baselines: bool = True,
) -> RunReport:
    """Adapt + baselines on each of the 4 folds, aggregated per method.

    Target masks are consumed only for post-hoc scoring (and by the Oracle
    baseline's supervised fine-tuning).
    """
    if not target.fully_labeled():
        raise ContractViolation("cross-validation scoring needs target masks")
    audit = audit if audit is not None else AuditLog()
    plan = plan if plan is not None else make_fold_plan(target.records, config.fold_seed)
    if not plan.all_ids() <= set(target.ids):
        raise ContractViolation("fold plan references records outside the manifest")

    ours_key = f"ours_{config.setting.lower()}"
    fold_dice: dict[str, list[float]] = {ours_key: []}
    curves: dict[str, dict] = {ours_key: {}}
    digests: dict[str, str] = {"source": source_ckpt.digest}
    if prior_ckpt is not None:
        digests["shape_prior"] = prior_ckpt.digest
    if include_baselines:
        for key in ("no_adaptation", "adaent_style", "oracle"):
            fold_dice[key] = []
            curves[key] = {}

    uses_prior = config.setting in ("S", "NS")
    for fold in plan.folds:
        adapted, frag = adapt_target(config, source_ckpt, prior_ckpt, target, fold, audit)
        digests[f"adapted_{config.setting}_fold{fold.index}"] = adapted.digest
        curves[ours_key][f"fold{fold.index}"] = _history_curves(frag["history"])
        fold_dice[ours_key].append(
            _mean(
                evaluate_fold_dice(
                    config, adapted, prior_ckpt if uses_prior else None, target, fold.test_ids, audit
                )
            )
        )
        if include_baselines:
            fold_dice["no_adaptation"].append(
                _mean(
                    evaluate_fold_dice(config, source_ckpt, None, target, fold.test_ids, audit)
                )
            )
            ada_ckpt, ada_frag = adapt_adaent_style(config, source_ckpt, target, fold, audit)
            curves["adaent_style"][f"fold{fold.index}"] = _history_curves(ada_frag["history"])
            fold_dice["adaent_style"].append(
                _mean(evaluate_fold_dice(config, ada_ckpt, None, target, fold.test_ids, audit))
            )
            oracle_ckpt, oracle_frag = finetune_oracle(config, source_ckpt, target, fold, audit)
            curves["oracle"][f"fold{fold.index}"] = _history_curves(oracle_frag["history"])
            fold_dice["oracle"].append(
                _mean(evaluate_fold_dice(config, oracle_ckpt, None, target, fold.test_ids, audit))
            )

    methods = tuple(
        aggregate_folds(key, fold_dice[key]) for key in LADDER if key in fold_dice
    )
    return RunReport(
        methods=methods,
        fold_count=len(plan.folds),
        config=config.to_dict(),
        checkpoint_digests=digests,
        loss_curves=curves,
    )


def run_full_ladder(
    config: ExperimentConfig,
    source: DatasetManifest,
    target: DatasetManifest,
    audit: AuditLog | None = None,
) -> RunReport:
    """The complete published protocol on one dataset pair.

    Trains both source network types (type 1 without Ring for setting S and
    the baselines, type 2 with Ring for N/NS) plus the shape prior, then runs
    all three adaptation settings and the baseline ladder over the 4 folds.
    """
    audit = audit if audit is not None else AuditLog()
    plan = make_fold_plan(target.records, config.fold_seed)

    cfg_ring = dataclasses.replace(config, setting="NS")
    cfg_plain = dataclasses.replace(config, setting="S")
    src_ring, _ = train_source_segmentation(cfg_ring, source, audit)
    src_plain, _ = train_source_segmentation(cfg_plain, source, audit)
    prior, _ = train_shape_prior(config, source, audit)

    digests = {
        "source_type1": src_plain.digest,
        "source_type2": src_ring.digest,
        "shape_prior": prior.digest,
    }
    fold_dice: dict[str, list[float]] = {key: [] for key in LADDER}
    curves: dict[str, dict] = {key: {} for key in LADDER}

    setting_runs = {
        "ours_n": (dataclasses.replace(config, setting="N"), src_ring, None),
        "ours_s": (dataclasses.replace(config, setting="S"), src_plain, prior),
        "ours_ns": (dataclasses.replace(config, setting="NS"), src_ring, prior),
    }
    for fold in plan.folds:
        fold_dice["no_adaptation"].append(
            _mean(evaluate_fold_dice(config, src_plain, None, target, fold.test_ids, audit))
        )
        ada_ckpt, ada_frag = adapt_adaent_style(config, src_plain, target, fold, audit)
        curves["adaent_style"][f"fold{fold.index}"] = _history_curves(ada_frag["history"])
        fold_dice["adaent_style"].append(
            _mean(evaluate_fold_dice(config, ada_ckpt, None, target, fold.test_ids, audit))
        )
        for key, (cfg, src, pri) in setting_runs.items():
            adapted, frag = adapt_target(cfg, src, pri, target, fold, audit)
            curves[key][f"fold{fold.index}"] = _history_curves(frag["history"])
            fold_dice[key].append(
                _mean(evaluate_fold_dice(cfg, adapted, pri, target, fold.test_ids, audit))
            )
        oracle_ckpt, oracle_frag = finetune_oracle(config, src_plain, target, fold, audit)
        curves["oracle"][f"fold{fold.index}"] = _history_curves(oracle_frag["history"])
        fold_dice["oracle"].append(
            _mean(evaluate_fold_dice(config, oracle_ckpt, None, target, fold.test_ids, audit))
        )

    methods = tuple(aggregate_folds(key, fold_dice[key]) for key in LADDER)
    return RunReport(
        methods=methods,
        fold_count=len(plan.folds),
        config=config.to_dict(),
        checkpoint_digests=digests,
        loss_curves=curves,
    )
