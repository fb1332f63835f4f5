"""Four-group cross-validation planning.

Records are shuffled into 4 disjoint groups covering the dataset; fold i
tests on group i, validates on group (i+1) mod 4 and trains on the remaining
two, so over the 4 folds every group serves exactly once as test and once as
validation. When records carry a patient_id, whole patients are kept inside
one group to avoid leakage.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractViolation
from .types import SampleRecord

FOLD_COUNT = 4


@dataclass(frozen=True)
class FoldEntry:
    index: int
    train_ids: tuple[str, ...]
    val_ids: tuple[str, ...]
    test_ids: tuple[str, ...]


@dataclass(frozen=True)
class FoldPlan:
    groups: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        if len(self.groups) != FOLD_COUNT:
            raise ContractViolation(f"FoldPlan needs {FOLD_COUNT} groups")
        flat = [i for g in self.groups for i in g]
        if len(flat) != len(set(flat)):
            raise ContractViolation("groups must be disjoint")
        if any(len(g) == 0 for g in self.groups):
            raise ContractViolation("every group must be non-empty")

    @property
    def folds(self) -> list[FoldEntry]:
        out = []
        for i in range(FOLD_COUNT):
            test = self.groups[i]
            val = self.groups[(i + 1) % FOLD_COUNT]
            train = self.groups[(i + 2) % FOLD_COUNT] + self.groups[(i + 3) % FOLD_COUNT]
            out.append(FoldEntry(index=i, train_ids=train, val_ids=val, test_ids=test))
        return out

    def all_ids(self) -> set[str]:
        return {i for g in self.groups for i in g}


def make_fold_plan(records: Sequence[SampleRecord | str], seed: int) -> FoldPlan:
    """Deterministically partition records into 4 balanced groups.

    Without patient ids the group sizes differ by at most 1. With patient ids
    the split is patient-stratified (greedy largest-patient-first into the
    currently smallest group), which balances sizes as well as the patient
    structure allows.
    """
    ids = [r if isinstance(r, str) else r.id for r in records]
    if len(ids) != len(set(ids)):
        raise ContractViolation("record ids must be unique")
    if len(ids) < FOLD_COUNT:
        raise ContractViolation(f"need at least {FOLD_COUNT} records, got {len(ids)}")
    patients = {}
    for r in records:
        pid = "" if isinstance(r, str) else r.patient_id
        patients.setdefault(pid or None, []).append(r if isinstance(r, str) else r.id)

    rng = np.random.default_rng(seed)
    if set(patients) == {None}:
        order = [ids[i] for i in rng.permutation(len(ids))]
        sizes = [len(ids) // FOLD_COUNT] * FOLD_COUNT
        for i in range(len(ids) % FOLD_COUNT):
            sizes[i] += 1
        groups, start = [], 0
        for size in sizes:
            groups.append(tuple(order[start : start + size]))
            start += size
        return FoldPlan(groups=tuple(groups))

    # patient-stratified path: records without a patient id count as singleton patients
    units = []
    for pid, members in patients.items():
        if pid is None:
            units.extend([m] for m in members)
        else:
            units.append(list(members))
    perm = rng.permutation(len(units))
    units = [units[i] for i in perm]
    units.sort(key=len, reverse=True)  # stable sort keeps the shuffled tie order
    groups = [[] for _ in range(FOLD_COUNT)]
    for unit in units:
        smallest = min(range(FOLD_COUNT), key=lambda g: (len(groups[g]), g))
        groups[smallest].extend(unit)
    return FoldPlan(groups=tuple(tuple(g) for g in groups))
