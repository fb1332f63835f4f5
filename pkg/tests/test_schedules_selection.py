import math

import pytest

from sfuda_seg.errors import ContractViolation
from sfuda_seg.training import EpochRecord, cosine_lr, grid_search_lr, select_best_checkpoint


def test_cosine_matches_closed_form():
    lr0, total = 1e-2, 60
    for epoch in range(total):
        expected = lr0 * 0.5 * (1 + math.cos(math.pi * epoch / (total - 1)))
        assert abs(cosine_lr(lr0, epoch, total) - expected) <= 1e-9


@pytest.mark.parametrize("total", [2, 5, 10, 60])
def test_cosine_endpoints(total):
    lr0 = 3e-3
    assert cosine_lr(lr0, 0, total) == pytest.approx(lr0)
    assert cosine_lr(lr0, total - 1, total) <= lr0 * 0.01


def test_cosine_single_epoch_and_domain():
    assert cosine_lr(1e-3, 0, 1) == 1e-3
    with pytest.raises(ContractViolation):
        cosine_lr(1e-3, 5, 5)
    with pytest.raises(ContractViolation):
        cosine_lr(1e-3, 0, 0)


def history(*vals):
    return [EpochRecord(epoch=i, lr=0.0, train_loss=0.0, val_loss=v) for i, v in enumerate(vals)]


def test_selection_argmin():
    assert select_best_checkpoint(history(3.0, 1.0, 2.0)) == 1


def test_selection_monotone_decreasing_picks_last():
    assert select_best_checkpoint(history(3.0, 2.0, 1.0)) == 2


def test_selection_plateau_picks_earliest():
    assert select_best_checkpoint(history(1.0, 1.0)) == 0


def test_selection_rejects_empty():
    with pytest.raises(ContractViolation):
        select_best_checkpoint([])


def test_grid_search_single_candidate():
    assert grid_search_lr([1e-3], lambda lr: 0.5) == 1e-3


def test_grid_search_planted_objective():
    table = {1e-4: 0.5, 1e-3: 0.3, 1e-2: 0.9}
    assert grid_search_lr(list(table), table.__getitem__) == 1e-3


def test_grid_search_tie_prefers_smaller_lr():
    assert grid_search_lr([1e-2, 1e-3], lambda lr: 0.3) == 1e-3


def test_grid_search_empty_rejected():
    with pytest.raises(ContractViolation):
        grid_search_lr([], lambda lr: 0.0)
