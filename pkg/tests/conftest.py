"""Shared fixtures: one tiny synthetic dataset pair per session."""

import pytest

from sfuda_seg.config import desk_scale_config
from sfuda_seg.synthetic import SyntheticShiftConfig, generate_synthetic, inverted_shift


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """8 samples per domain, inverted + blurred target; enough for contracts."""
    root = tmp_path_factory.mktemp("tiny-data")
    shift = inverted_shift(SyntheticShiftConfig(sample_count=8, seed=101), blur_sigma=1.5)
    source, target = generate_synthetic(shift, root)
    return root, source, target


@pytest.fixture(scope="session")
def tiny_config(tiny_dataset):
    root, _, _ = tiny_dataset
    return desk_scale_config(
        seed=7,
        fold_seed=7,
        source_epochs=4,
        prior_epochs=4,
        adapt_epochs=3,
        source_manifest=str(root / "source" / "manifest.csv"),
        target_manifest=str(root / "target" / "manifest.csv"),
    )


@pytest.fixture(scope="session")
def trained_checkpoints(tiny_config, tiny_dataset):
    """Briefly trained source + prior checkpoints shared by pipeline tests."""
    from sfuda_seg.training import train_shape_prior, train_source_segmentation

    _, source, _ = tiny_dataset
    source_ckpt, source_history = train_source_segmentation(tiny_config, source)
    prior_ckpt, prior_history = train_shape_prior(tiny_config, source)
    return {
        "source": source_ckpt,
        "source_history": source_history,
        "prior": prior_ckpt,
        "prior_history": prior_history,
    }
