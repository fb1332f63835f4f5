"""Source-free unsupervised domain adaptation for 2-D binary image segmentation.

Source phase: supervised training of an ENet-style segmenter (optionally with
a Ring feature-norm term) and of a shape-prior autoencoder over ground-truth
masks. Adaptation phase: label-free fine-tuning of the segmenter on target
images driven by entropy minimization, the Ring constraint and the frozen
shape prior, evaluated with 4-fold cross-validation against no-adaptation,
entropy-plus-class-ratio and oracle baselines.
"""

__version__ = "0.1.0"

from .errors import ConfigError, ContractViolation, MissingArtifact, UnsupportedConfiguration
from .types import Checkpoint, FeatureMap, Image2D, MaskMap, ProbMap, SampleRecord

__all__ = [
    "ConfigError",
    "ContractViolation",
    "MissingArtifact",
    "UnsupportedConfiguration",
    "Checkpoint",
    "FeatureMap",
    "Image2D",
    "MaskMap",
    "ProbMap",
    "SampleRecord",
    "__version__",
]
