"""
The feature extractor and the three CVAE components.
"""

from dgdata.components.base import (
    BaseComponent,
    ComponentBatch,
    ComponentLoss,
    LatentGaussian,
    configure_logging,
    masked_cross_entropy,
)
from dgdata.components.feature_extractor import (
    FeatureExtractor,
    extract_features,
    feature_dim,
    squash_features,
)
from dgdata.components.fine_grained import FineGrainedComponent
from dgdata.components.temporal import TemporalComponent
from dgdata.components.classifier import (
    ClassifierComponent,
    classify_target,
    predict_windows,
)

__all__ = [
    "BaseComponent",
    "ComponentBatch",
    "ComponentLoss",
    "LatentGaussian",
    "configure_logging",
    "masked_cross_entropy",
    "FeatureExtractor",
    "extract_features",
    "feature_dim",
    "squash_features",
    "FineGrainedComponent",
    "TemporalComponent",
    "ClassifierComponent",
    "classify_target",
    "predict_windows",
]
