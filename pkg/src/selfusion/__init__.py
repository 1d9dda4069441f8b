"""Test-time self-ensembled lesion fusion.

Per-view binary masks of the 24 rotated/flipped views of a scan are summed
into a confidence map and fused by double thresholding with connected-union
growth.  The package also carries the lesion segmentation metrics, a
threshold sweep harness and seeded synthetic phantoms.
"""
from .ccl import ComponentStats, component_stats, label_components
from .estimators import SelfEnsembleFusion, ViewAugmenter
from .fusion import FusionParams, confidence_map, connected_union, self_fuse, threshold
from .metrics import (ConfusionCounts, DatasetReport, LesionMatch, ScanMetrics, ScoreWeights,
                      challenge_score, confusion, evaluate_dataset, evaluate_scan, lesion_match,
                      lesion_metrics, volume_correlation, voxel_metrics)
from .volume import (BinaryMask, ConfidenceMap, LabelMap, Volume, VolumeFormatError, new_volume,
                     read_volume, write_volume)
from .xform import GridTransform, ViewKey, apply, compose, enumerate_views, invert, view_transform

__version__ = "0.1.0"

__all__ = [
    "BinaryMask",
    "ComponentStats",
    "ConfidenceMap",
    "ConfusionCounts",
    "DatasetReport",
    "FusionParams",
    "GridTransform",
    "LabelMap",
    "LesionMatch",
    "ScoreWeights",
    "ScanMetrics",
    "SelfEnsembleFusion",
    "ViewAugmenter",
    "ViewKey",
    "Volume",
    "VolumeFormatError",
    "apply",
    "challenge_score",
    "component_stats",
    "compose",
    "confidence_map",
    "confusion",
    "connected_union",
    "enumerate_views",
    "evaluate_dataset",
    "evaluate_scan",
    "invert",
    "label_components",
    "lesion_match",
    "lesion_metrics",
    "new_volume",
    "read_volume",
    "self_fuse",
    "threshold",
    "view_transform",
    "volume_correlation",
    "voxel_metrics",
    "write_volume",
]
