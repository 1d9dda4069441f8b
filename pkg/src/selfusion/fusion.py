"""Self-ensembled lesion fusion of per-view binary masks.

The per-view masks (already mapped back to native space) are summed into an
integer confidence map.  Voxels with more than ``tau1`` votes are seeds; the
final mask keeps every connected component of the ``> tau2`` mask that holds
at least one seed.  With ``tau1 == tau2`` this is plain thresholding.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ccl import CONNECTIVITIES, label_array
from .volume import BinaryMask, ConfidenceMap

__all__ = [
    "DEFAULT_TAU1",
    "DEFAULT_TAU2",
    "FusionParams",
    "confidence_map",
    "threshold",
    "connected_union",
    "self_fuse",
    "hysteresis_array",
]

DEFAULT_TAU1 = 18
DEFAULT_TAU2 = 8


@dataclass(frozen=True)
class FusionParams:
    tau1: int = DEFAULT_TAU1
    tau2: int = DEFAULT_TAU2
    n_views: int = 24
    connectivity: int = 26

    def __post_init__(self):
        for name in ("tau1", "tau2", "n_views", "connectivity"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value:
                raise ValueError(f"{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.n_views <= 0:
            raise ValueError(f"n_views must be positive, got {self.n_views}")
        if not 0 <= self.tau2 <= self.tau1 < self.n_views:
            raise ValueError(
                f"thresholds must satisfy 0 <= tau2 <= tau1 < n_views, "
                f"got tau1={self.tau1}, tau2={self.tau2}, n_views={self.n_views}")
        if self.connectivity not in CONNECTIVITIES:
            raise ValueError(f"connectivity must be one of {CONNECTIVITIES}, got {self.connectivity}")


def confidence_map(masks: Sequence[BinaryMask]) -> ConfidenceMap:
    """Voxelwise vote count over ``masks``."""
    masks = list(masks)
    if not masks:
        raise ValueError("at least one mask is required")
    ref = masks[0]
    total = np.zeros(ref.dims, dtype=np.int32)
    for i, m in enumerate(masks):
        if m.dims != ref.dims or m.spacing != ref.spacing:
            raise ValueError(
                f"mask {i} has dims {m.dims} / spacing {m.spacing}, "
                f"expected {ref.dims} / {ref.spacing}")
        total += m.array
    return ConfidenceMap(total, ref.spacing, ref.nifti_header, n_views=len(masks))


def threshold(conf: ConfidenceMap, tau: int) -> BinaryMask:
    """Voxels with strictly more than ``tau`` votes."""
    if not 0 <= tau <= conf.n_views:
        raise ValueError(f"tau must lie in [0, {conf.n_views}], got {tau}")
    return BinaryMask((conf.array > tau).astype(np.uint8), conf.spacing, conf.nifti_header)


def hysteresis_array(conf: np.ndarray, tau1: int, tau2: int, connectivity: int = 26) -> np.ndarray:
    """Array form of :func:`connected_union`; returns a uint8 ``[x, y, z]`` array."""
    candidates = conf > tau2
    seeds = conf > tau1
    if not seeds.any():
        return np.zeros(conf.shape, dtype=np.uint8)
    labels, n = label_array(candidates, connectivity)
    keep = np.zeros(n + 1, dtype=bool)
    keep[labels[seeds]] = True
    keep[0] = False
    return keep[labels].astype(np.uint8)


def connected_union(conf: ConfidenceMap, params: FusionParams) -> BinaryMask:
    """Union of the ``> tau2`` components that contain a ``> tau1`` voxel."""
    if conf.n_views != params.n_views:
        raise ValueError(f"confidence map has n_views={conf.n_views}, params expect {params.n_views}")
    out = hysteresis_array(conf.array, params.tau1, params.tau2, params.connectivity)
    return BinaryMask(out, conf.spacing, conf.nifti_header)


def self_fuse(masks: Sequence[BinaryMask], params: FusionParams | None = None):
    """Fuse per-view masks; returns ``(fused_mask, confidence_map)``."""
    masks = list(masks)
    if params is None:
        params = FusionParams(n_views=len(masks))
    conf = confidence_map(masks)
    return connected_union(conf, params), conf
