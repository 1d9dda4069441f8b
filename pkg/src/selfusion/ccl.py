"""Connected-component labeling of 3D binary masks.

Two-pass union-find over the canonical (x-fastest) scan order.  Labels come
out canonical: component ``k`` is the one whose first voxel in scan order is
the ``k``-th such first voxel.  The output therefore depends only on the mask
and the connectivity.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numba
import numpy as np

from .volume import BinaryMask, LabelMap, Volume

__all__ = [
    "CONNECTIVITIES",
    "ComponentStats",
    "neighbor_offsets",
    "label_array",
    "label_components",
    "component_stats",
    "same_component",
]

CONNECTIVITIES = (6, 18, 26)


def neighbor_offsets(connectivity: int) -> list[tuple[int, int, int]]:
    """(dx, dy, dz) offsets of the 6-, 18- or 26-neighborhood."""
    if connectivity not in CONNECTIVITIES:
        raise ValueError(f"connectivity must be one of {CONNECTIVITIES}, got {connectivity!r}")
    # 6: faces (one nonzero coord), 18: + edges (two), 26: + corners (three)
    max_nonzero = {6: 1, 18: 2, 26: 3}[connectivity]
    return [d for d in itertools.product((-1, 0, 1), repeat=3)
            if 0 < sum(c != 0 for c in d) <= max_nonzero]


def _backward_offsets(connectivity: int) -> np.ndarray:
    # neighbors visited earlier in a z-major, then y, then x scan
    back = [d for d in neighbor_offsets(connectivity) if (d[2], d[1], d[0]) < (0, 0, 0)]
    return np.array(back, dtype=np.int64)


@numba.njit(cache=True)
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@numba.njit(cache=True)
def _label_kernel(fg, offsets):
    # fg is indexed [z, y, x] so that C order is the canonical order
    nz, ny, nx = fg.shape
    labels = np.zeros(fg.shape, dtype=np.int32)
    parent = np.zeros(fg.size + 1, dtype=np.int32)
    next_label = 1
    n_off = offsets.shape[0]
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                if fg[z, y, x] == 0:
                    continue
                current = 0
                for k in range(n_off):
                    xx = x + offsets[k, 0]
                    yy = y + offsets[k, 1]
                    zz = z + offsets[k, 2]
                    if xx < 0 or yy < 0 or zz < 0 or xx >= nx or yy >= ny:
                        continue
                    lab = labels[zz, yy, xx]
                    if lab == 0:
                        continue
                    if current == 0:
                        current = _find(parent, lab)
                    else:
                        r = _find(parent, lab)
                        if r != current:
                            # union by smaller root keeps parent[i] <= i
                            if r < current:
                                parent[current] = r
                                current = r
                            else:
                                parent[r] = current
                if current == 0:
                    current = next_label
                    parent[current] = current
                    next_label += 1
                labels[z, y, x] = current
    # Roots in ascending provisional order are components in order of first voxel.
    final = np.zeros(next_label, dtype=np.int32)
    count = 0
    for lab in range(1, next_label):
        if parent[lab] == lab:
            count += 1
            final[lab] = count
        else:
            final[lab] = final[_find(parent, lab)]
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                lab = labels[z, y, x]
                if lab != 0:
                    labels[z, y, x] = final[lab]
    return labels, count


def label_array(mask: np.ndarray, connectivity: int = 26) -> tuple[np.ndarray, int]:
    """Label an ``[x, y, z]`` array; returns ``(labels, n_components)``."""
    mask = np.asarray(mask)
    if mask.ndim != 3:
        raise ValueError(f"mask must be 3D, got shape {mask.shape}")
    offsets = _backward_offsets(connectivity)
    fg = np.ascontiguousarray((mask != 0).astype(np.uint8).transpose(2, 1, 0))
    labels, n = _label_kernel(fg, offsets)
    return labels.transpose(2, 1, 0), int(n)


def label_components(mask: BinaryMask, connectivity: int = 26) -> LabelMap:
    labels, n = label_array(mask.array, connectivity)
    return LabelMap(labels, mask.spacing, mask.nifti_header, n_components=n)


@dataclass(frozen=True)
class ComponentStats:
    label: int
    voxel_count: int
    volume_mm3: float
    bbox: tuple[tuple[int, int, int], tuple[int, int, int]]


@numba.njit(cache=True)
def _bbox_kernel(labels, n):
    lo = np.full((n + 1, 3), np.iinfo(np.int64).max, dtype=np.int64)
    hi = np.full((n + 1, 3), -1, dtype=np.int64)
    nx, ny, nz = labels.shape
    for x in range(nx):
        for y in range(ny):
            for z in range(nz):
                lab = labels[x, y, z]
                if lab == 0:
                    continue
                if x < lo[lab, 0]:
                    lo[lab, 0] = x
                if y < lo[lab, 1]:
                    lo[lab, 1] = y
                if z < lo[lab, 2]:
                    lo[lab, 2] = z
                if x > hi[lab, 0]:
                    hi[lab, 0] = x
                if y > hi[lab, 1]:
                    hi[lab, 1] = y
                if z > hi[lab, 2]:
                    hi[lab, 2] = z
    return lo, hi


def component_stats(labels: LabelMap, spacing=None) -> list[ComponentStats]:
    """Per-component voxel count, physical volume and inclusive bounding box."""
    spacing = labels.spacing if spacing is None else spacing
    n = labels.n_components
    if n == 0:
        return []
    voxel_mm3 = float(spacing[0]) * float(spacing[1]) * float(spacing[2])
    counts = np.bincount(labels.array.ravel(), minlength=n + 1)
    lo, hi = _bbox_kernel(np.asarray(labels.array), n)
    return [
        ComponentStats(
            label=k,
            voxel_count=int(counts[k]),
            volume_mm3=int(counts[k]) * voxel_mm3,
            bbox=(tuple(int(v) for v in lo[k]), tuple(int(v) for v in hi[k])),
        )
        for k in range(1, n + 1)
    ]


def same_component(labels: Volume, r, r2) -> bool:
    """Whether voxels ``r`` and ``r2`` are foreground and connected."""
    a = labels.array[tuple(r)]
    return bool(a != 0 and a == labels.array[tuple(r2)])
