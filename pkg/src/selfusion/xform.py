"""The 24 ensemble views and exact right-angle grid transforms.

A :class:`GridTransform` is a signed axis permutation.  Applying it to an
array puts input axis ``perm[i]`` on output axis ``i`` and reverses output
axis ``i`` when ``neg[i]`` is set.  No interpolation ever happens, so every
transform is a bijection on voxels and is undone exactly by its inverse.

Plane convention: axial slices span (x, y) and stack along z, sagittal slices
span (y, z) along x, coronal slices span (x, z) along y.  Rotations turn
counterclockwise from the first in-plane axis toward the second.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np

from .volume import Volume

__all__ = [
    "Plane",
    "ViewKey",
    "GridTransform",
    "IDENTITY",
    "FLIP_CONVENTIONS",
    "enumerate_views",
    "view_transform",
    "apply",
    "apply_array",
    "invert",
    "compose",
    "all_signed_permutations",
]


class Plane(str, Enum):
    AXIAL = "axial"
    SAGITTAL = "sagittal"
    CORONAL = "coronal"


# in-plane (first, second) axes of each slice plane
PLANE_AXES = {Plane.AXIAL: (0, 1), Plane.SAGITTAL: (1, 2), Plane.CORONAL: (0, 2)}
ROTATIONS = (0, 90, 180, 270)
FLIPS = ("none", "flip")

# "none-flip": {identity, horizontal flip}, the dihedral group per plane.
# "vertical-horizontal": the literal reading of two flips; "none" selects a
# flip of the second in-plane axis, so per plane only 4 transforms are distinct.
FLIP_CONVENTIONS = ("none-flip", "vertical-horizontal")


class ViewKey(NamedTuple):
    plane: Plane
    rotation: int
    flip: str

    def __str__(self) -> str:
        return f"{self.plane.value}:{self.rotation}:{self.flip}"

    @classmethod
    def parse(cls, text: str) -> "ViewKey":
        try:
            plane, rot, flip = text.split(":")
            key = cls(Plane(plane), int(rot), flip)
        except ValueError as exc:
            raise ValueError(f"malformed view key {text!r}; expected plane:rotation:flip") from exc
        if key.rotation not in ROTATIONS or key.flip not in FLIPS:
            raise ValueError(f"malformed view key {text!r}")
        return key


@dataclass(frozen=True)
class GridTransform:
    perm: tuple[int, int, int] = (0, 1, 2)
    neg: tuple[bool, bool, bool] = (False, False, False)

    def __post_init__(self):
        perm = tuple(int(p) for p in self.perm)
        if sorted(perm) != [0, 1, 2]:
            raise ValueError(f"perm must be a permutation of (0, 1, 2), got {self.perm}")
        if len(self.neg) != 3:
            raise ValueError("neg must have three flags")
        object.__setattr__(self, "perm", perm)
        object.__setattr__(self, "neg", tuple(bool(n) for n in self.neg))

    @property
    def is_identity(self) -> bool:
        return self == IDENTITY

    def out_dims(self, dims):
        return tuple(dims[p] for p in self.perm)


IDENTITY = GridTransform()


def compose(t1: GridTransform, t2: GridTransform) -> GridTransform:
    """``t1 ∘ t2``: apply ``t2`` first, then ``t1``."""
    perm = tuple(t2.perm[t1.perm[i]] for i in range(3))
    neg = tuple(t1.neg[i] ^ t2.neg[t1.perm[i]] for i in range(3))
    return GridTransform(perm, neg)


def invert(t: GridTransform) -> GridTransform:
    perm = [0, 0, 0]
    neg = [False, False, False]
    for i, p in enumerate(t.perm):
        perm[p] = i
        neg[p] = t.neg[i]
    return GridTransform(tuple(perm), tuple(neg))


def all_signed_permutations() -> list[GridTransform]:
    """All 48 signed axis permutations of a 3D grid."""
    return [GridTransform(p, n)
            for p in itertools.permutations(range(3))
            for n in itertools.product((False, True), repeat=3)]


def apply_array(t: GridTransform, arr: np.ndarray) -> np.ndarray:
    out = np.transpose(arr, t.perm)
    flip_axes = tuple(i for i in range(3) if t.neg[i])
    if flip_axes:
        out = np.flip(out, flip_axes)
    return np.ascontiguousarray(out)


def apply(t: GridTransform, v: Volume) -> Volume:
    """Rearrange the voxels of ``v``; dims and spacing are permuted with the axes."""
    spacing = tuple(v.spacing[p] for p in t.perm)
    if isinstance(v, Volume) and type(v) is not Volume:
        # keep subclass metadata (n_views, n_components)
        extra = {k: getattr(v, k) for k in ("n_views", "n_components") if hasattr(v, k)}
        return type(v)(apply_array(t, v.array), spacing, v.nifti_header, **extra)
    return Volume(apply_array(t, v.array), spacing, v.nifti_header)


def _rotation(plane: Plane, quarter_turns: int) -> GridTransform:
    a, b = PLANE_AXES[plane]
    perm = [0, 1, 2]
    perm[a], perm[b] = b, a
    neg = [False, False, False]
    neg[a] = True
    step = GridTransform(tuple(perm), tuple(neg))
    out = IDENTITY
    for _ in range(quarter_turns % 4):
        out = compose(step, out)
    return out


def _axis_flip(axis: int) -> GridTransform:
    neg = [False, False, False]
    neg[axis] = True
    return GridTransform((0, 1, 2), tuple(neg))


def enumerate_views() -> list[ViewKey]:
    """The 24 views: planes axial, sagittal, coronal; rotations ascending; no flip first."""
    return [ViewKey(plane, rot, flip) for plane in Plane for rot in ROTATIONS for flip in FLIPS]


def view_transform(key: ViewKey, flip_convention: str = "none-flip") -> GridTransform:
    """Transform taking native space into the view ``key``.

    The optional flip is applied to every slice before the rotation.
    """
    if isinstance(key, str):
        key = ViewKey.parse(key)
    if flip_convention not in FLIP_CONVENTIONS:
        raise ValueError(f"flip_convention must be one of {FLIP_CONVENTIONS}")
    plane = Plane(key.plane)
    if key.rotation not in ROTATIONS:
        raise ValueError(f"rotation must be one of {ROTATIONS}, got {key.rotation}")
    a, b = PLANE_AXES[plane]
    if key.flip == "flip":
        pre = _axis_flip(a)
    elif key.flip == "none":
        pre = IDENTITY if flip_convention == "none-flip" else _axis_flip(b)
    else:
        raise ValueError(f"flip must be one of {FLIPS}, got {key.flip!r}")
    return compose(_rotation(plane, key.rotation // 90), pre)
