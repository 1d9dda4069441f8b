"""Seeded synthetic lesion phantoms and noisy voter ensembles.

Randomness comes from numpy's PCG64 seeded through ``SeedSequence``.  Streams
are split as follows, so any fixture is a pure function of its seed:

* ``generate_phantom``: ``SeedSequence(spec.seed).spawn(2)`` gives a lesion
  stream root and an image-noise stream; the lesion root spawns one child per
  lesion (position and radii draws, including retries).
* ``simulate_views``: ``SeedSequence(model.seed).spawn(3)`` gives roots for
  per-lesion view subsets, per-view boundary flips and per-blob false
  positives; each root spawns one child per lesion / view / blob.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .ccl import label_array
from .volume import BinaryMask, Volume

__all__ = [
    "PhantomError",
    "PhantomSpec",
    "VoterNoiseModel",
    "SimulatedEnsemble",
    "generate_phantom",
    "simulate_views",
    "simulate_ensemble",
    "lesion_cores",
]

_CUBE = np.ones((3, 3, 3), dtype=bool)


class PhantomError(RuntimeError):
    """Lesion or blob placement failed within the retry budget."""


def _rng(seq: np.random.SeedSequence) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seq))


@dataclass(frozen=True)
class PhantomSpec:
    dims: tuple[int, int, int] = (48, 48, 48)
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    lesion_count: int = 3
    lesion_radius_range: tuple[float, float] = (2.0, 4.0)
    seed: int = 0
    # empty voxels kept between lesions so each one is its own 26-component
    separation: int = 1
    max_attempts: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        object.__setattr__(self, "lesion_radius_range", tuple(float(r) for r in self.lesion_radius_range))
        rmin, rmax = self.lesion_radius_range
        if len(self.dims) != 3 or min(self.dims) <= 0:
            raise ValueError(f"dims must be three positive integers, got {self.dims}")
        if self.lesion_count < 0:
            raise ValueError("lesion_count must be non-negative")
        if not 0 < rmin <= rmax:
            raise ValueError(f"radius range must satisfy 0 < min <= max, got {self.lesion_radius_range}")
        if self.lesion_count and any(2 * np.ceil(rmax) + 1 > d for d in self.dims):
            raise ValueError(f"lesions of radius {rmax} do not fit in dims {self.dims}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @classmethod
    def from_json(cls, path) -> "PhantomSpec":
        return cls(**json.loads(Path(path).read_text()))

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2) + "\n"


@dataclass(frozen=True)
class VoterNoiseModel:
    core_support: int = 20
    boundary_flip_prob: float = 0.2
    fp_blob_count: int = 4
    fp_blob_support: int = 8
    seed: int = 0
    fp_blob_radius_range: tuple[float, float] = (1.0, 2.0)
    # gap between false-positive blobs and the reference lesions
    fp_clearance: int = 2
    max_attempts: int = 1000

    def __post_init__(self):
        if not 0.0 <= self.boundary_flip_prob <= 1.0:
            raise ValueError("boundary_flip_prob must lie in [0, 1]")
        if self.core_support < 0 or self.fp_blob_support < 0 or self.fp_blob_count < 0:
            raise ValueError("supports and blob count must be non-negative")
        object.__setattr__(self, "fp_blob_radius_range", tuple(float(r) for r in self.fp_blob_radius_range))

    def check(self, n_views: int) -> None:
        if self.core_support > n_views or self.fp_blob_support > n_views:
            raise ValueError(f"supports must not exceed n_views={n_views}")

    @classmethod
    def from_mapping(cls, data) -> "VoterNoiseModel":
        return cls(**data)


def _ellipsoid(rng, dims, radius_range):
    """Draw radii and an in-bounds center; return a boolean array of the blob."""
    radii = rng.uniform(radius_range[0], radius_range[1], size=3)
    reach = np.ceil(radii).astype(int)
    center = [int(rng.integers(reach[a], dims[a] - reach[a])) for a in range(3)]
    grid = np.ogrid[tuple(slice(0, d) for d in dims)]
    dist = sum(((g - c) / r) ** 2 for g, c, r in zip(grid, center, radii))
    return dist <= 1.0


def _dilate(mask: np.ndarray, steps: int) -> np.ndarray:
    if steps <= 0 or not mask.any():
        return mask.copy()
    return ndimage.binary_dilation(mask, _CUBE, iterations=steps)


def generate_phantom(spec: PhantomSpec) -> tuple[BinaryMask, Volume]:
    """Reference mask of separated ellipsoidal lesions plus a noisy cosmetic image."""
    lesion_root, image_seq = np.random.SeedSequence(spec.seed).spawn(2)
    gt = np.zeros(spec.dims, dtype=bool)
    for i, seq in enumerate(lesion_root.spawn(spec.lesion_count)):
        rng = _rng(seq)
        forbidden = _dilate(gt, spec.separation)
        for _ in range(spec.max_attempts):
            blob = _ellipsoid(rng, spec.dims, spec.lesion_radius_range)
            if blob.any() and not (blob & forbidden).any():
                gt |= blob
                break
        else:
            raise PhantomError(f"could not place lesion {i} after {spec.max_attempts} attempts")
    noise = _rng(image_seq).normal(0.0, 0.25, size=spec.dims)
    image = (gt + noise).astype(np.float32)
    return BinaryMask(gt.astype(np.uint8), spec.spacing), Volume(image, spec.spacing)


def lesion_cores(gt: np.ndarray) -> np.ndarray:
    """Reference voxels whose full 26-neighborhood is also reference (erosion by one)."""
    return ndimage.binary_erosion(np.asarray(gt, dtype=bool), _CUBE, border_value=0)


@dataclass
class SimulatedEnsemble:
    views: list[BinaryMask]
    core: np.ndarray
    fp_blobs: np.ndarray
    fp_view_sets: list[np.ndarray] = field(default_factory=list)


def simulate_ensemble(gt: BinaryMask, model: VoterNoiseModel, n_views: int = 24) -> SimulatedEnsemble:
    """Per-view masks with exact vote counts on lesion cores and false-positive blobs.

    Every lesion gets ``core_support`` randomly chosen views that segment it
    whole.  Boundary voxels (reference minus core) then flip their vote in
    each view with ``boundary_flip_prob``.  Each false-positive blob, placed
    at least ``fp_clearance`` voxels from any lesion, shows up in exactly
    ``fp_blob_support`` views.
    """
    model.check(n_views)
    g = gt.array.astype(bool)
    dims = g.shape
    lesion_root, flip_root, fp_root = np.random.SeedSequence(model.seed).spawn(3)
    votes = np.zeros((n_views,) + dims, dtype=bool)

    labels, n_lesions = label_array(g, 26)
    for k, seq in enumerate(lesion_root.spawn(n_lesions), start=1):
        chosen = _rng(seq).choice(n_views, size=model.core_support, replace=False)
        votes[np.sort(chosen)] |= labels == k

    core = lesion_cores(g)
    boundary = g & ~core
    # canonical (x-fastest) order of boundary voxels fixes the draw order
    bidx = np.flatnonzero(boundary.ravel(order="F"))
    for v, seq in enumerate(flip_root.spawn(n_views)):
        flips = _rng(seq).random(bidx.size) < model.boundary_flip_prob
        flat = votes[v].ravel(order="F")
        flat[bidx[flips]] ^= True
        votes[v] = flat.reshape(dims, order="F")

    fp = np.zeros(dims, dtype=bool)
    view_sets = []
    forbidden = _dilate(g, model.fp_clearance)
    for i, seq in enumerate(fp_root.spawn(model.fp_blob_count)):
        rng = _rng(seq)
        for _ in range(model.max_attempts):
            blob = _ellipsoid(rng, dims, model.fp_blob_radius_range)
            if blob.any() and not (blob & (forbidden | _dilate(fp, 1))).any():
                break
        else:
            raise PhantomError(f"could not place false-positive blob {i}")
        chosen = np.sort(rng.choice(n_views, size=model.fp_blob_support, replace=False))
        votes[chosen] |= blob
        fp |= blob
        view_sets.append(chosen)

    views = [BinaryMask(votes[v].astype(np.uint8), gt.spacing, gt.nifti_header) for v in range(n_views)]
    return SimulatedEnsemble(views, core, fp, view_sets)


def simulate_views(gt: BinaryMask, model: VoterNoiseModel, n_views: int = 24) -> list[BinaryMask]:
    return simulate_ensemble(gt, model, n_views).views
