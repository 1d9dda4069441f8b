"""Input checks shared by the estimators and the command line."""
from __future__ import annotations

import numbers

import numpy as np

from .ccl import CONNECTIVITIES
from .volume import Volume


def as_array(x) -> np.ndarray:
    return x.array if isinstance(x, Volume) else np.asarray(x)


def check_int(value, name: str, low: int | None = None, high: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if low is not None and value < low:
        raise ValueError(f"{name} must be >= {low}, got {value}")
    if high is not None and value > high:
        raise ValueError(f"{name} must be <= {high}, got {value}")
    return value


def check_connectivity(connectivity) -> int:
    if connectivity not in CONNECTIVITIES:
        raise ValueError(f"connectivity must be one of {CONNECTIVITIES}, got {connectivity!r}")
    return int(connectivity)


def check_thresholds(tau1, tau2, n_views) -> tuple[int, int, int]:
    n_views = check_int(n_views, "n_views", low=1)
    tau1 = check_int(tau1, "tau1", low=0, high=n_views - 1)
    tau2 = check_int(tau2, "tau2", low=0, high=tau1)
    return tau1, tau2, n_views


def check_mask_stack(X, n_views: int | None = None) -> np.ndarray:
    """Stack per-view masks into a ``(n_views, nx, ny, nz)`` uint8 array.

    ``X`` may be a 4D array or a sequence of 3D arrays / volumes.  Values must
    be 0 or 1; the first offending view is named in the error.
    """
    if isinstance(X, np.ndarray) and X.ndim == 4:
        items = list(X)
    else:
        items = [as_array(m) for m in X]
    if not items:
        raise ValueError("need at least one mask")
    shape = items[0].shape
    for i, m in enumerate(items):
        if m.ndim != 3:
            raise ValueError(f"mask {i} must be 3D, got shape {m.shape}")
        if m.shape != shape:
            raise ValueError(f"mask {i} has shape {m.shape}, expected {shape}")
        if m.dtype != np.bool_ and m.size and (m.min() < 0 or m.max() > 1):
            raise ValueError(f"mask {i} is not binary")
    if n_views is not None and len(items) != n_views:
        raise ValueError(f"expected {n_views} masks, got {len(items)}")
    return np.stack([m.astype(np.uint8, copy=False) for m in items])


def check_confidence(conf, n_views: int) -> np.ndarray:
    conf = as_array(conf)
    if conf.ndim != 3:
        raise ValueError(f"confidence map must be 3D, got shape {conf.shape}")
    if conf.dtype.kind not in "iu":
        raise ValueError(f"confidence map must hold integers, got {conf.dtype}")
    if conf.size and (conf.min() < 0 or conf.max() > n_views):
        raise ValueError(f"confidence values must lie in [0, {n_views}]")
    return conf.astype(np.int32, copy=False)
