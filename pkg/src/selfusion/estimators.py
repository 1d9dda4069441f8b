"""scikit-learn style wrappers around view augmentation and fusion.

>>> aug = ViewAugmenter().fit()
>>> views = aug.transform(image)                  # 24 arrays, one per view
>>> masks = aug.inverse_transform([segment(v) for v in views])  # native space
>>> fused = SelfEnsembleFusion(tau1=18, tau2=8).fit_transform(masks)

``segment`` stands for any per-view binary segmenter.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import xform
from ._validation import (as_array, check_confidence, check_connectivity, check_mask_stack,
                          check_thresholds)
from .fusion import DEFAULT_TAU1, DEFAULT_TAU2, hysteresis_array
from .metrics import confusion, voxel_metrics
from .volume import BinaryMask

__all__ = ["ViewAugmenter", "SelfEnsembleFusion"]


class ViewAugmenter(TransformerMixin, BaseEstimator):
    """Map a volume into the 24 rotated/flipped views and masks back.

    Parameters
    ----------
    flip_convention : {"none-flip", "vertical-horizontal"}
        Which two flips pair with the four rotations.  The default keeps the
        unflipped view so the eight views per plane are all distinct.
    """

    def __init__(self, flip_convention="none-flip"):
        self.flip_convention = flip_convention

    def fit(self, X=None, y=None):
        if self.flip_convention not in xform.FLIP_CONVENTIONS:
            raise ValueError(f"flip_convention must be one of {xform.FLIP_CONVENTIONS}")
        self.views_ = xform.enumerate_views()
        self.transforms_ = [xform.view_transform(k, self.flip_convention) for k in self.views_]
        self.n_views_ = len(self.views_)
        return self

    def transform(self, X):
        """One array per view; volumes in, volumes out."""
        check_is_fitted(self, "transforms_")
        if hasattr(X, "array"):
            return [xform.apply(t, X) for t in self.transforms_]
        X = np.asarray(X)
        if X.ndim != 3:
            raise ValueError(f"expected a 3D volume, got shape {X.shape}")
        return [xform.apply_array(t, X) for t in self.transforms_]

    def inverse_transform(self, X):
        """Bring per-view arrays back to native space as a ``(n_views, ...)`` stack."""
        check_is_fitted(self, "transforms_")
        if len(X) != self.n_views_:
            raise ValueError(f"expected {self.n_views_} views, got {len(X)}")
        native = []
        for i, (t, v) in enumerate(zip(self.transforms_, X)):
            back = xform.apply_array(xform.invert(t), as_array(v))
            if native and back.shape != native[0].shape:
                raise ValueError(f"view {self.views_[i]} maps to shape {back.shape}, "
                                 f"expected {native[0].shape}")
            native.append(back)
        return np.stack(native)


class SelfEnsembleFusion(TransformerMixin, BaseEstimator):
    """Hysteresis fusion of an ensemble of binary masks.

    ``fit`` accumulates the confidence map of the training stack;
    ``transform`` fuses a stack of ``n_views`` masks into one mask.

    Parameters
    ----------
    tau1 : int
        Seed threshold; voxels with more than ``tau1`` votes start a lesion.
    tau2 : int
        Growth threshold, ``tau2 <= tau1``; seeded components of the
        ``> tau2`` mask are kept whole.
    connectivity : {6, 18, 26}
    n_views : int
    """

    def __init__(self, tau1=DEFAULT_TAU1, tau2=DEFAULT_TAU2, connectivity=26, n_views=24):
        self.tau1 = tau1
        self.tau2 = tau2
        self.connectivity = connectivity
        self.n_views = n_views

    def _check_params(self):
        check_thresholds(self.tau1, self.tau2, self.n_views)
        check_connectivity(self.connectivity)

    def fit(self, X, y=None):
        self._check_params()
        stack = check_mask_stack(X, self.n_views)
        self.confidence_map_ = stack.sum(axis=0, dtype=np.int32)
        self.n_features_in_ = int(np.prod(stack.shape[1:]))
        return self

    def fuse_confidence(self, conf):
        """Fuse an already accumulated confidence map."""
        self._check_params()
        conf = check_confidence(conf, self.n_views)
        return hysteresis_array(conf, self.tau1, self.tau2, self.connectivity)

    def transform(self, X):
        check_is_fitted(self, "confidence_map_")
        stack = check_mask_stack(X, self.n_views)
        return self.fuse_confidence(stack.sum(axis=0, dtype=np.int32))

    def fit_transform(self, X, y=None, **fit_params):
        self.fit(X)
        return self.fuse_confidence(self.confidence_map_)

    def score(self, X, y):
        """Dice overlap of the fused mask with reference ``y``."""
        fused = self.transform(X)
        ref = as_array(y)
        c = confusion(BinaryMask(fused), BinaryMask((ref != 0).astype(np.uint8)))
        return voxel_metrics(c)[0]
