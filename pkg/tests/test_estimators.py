import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from selfusion import SelfEnsembleFusion, ViewAugmenter
from selfusion.fusion import FusionParams, self_fuse
from selfusion.volume import BinaryMask, Volume
from selfusion.xform import apply_array, view_transform

from conftest import random_mask


def test_params_and_clone():
    est = SelfEnsembleFusion(tau1=12, tau2=3, connectivity=6)
    assert est.get_params() == dict(tau1=12, tau2=3, connectivity=6, n_views=24)
    c = clone(est)
    assert c.get_params() == est.get_params() and c is not est
    est.set_params(tau2=5)
    assert est.tau2 == 5
    assert ViewAugmenter().get_params() == {"flip_convention": "none-flip"}


def test_augmenter_round_trip():
    rng = np.random.default_rng(0)
    arr = rng.integers(0, 9, size=(5, 6, 7))
    aug = ViewAugmenter().fit()
    views = aug.transform(arr)
    assert len(views) == aug.n_views_ == 24
    assert np.array_equal(views[5], apply_array(view_transform(aug.views_[5]), arr))
    back = aug.inverse_transform(views)
    assert back.shape == (24, 5, 6, 7)
    assert all(np.array_equal(b, arr) for b in back)


def test_augmenter_volumes_keep_spacing():
    v = Volume(np.zeros((2, 3, 4), dtype=np.float32), (1.0, 2.0, 3.0))
    out = ViewAugmenter().fit().transform(v)
    assert isinstance(out[0], Volume)
    assert out[0].spacing == (1.0, 2.0, 3.0)


def test_augmenter_errors():
    with pytest.raises(NotFittedError):
        ViewAugmenter().transform(np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        ViewAugmenter("diagonal").fit()
    aug = ViewAugmenter().fit()
    with pytest.raises(ValueError):
        aug.transform(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        aug.inverse_transform([np.zeros((2, 2, 2))] * 3)
    views = aug.transform(np.zeros((2, 3, 4)))
    views[7] = np.zeros((9, 9, 9))
    with pytest.raises(ValueError, match="axial:270:flip"):
        aug.inverse_transform(views)


def test_fusion_matches_library():
    rng = np.random.default_rng(1)
    for _ in range(10):
        masks = [random_mask(rng, (8, 9, 10)) for _ in range(24)]
        t1 = int(rng.integers(0, 24))
        t2 = int(rng.integers(0, t1 + 1))
        est = SelfEnsembleFusion(t1, t2)
        got = est.fit_transform(masks)
        ref, conf = self_fuse([BinaryMask(m) for m in masks], FusionParams(t1, t2))
        assert np.array_equal(got, ref.array)
        assert np.array_equal(est.confidence_map_, conf.array)
        assert np.array_equal(est.transform(np.stack(masks)), ref.array)


def test_fusion_validation():
    masks = [np.zeros((3, 3, 3), dtype=np.uint8)] * 24
    with pytest.raises(ValueError):
        SelfEnsembleFusion(tau1=24).fit(masks)
    with pytest.raises(ValueError):
        SelfEnsembleFusion(tau1=4, tau2=5).fit(masks)
    with pytest.raises(ValueError):
        SelfEnsembleFusion(connectivity=10).fit(masks)
    with pytest.raises(TypeError):
        SelfEnsembleFusion(tau1=4.5).fit(masks)
    with pytest.raises(ValueError):
        SelfEnsembleFusion().fit(masks[:23])
    bad = list(masks)
    bad[3] = np.full((3, 3, 3), 2, dtype=np.uint8)
    with pytest.raises(ValueError, match="mask 3"):
        SelfEnsembleFusion().fit(bad)
    with pytest.raises(NotFittedError):
        SelfEnsembleFusion().transform(masks)


def test_fuse_confidence_checks_range():
    est = SelfEnsembleFusion()
    with pytest.raises(ValueError):
        est.fuse_confidence(np.full((2, 2, 2), 25, dtype=np.int32))
    with pytest.raises(ValueError):
        est.fuse_confidence(np.zeros((2, 2, 2), dtype=np.float32))


def test_score_is_dice():
    gt = np.zeros((6, 6, 6), dtype=np.uint8)
    gt[1:4, 1:4, 1:4] = 1
    est = SelfEnsembleFusion().fit([gt] * 24)
    assert est.score([gt] * 24, gt) == 1.0
    assert est.score([np.zeros_like(gt)] * 24, gt) == 0.0
