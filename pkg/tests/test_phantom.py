import numpy as np
import pytest

from selfusion.ccl import label_array
from selfusion.fusion import FusionParams, confidence_map, connected_union
from selfusion.phantom import (PhantomError, PhantomSpec, VoterNoiseModel, generate_phantom,
                               lesion_cores, simulate_ensemble, simulate_views)


@pytest.fixture(scope="module")
def phantom():
    return generate_phantom(PhantomSpec())


@pytest.fixture(scope="module")
def ensemble(phantom):
    return simulate_ensemble(phantom[0], VoterNoiseModel())


def test_deterministic():
    a, img_a = generate_phantom(PhantomSpec(seed=3))
    b, img_b = generate_phantom(PhantomSpec(seed=3))
    assert a == b and img_a == img_b
    va = simulate_views(a, VoterNoiseModel(seed=5))
    vb = simulate_views(b, VoterNoiseModel(seed=5))
    assert all(x == y for x, y in zip(va, vb))


def test_seeds_differ():
    assert generate_phantom(PhantomSpec(seed=1))[0] != generate_phantom(PhantomSpec(seed=2))[0]


def test_lesion_count_and_size(phantom):
    gt, image = phantom
    assert gt.dims == image.dims == (48, 48, 48)
    labels, n = label_array(gt.array, 26)
    assert n == 3
    for k in range(1, n + 1):
        xs, ys, zs = np.nonzero(labels == k)
        for c in (xs, ys, zs):
            assert 3 <= c.max() - c.min() + 1 <= 9


def test_zero_lesions():
    gt, _ = generate_phantom(PhantomSpec(lesion_count=0))
    assert gt.count == 0


def test_placement_failure():
    with pytest.raises(PhantomError):
        generate_phantom(PhantomSpec(dims=(9, 9, 9), lesion_count=30, lesion_radius_range=(3, 4),
                                     max_attempts=20))


@pytest.mark.parametrize("kw", [dict(dims=(0, 4, 4)), dict(lesion_count=-1),
                                dict(lesion_radius_range=(3, 2)), dict(dims=(5, 5, 5))])
def test_bad_spec(kw):
    with pytest.raises(ValueError):
        PhantomSpec(**kw)


def test_spec_json_round_trip(tmp_path):
    spec = PhantomSpec(dims=(20, 21, 22), seed=9)
    path = tmp_path / "spec.json"
    path.write_text(spec.to_json())
    assert PhantomSpec.from_json(path) == spec


def test_supports_exceeding_views():
    with pytest.raises(ValueError):
        VoterNoiseModel(core_support=30).check(24)
    with pytest.raises(ValueError):
        VoterNoiseModel(boundary_flip_prob=1.5)


def test_core_vote_counts(phantom, ensemble):
    gt = phantom[0].array.astype(bool)
    conf = confidence_map(ensemble.views).array
    assert ensemble.core.any()
    assert (conf[ensemble.core] == 20).all()
    assert not (ensemble.core & ~gt).any()


def test_fp_blob_vote_counts(phantom, ensemble):
    gt = phantom[0].array.astype(bool)
    conf = confidence_map(ensemble.views).array
    assert ensemble.fp_blobs.any()
    assert (conf[ensemble.fp_blobs] == 8).all()
    assert not (ensemble.fp_blobs & gt).any()
    assert len(ensemble.fp_view_sets) == 4
    assert all(len(s) == 8 for s in ensemble.fp_view_sets)
    # nothing outside lesions and blobs gets a vote
    assert not conf[~gt & ~ensemble.fp_blobs].any()


def test_boundary_votes_bounded(phantom, ensemble):
    gt = phantom[0].array.astype(bool)
    conf = confidence_map(ensemble.views).array
    boundary = gt & ~ensemble.core
    assert conf[boundary].max() <= 24
    # flips with p=0.2 move the counts off the support value
    assert (conf[boundary] != 20).any()


def test_noise_free_views_equal_reference(phantom):
    gt = phantom[0]
    views = simulate_views(gt, VoterNoiseModel(core_support=24, boundary_flip_prob=0.0,
                                               fp_blob_count=0))
    assert all(v == gt for v in views)


def test_lesion_cores_of_cube():
    g = np.zeros((7, 7, 7), dtype=bool)
    g[1:6, 1:6, 1:6] = True
    core = lesion_cores(g)
    assert core.sum() == 27
    assert core[2:5, 2:5, 2:5].all()


def test_fused_default_recovers_lesions(phantom, ensemble):
    gt = phantom[0]
    fused = connected_union(confidence_map(ensemble.views), FusionParams())
    f = fused.array.astype(bool)
    assert not (f & ensemble.fp_blobs).any()
    assert not (ensemble.core & ~f).any()
