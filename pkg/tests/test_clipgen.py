import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from actlumos.clipgen import (MOTION_PROGRAMS, IlluminationProfile, ManifestError, VideoClip, generate_clip,
                              generate_dataset, load_dataset, render_primitive, sample_profile, save_dataset)

DIMS = (16, 32, 32)


def test_same_arguments_identical_output():
    p = IlluminationProfile(1.0, [], 0.0)
    a = generate_clip(0, p, 7, DIMS).data
    b = generate_clip(0, p, 7, DIMS).data
    assert np.array_equal(a, b)


def test_noisy_render_is_deterministic():
    p = IlluminationProfile(0.3, [(2, 6, 0.05)], 0.01)
    assert np.array_equal(generate_clip(3, p, 11, DIMS).data, generate_clip(3, p, 11, DIMS).data)


@pytest.mark.parametrize("cls", range(10))
def test_dim_clip_is_dim(cls):
    bright = generate_clip(cls, IlluminationProfile(1.0, [], 0.0), 5, DIMS).data
    dark = generate_clip(cls, IlluminationProfile(0.1, [], 0.0), 5, DIMS).data
    margin = 1e-6
    assert np.all(dark.mean(axis=(0, 2, 3)) <= 0.1 * bright.mean(axis=(0, 2, 3)) + margin)


def test_neighbouring_classes_differ():
    p = IlluminationProfile(1.0, [], 0.0)
    a = generate_clip(0, p, 3, DIMS).data
    b = generate_clip(1, p, 3, DIMS).data
    frac = np.mean(np.abs(a - b) > 1e-6)
    assert frac >= 0.01


@pytest.mark.parametrize("k", range(len(MOTION_PROGRAMS) - 1))
def test_every_adjacent_class_pair_differs(k):
    p = IlluminationProfile(1.0, [], 0.0)
    a = generate_clip(k, p, 9, DIMS).data
    b = generate_clip(k + 1, p, 9, DIMS).data
    assert np.mean(np.abs(a - b) > 1e-6) >= 0.01


def test_invalid_class_and_dims_rejected():
    p = IlluminationProfile()
    with pytest.raises(ValueError, match="class_id"):
        generate_clip(99, p, 0, DIMS)
    with pytest.raises(ValueError, match="class_id"):
        generate_clip(5, p, 0, DIMS, num_classes=3)
    with pytest.raises(ValueError, match="below the minimum"):
        generate_clip(0, p, 0, (1, 32, 32))
    with pytest.raises(ValueError, match="below the minimum"):
        generate_clip(0, p, 0, (16, 4, 32))


def test_profile_validation():
    with pytest.raises(ValueError):
        IlluminationProfile(0.0)
    with pytest.raises(ValueError):
        IlluminationProfile(0.5, [(4, 2, 0.3)])
    with pytest.raises(ValueError):
        IlluminationProfile(0.5, [(0, 4, 0.3), (2, 6, 0.3)])
    with pytest.raises(ValueError):
        IlluminationProfile(0.5, noise_sigma=-1)
    with pytest.raises(ValueError):
        IlluminationProfile(0.5, [(0, 20, 0.3)]).levels(16)


def test_video_clip_validation():
    with pytest.raises(ValueError):
        VideoClip(np.zeros((2, 16, 32, 32)))
    with pytest.raises(ValueError):
        VideoClip(np.full((3, 16, 32, 32), 1.5))
    with pytest.raises(ValueError):
        VideoClip(np.full((3, 16, 32, 32), np.nan))
    assert VideoClip(np.zeros((3, 16, 32, 32))).dims == DIMS


def test_dataset_size_and_train_count():
    ds = generate_dataset(10, 40, DIMS, 1)
    assert len(ds.clips) == 400
    assert len(ds.split("train")) == 280
    assert len(ds.split("val")) == 40
    assert len(ds.split("test")) == 80


def test_dataset_split_is_deterministic():
    a = generate_dataset(10, 40, DIMS, 4)
    b = generate_dataset(10, 40, DIMS, 4)
    assert a.split_assignment == b.split_assignment
    assert a == b
    assert generate_dataset(10, 40, DIMS, 5).split_assignment != a.split_assignment


def test_small_dataset_covers_every_split():
    ds = generate_dataset(2, 4, DIMS, 0)
    for split in ("train", "val", "test"):
        assert {c.class_id for c in ds.split(split)} == {0, 1}


def test_too_few_clips_rejected():
    with pytest.raises(ValueError, match="too small"):
        generate_dataset(10, 3, DIMS, 0)


def test_roughly_half_or_more_clips_have_transitions():
    ds = generate_dataset(10, 40, DIMS, 1)
    frac = np.mean([c.profile.has_transition for c in ds.clips])
    assert 0.4 <= frac <= 0.95


def test_manifest_round_trip(tmp_path):
    ds = generate_dataset(10, 40, DIMS, 2)
    path = save_dataset(ds, tmp_path / "d.json")
    back = load_dataset(path)
    assert back == ds
    assert np.array_equal(back.render(back.clips[17]).data, ds.render(ds.clips[17]).data)


def test_manifest_version_mismatch(tmp_path):
    path = save_dataset(generate_dataset(2, 4, DIMS, 0), tmp_path / "d.json")
    raw = json.loads(path.read_text())
    raw["version"] = 999
    path.write_text(json.dumps(raw))
    with pytest.raises(ManifestError, match="version"):
        load_dataset(path)


def test_manifest_duplicate_id(tmp_path):
    path = save_dataset(generate_dataset(2, 4, DIMS, 0), tmp_path / "d.json")
    raw = json.loads(path.read_text())
    raw["clips"][1]["id"] = raw["clips"][0]["id"]
    path.write_text(json.dumps(raw))
    with pytest.raises(ManifestError, match="duplicate"):
        load_dataset(path)


def test_corrupt_manifest(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ManifestError):
        load_dataset(path)


@given(seed=st.integers(0, 2**31 - 1), cls=st.integers(0, 9),
       hi=st.floats(0.05, 1.0), lo_frac=st.floats(0.01, 1.0))
def test_lower_light_never_brightens(seed, cls, hi, lo_frac):
    dims = (4, 16, 16)
    bright = generate_clip(cls, IlluminationProfile(hi, [], 0.0), seed, dims).data
    dark = generate_clip(cls, IlluminationProfile(hi * lo_frac, [], 0.0), seed, dims).data
    assert np.all(dark <= bright + 1e-7)


@given(seed=st.integers(0, 2**31 - 1))
def test_sampled_profiles_are_valid(seed):
    rng = np.random.default_rng(seed)
    for fam in ("A", "B"):
        lv = sample_profile(rng, 16, fam).levels(16)
        assert np.all((lv > 0) & (lv <= 1))


def test_nearest_centroid_beats_chance_at_full_light():
    K, n = 10, 12
    p = IlluminationProfile(1.0, [], 0.0)

    def feat(k, s):
        # per-frame mean brightness plus centroid track
        x = render_primitive(k, s, (16, 32, 32))[0].mean(axis=0)
        ys, xs = np.mgrid[0:32, 0:32]
        m = x.sum(axis=(1, 2)) + 1e-9
        return np.concatenate([x.mean(axis=(1, 2)), (x * ys).sum((1, 2)) / m, (x * xs).sum((1, 2)) / m])

    train = {k: np.mean([feat(k, 100 * k + s) for s in range(n)], axis=0) for k in range(K)}
    hits = 0
    for k in range(K):
        for s in range(n, n + 5):
            f = feat(k, 100 * k + s)
            pred = min(train, key=lambda c: np.linalg.norm(train[c] - f))
            hits += pred == k
    assert hits / (5 * K) > 1 / K
    assert generate_clip(0, p, 1, (16, 32, 32)).data.max() > 0.5
