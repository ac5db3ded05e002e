from collections import Counter

import numpy as np
import pytest
import torch
from hypothesis import given, strategies as st
from scipy.stats import chi2_contingency

from actlumos.sampler import (AugmentParams, SpatialDraw, balanced_batch, draw_spatial, spatial_augment,
                              temporal_sample, two_view)

LABELS = {f"c{k}_{j}": k for k in range(10) for j in range(28)}
L, H, W = 16, 32, 32


def _probe():
    # value encodes (t, h, w) affinely
    t, h, w = np.meshgrid(np.arange(L), np.arange(H), np.arange(W), indexing="ij")
    v = (t * H * W + h * W + w) / (L * H * W)
    return torch.from_numpy(np.repeat(v[None], 3, 0)).double()


def test_eight_clips_for_4x2():
    batch = balanced_batch(LABELS, 4, 2, np.random.default_rng(0))
    assert len(batch) == 8 and len({c for c, _ in batch}) == 8
    assert sorted(Counter(k for _, k in batch).values()) == [2, 2, 2, 2]


def test_single_class_batch_permitted():
    batch = balanced_batch(LABELS, 1, 3, np.random.default_rng(0))
    assert len({k for _, k in batch}) == 1 and len(batch) == 3


def test_ten_thousand_draws_balanced():
    rng = np.random.default_rng(1)
    for _ in range(10_000):
        batch = balanced_batch(LABELS, 4, 2, rng)
        counts = Counter(k for _, k in batch)
        assert len(counts) == 4 and set(counts.values()) == {2}
        assert len({c for c, _ in batch}) == 8
        assert all(LABELS[c] == k for c, k in batch)


def test_batch_deterministic():
    a = balanced_batch(LABELS, 4, 2, np.random.default_rng(5))
    b = balanced_batch(LABELS, 4, 2, np.random.default_rng(5))
    assert a == b


def test_deficient_class_named():
    labels = {"a0": 0, "a1": 0, "b0": 1}
    with pytest.raises(ValueError, match=r"deficient classes: \[1\]"):
        balanced_batch(labels, 2, 2, np.random.default_rng(0))


def test_augment_params_validation():
    with pytest.raises(ValueError):
        AugmentParams(crop_scale_range=(0.9, 0.5))
    with pytest.raises(ValueError):
        AugmentParams(flip_prob=2)
    with pytest.raises(ValueError):
        AugmentParams(slow_stride=0)
    with pytest.raises(ValueError, match="too short"):
        AugmentParams(out_frames=9).check_length(16)


def test_identity_augmentation_views_equal_original():
    params = AugmentParams((1.0, 1.0), 0.0, 1, 1, L)
    x = _probe()
    v1, v2 = two_view(x, params, np.random.default_rng(0))
    assert torch.equal(v1, x) and torch.equal(v2, x)


def test_slow_view_spans_twice_the_time():
    params = AugmentParams((1.0, 1.0), 0.0, 1, 2, 8)
    x = _probe()
    v1, v2 = two_view(x, params, np.random.default_rng(3))
    frame_of = lambda v, i: int(round(float(v[0, i, 0, 0]) * L))  # noqa: E731
    span1 = frame_of(v1, 7) - frame_of(v1, 0)
    span2 = frame_of(v2, 7) - frame_of(v2, 0)
    assert (span1, span2) == (7, 14)
    assert v1.shape[1] == v2.shape[1] == 8


@given(seed=st.integers(0, 2**31 - 1))
def test_same_transform_on_every_frame(seed):
    x = _probe()
    v1, v2 = two_view(x, AugmentParams(), np.random.default_rng(seed))
    for v in (v1, v2):
        # frame offset is a constant shift for an affine probe
        diffs = v - v[:, :1]
        assert torch.allclose(diffs, diffs[..., :1, :1].expand_as(diffs), atol=1e-9)


def test_spatial_only_shares_temporal_sampling():
    params = AugmentParams((1.0, 1.0), 0.5)
    x = _probe()
    rng = np.random.default_rng(0)
    for _ in range(20):
        v1, v2 = two_view(x, params, rng, "spatial_only")
        # flips aside, frame indices match
        a = v1 if not bool(v1[0, 0, 0, 0] > v1[0, 0, 0, -1]) else v1.flip(-1)
        b = v2 if not bool(v2[0, 0, 0, 0] > v2[0, 0, 0, -1]) else v2.flip(-1)
        assert torch.equal(a, b)


def test_temporal_only_shares_spatial_draw():
    x = _probe()
    rng = np.random.default_rng(0)
    for _ in range(20):
        v1, v2 = two_view(x, AugmentParams(), rng, "temporal_only")
        # identical spatial transform: frame-0 images differ by a constant time offset
        d = v2[:, 0] - v1[:, 0]
        assert torch.allclose(d, d[..., :1, :1].expand_as(d), atol=1e-9)


def test_unknown_variant():
    with pytest.raises(ValueError):
        two_view(_probe(), AugmentParams(), np.random.default_rng(0), "none")


def test_identity_draw_returns_input():
    x = torch.rand(3, 4, 16, 16)
    assert torch.equal(spatial_augment(x, SpatialDraw.identity(16, 16)), x)


def test_double_flip_identity():
    x = torch.rand(3, 4, 16, 16)
    d = SpatialDraw(0, 0, 16, 16, True)
    assert torch.equal(spatial_augment(spatial_augment(x, d), d), x)


def test_fifty_draws_output_dims():
    rng = np.random.default_rng(0)
    x = torch.rand(3, 4, 32, 24)
    for _ in range(50):
        d = draw_spatial(32, 24, AugmentParams((0.3, 1.0)), rng)
        assert spatial_augment(x, d).shape == x.shape
        assert spatial_augment(x, d, (16, 16)).shape == (3, 4, 16, 16)


def test_degenerate_crop_rejected():
    with pytest.raises(ValueError):
        spatial_augment(torch.rand(3, 4, 16, 16), SpatialDraw(10, 0, 10, 16, False))


def test_temporal_sample_indices():
    x = _probe()
    v = temporal_sample(x, 3, 2, 4)
    assert [int(round(float(v[0, i, 0, 0]) * L)) for i in range(4)] == [3, 5, 7, 9]


def test_two_view_deterministic():
    x = _probe()
    a = two_view(x, AugmentParams(), np.random.default_rng(9))
    b = two_view(x, AugmentParams(), np.random.default_rng(9))
    assert all(torch.equal(p, q) for p, q in zip(a, b))


def test_view_flips_independent():
    x = _probe()
    rng = np.random.default_rng(2024)
    table = np.zeros((2, 2))
    for _ in range(1000):
        v1, v2 = two_view(x, AugmentParams(), rng)
        f1 = int(bool(v1[0, 0, 0, 0] > v1[0, 0, 0, -1]))
        f2 = int(bool(v2[0, 0, 0, 0] > v2[0, 0, 0, -1]))
        table[f1, f2] += 1
    assert table.min() > 0
    assert chi2_contingency(table)[1] > 0.01
