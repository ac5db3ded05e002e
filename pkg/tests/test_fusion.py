import math

import numpy as np
import pytest
import torch
from hypothesis import given, strategies as st

from actlumos.fusion import (DFFGate, Fusion, StaticConcatFusion, TemporalHead, TemporalHeadConfig, dff_fuse,
                             dff_gate, static_concat_fuse, temporal_head)
from actlumos.gradcheck import finite_difference, relative_error


def _seqs(seed, T=8, C=6, dtype=torch.float32):
    g = torch.Generator().manual_seed(seed)
    return torch.randn(T, C, generator=g, dtype=dtype), torch.randn(T, C, generator=g, dtype=dtype)


def test_zero_gate_is_even():
    gate = DFFGate(6)
    with torch.no_grad():
        for p in gate.parameters():
            p.zero_()
    w = dff_gate(*_seqs(0), gate)
    assert torch.equal(w, torch.full((8, 2), 0.5))


def test_gate_closed_form_softmax():
    gate = DFFGate(2)
    with torch.no_grad():
        for p in gate.parameters():
            p.zero_()
        gate.fc2.bias.copy_(torch.tensor([math.log(3), 0.0]))
    w = dff_gate(*_seqs(0, C=2), gate)
    assert torch.allclose(w, torch.tensor([0.75, 0.25]).expand(8, 2), atol=1e-7)


@given(seed=st.integers(0, 10_000))
def test_gate_permutation_equivariance(seed):
    gate = DFFGate(6)
    d, r = _seqs(seed)
    perm = torch.randperm(8, generator=torch.Generator().manual_seed(seed))
    assert torch.allclose(gate(d[perm], r[perm]), gate(d, r)[perm], atol=1e-7)


def test_gate_shape_mismatch():
    with pytest.raises(ValueError):
        DFFGate(6)(torch.zeros(8, 6), torch.zeros(7, 6))


@given(seed=st.integers(0, 2**31 - 1), scale=st.floats(0.01, 100))
def test_gate_rows_on_simplex(seed, scale):
    gate = DFFGate(6)
    d, r = _seqs(seed)
    w = gate(scale * d, scale * r)
    assert torch.all(w >= 0) and torch.all(w <= 1)
    assert torch.allclose(w.sum(-1), torch.ones(8), atol=1e-6)


def test_fuse_endpoints_exact():
    d, r = _seqs(1)
    ones = torch.ones(8, 1)
    assert torch.equal(dff_fuse(d, r, torch.cat([ones, 0 * ones], 1)), d)
    assert torch.equal(dff_fuse(d, r, torch.cat([0 * ones, ones], 1)), r)


def test_fuse_symmetric_cancel():
    d, _ = _seqs(2)
    assert torch.count_nonzero(dff_fuse(d, -d, torch.full((8, 2), 0.5))) == 0


@given(seed=st.integers(0, 10_000))
def test_fuse_within_bounds(seed):
    d, r = _seqs(seed)
    g = torch.Generator().manual_seed(seed + 1)
    a = torch.rand(8, 1, generator=g)
    out = dff_fuse(d, r, torch.cat([a, 1 - a], 1))
    lo, hi = torch.minimum(d, r), torch.maximum(d, r)
    assert torch.all(out >= lo - 1e-6) and torch.all(out <= hi + 1e-6)


def test_fuse_rejects_bad_weights():
    d, r = _seqs(3)
    with pytest.raises(ValueError):
        dff_fuse(d, r, torch.full((8, 2), 0.6))
    with pytest.raises(ValueError):
        dff_fuse(d, r, torch.tensor([[1.5, -0.5]]).expand(8, 2))
    with pytest.raises(ValueError):
        dff_fuse(d, r[:4], torch.full((8, 2), 0.5))


def test_static_projection_selects_and_averages():
    d, r = _seqs(4)
    fusion = StaticConcatFusion(6)
    assert torch.allclose(static_concat_fuse(d, r, fusion), (d + r) / 2, atol=1e-6)
    with torch.no_grad():
        fusion.proj.weight.copy_(torch.cat([torch.eye(6), torch.zeros(6, 6)], 1))
    assert torch.equal(static_concat_fuse(d, r, fusion), d)
    with pytest.raises(ValueError):
        fusion(d, r[:3])


def test_static_projection_gradient_matches_fd():
    d, r = _seqs(5, dtype=torch.float64)
    fusion = StaticConcatFusion(6).double()
    head = TemporalHead(TemporalHeadConfig(6, 1, 2, 3, 8), 0).double()
    y = torch.tensor([1])
    W = fusion.proj.weight

    def f():
        return torch.nn.functional.cross_entropy(head(fusion(d, r)[None]), y)

    W.grad = None
    f().backward()
    fd = finite_difference(f, [W.data], 1e-4)[0]
    assert relative_error(W.grad, fd) < 1e-4


def test_fusion_dispatch():
    d, r = _seqs(6)
    assert torch.equal(Fusion("dark_only", 6)(d, None), d)
    assert torch.equal(Fusion("retinex_only", 6)(None, r), r)
    f = Fusion("dff", 6)
    f(d, r)
    assert f.last_weights.shape == (8, 2)
    with pytest.raises(ValueError):
        Fusion("bogus", 6)


def _head(seed=0, **kw):
    cfg = TemporalHeadConfig(**{"model_dim": 8, "num_layers": 2, "num_heads": 2, "num_classes": 10,
                                "seq_len": 5, **kw})
    return TemporalHead(cfg, seed)


def test_head_output_shape():
    assert temporal_head(torch.randn(5, 8), _head()).shape == (10,)
    assert temporal_head(torch.randn(3, 5, 8), _head()).shape == (3, 10)


def test_head_input_independent_when_mixing_zeroed():
    head = _head(1)
    with torch.no_grad():
        for layer in head.layers:
            for p in list(layer.attn.parameters()) + list(layer.ff.parameters()):
                p.zero_()
        head.cls_token.normal_()
    a = head(torch.randn(5, 8))
    b = head(100 * torch.randn(5, 8))
    assert torch.allclose(a, b, atol=1e-6)
    assert torch.allclose(a, head.classifier(head.norm(head.cls_token)), atol=1e-6)


def test_head_order_sensitive():
    head = _head(2)
    seq = torch.randn(5, 8, generator=torch.Generator().manual_seed(0))
    assert not torch.allclose(head(seq), head(seq.flip(0)), atol=1e-6)


def test_head_length_mismatch_and_config():
    with pytest.raises(ValueError, match="positional"):
        _head()(torch.randn(4, 8))
    with pytest.raises(ValueError):
        TemporalHeadConfig(model_dim=6, num_heads=4)


def test_dff_responsiveness():
    """Trained gate prefers whichever stream carries the class signal, per half."""
    torch.manual_seed(0)
    T, C, K, N = 8, 6, 3, 384
    g = torch.Generator().manual_seed(0)
    y = torch.randint(0, K, (N,), generator=g)
    proto = 3.0 * torch.eye(C)[:K]
    informative = proto[y][:, None, :].expand(N, T, C) + 0.3 * torch.randn(N, T, C, generator=g)
    noise = torch.randn(N, T, C, generator=g) * 1.5
    first = torch.arange(T) < T // 2
    mask = first[None, :, None]
    dark = torch.where(mask, informative, noise)
    ret = torch.where(mask, noise, informative)

    gate = DFFGate(C)
    clf = torch.nn.Linear(C, K)
    opt = torch.optim.Adam(list(gate.parameters()) + list(clf.parameters()), lr=1e-2)
    for _ in range(400):
        w = gate(dark, ret)
        fused = dff_fuse(dark, ret, w)
        loss = torch.nn.functional.cross_entropy(clf(fused.mean(1)), y)
        opt.zero_grad()
        loss.backward()
        opt.step()
    with torch.no_grad():
        w = gate(dark, ret)
    assert float(w[:, first, 0].mean()) > 0.5
    assert float(w[:, ~first, 1].mean()) > 0.5
