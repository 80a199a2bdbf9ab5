from __future__ import annotations

import numpy as np
import pytest
import torch

from otib.quantizer import (
    MODE_ARGMAX,
    MODE_RELAXED,
    MODE_SAMPLE,
    MODE_ST,
    Codebook,
    select_primitive,
    vq_losses,
)


def test_singleton_codebook_always_selected():
    torch.manual_seed(0)
    cb = Codebook(1, 4)
    u = torch.randn(16, 4)
    for mode in (MODE_ARGMAX, MODE_SAMPLE):
        idx, emb, _ = select_primitive(u, cb, mode, generator=torch.Generator().manual_seed(0))
        assert torch.all(idx == 0)
        assert torch.allclose(emb.detach(), cb.entries[0].expand_as(emb))


def test_argmax_returns_bitwise_nearest_entry():
    torch.manual_seed(1)
    cb = Codebook(8, 6)
    u = torch.randn(32, 6)
    idx, emb, logits = select_primitive(u, cb, MODE_ARGMAX)
    d2 = ((u.unsqueeze(1) - cb.entries.unsqueeze(0)) ** 2).sum(-1)
    assert torch.equal(idx, d2.argmin(dim=1))
    assert torch.equal(emb.detach(), cb.entries[idx])
    assert torch.allclose(logits, -cb.distances_sq(u), atol=1e-5)


def test_argmax_embedding_is_straight_through():
    cb = Codebook(4, 3)
    u = torch.randn(5, 3, requires_grad=True)
    _, emb, _ = select_primitive(u, cb, MODE_ARGMAX)
    emb.sum().backward()
    assert torch.allclose(u.grad, torch.ones_like(u))


def test_sample_frequencies_match_softmax_within_3_sigma():
    torch.manual_seed(2)
    cb = Codebook(4, 4)
    u = torch.randn(1, 4).repeat(10_000, 1)
    gen = torch.Generator().manual_seed(7)
    idx, _, logits = select_primitive(u, cb, MODE_SAMPLE, temperature=1.0, generator=gen)
    probs = torch.softmax(logits[0], dim=-1).detach().numpy()
    counts = np.bincount(idx.numpy(), minlength=4)
    n = 10_000
    for j in range(4):
        sigma = np.sqrt(n * probs[j] * (1 - probs[j]))
        assert abs(counts[j] - n * probs[j]) <= 3 * sigma + 1e-9


def test_low_temperature_sampling_concentrates_on_argmax():
    torch.manual_seed(3)
    cb = Codebook(6, 4)
    u = torch.randn(64, 4)
    nearest = cb.distances_sq(u).argmin(dim=-1)
    gen = torch.Generator().manual_seed(0)
    idx, _, _ = select_primitive(u, cb, MODE_SAMPLE, temperature=1e-9, generator=gen)
    assert torch.equal(idx, nearest)


def test_relaxed_mode_mixture_flows_gradient_to_entries_and_outputs():
    cb = Codebook(5, 4)
    u = torch.randn(8, 4, requires_grad=True)
    gen = torch.Generator().manual_seed(1)
    idx, emb, _ = select_primitive(u, cb, MODE_RELAXED, temperature=0.5, generator=gen)
    emb.sum().backward()
    assert u.grad is not None and torch.isfinite(u.grad).all()
    assert cb.entries.grad is not None
    assert idx.max() < 5


def test_straight_through_mode_forward_is_hard():
    cb = Codebook(5, 4)
    u = torch.randn(8, 4, requires_grad=True)
    gen = torch.Generator().manual_seed(2)
    idx, emb, _ = select_primitive(u, cb, MODE_ST, temperature=0.5, generator=gen)
    assert torch.allclose(emb.detach(), cb.entries[idx].detach())
    emb.sum().backward()
    assert u.grad is not None


def test_vq_losses_zero_when_output_equals_entry():
    cb = Codebook(3, 4)
    u = cb.entries[1].detach().clone().unsqueeze(0)
    cb_term, commit = vq_losses(u, cb.entries[1].unsqueeze(0))
    assert float(cb_term) == pytest.approx(0.0, abs=1e-12)
    assert float(commit) == pytest.approx(0.0, abs=1e-12)


def test_vq_losses_stop_gradient_directions():
    cb = Codebook(3, 4)
    u = torch.randn(6, 4, requires_grad=True)
    idx = torch.zeros(6, dtype=torch.long)
    selected = cb.entries[idx]
    cb_term, commit = vq_losses(u, selected)
    cb_term.backward(retain_graph=True)
    assert u.grad is None or torch.allclose(u.grad, torch.zeros_like(u))
    assert cb.entries.grad is not None
    cb.entries.grad = None
    u.grad = None
    commit.backward()
    assert cb.entries.grad is None or torch.allclose(
        cb.entries.grad, torch.zeros_like(cb.entries)
    )
    assert u.grad is not None


def test_ema_update_moves_entries_toward_assignments():
    torch.manual_seed(4)
    cb = Codebook(2, 3, ema_decay=0.5)
    target = torch.tensor([5.0, 5.0, 5.0])
    u = target.repeat(64, 1)
    idx = torch.zeros(64, dtype=torch.long)
    before = (cb.entries[0] - target).norm()
    for _ in range(6):
        cb.ema_update(u, idx)
    after = (cb.entries[0] - target).norm()
    assert after < before
    assert not cb.entries.requires_grad


def test_ortho_loss_prefers_orthogonal_entries():
    cb = Codebook(3, 3)
    with torch.no_grad():
        cb.entries.copy_(torch.eye(3))
    ortho = float(cb.ortho_loss())
    with torch.no_grad():
        cb.entries.copy_(torch.ones(3, 3))
    collinear = float(cb.ortho_loss())
    assert ortho == pytest.approx(0.0, abs=1e-10)
    assert collinear > ortho
