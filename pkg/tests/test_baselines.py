from __future__ import annotations

import numpy as np
import pytest
import torch

from otib.adapters import MonolithicAdapter
from otib.baselines import (
    BaselineConfig,
    MonolithicModel,
    apply_latent,
    infer_latent,
    make_baseline_optimizer,
    optimize_latent,
    train_baseline_step,
)
from otib.codec import param_digest
from otib.splits import build_split, generate_training_set


@pytest.fixture(scope="module")
def grid_data(grid_codec):
    codec, _ = grid_codec
    spec = build_split("grid", 1.00, seed=0)
    ts = generate_training_set(spec, 64, np.random.default_rng(5))
    return codec, codec.obs_to_tensor(ts.xs), codec.obs_to_tensor(ts.ys), ts


def _train(codec, x_t, y_t, config, steps=400, seed=0):
    torch.manual_seed(seed)
    model = MonolithicModel(config, "grid", (32,), seed=seed)
    opt = make_baseline_optimizer(model, config)
    gen = torch.Generator().manual_seed(seed)
    stats = None
    for step in range(steps):
        stats = train_baseline_step(model, codec, opt, x_t, y_t, config, step, steps, gen)
    return model, stats


@pytest.fixture(scope="module")
def disc_model(grid_data):
    codec, x_t, y_t, _ = grid_data
    config = BaselineConfig(kind="disc", codebook_size=36, lr=3e-3, warmup_ratio=0.05)
    model, stats = _train(codec, x_t, y_t, config)
    return model, stats


@pytest.fixture(scope="module")
def cont_model(grid_data):
    codec, x_t, y_t, _ = grid_data
    config = BaselineConfig(kind="cont", vae_beta=0.01, lr=3e-3, warmup_ratio=0.05)
    model, stats = _train(codec, x_t, y_t, config)
    return model, stats


@pytest.mark.slow
def test_disc_toy_convergence(disc_model):
    _, stats = disc_model
    assert stats.recon < 5.0  # most of the 64 samples reconstruct


def test_beta_zero_reduces_to_reconstruction(grid_data):
    codec, x_t, y_t, _ = grid_data
    config = BaselineConfig(kind="cont", vae_beta=0.0)
    torch.manual_seed(0)
    model = MonolithicModel(config, "grid", (32,), seed=0)
    opt = make_baseline_optimizer(model, config)
    stats = train_baseline_step(
        model, codec, opt, x_t, y_t, config, 0, 10, torch.Generator().manual_seed(0)
    )
    assert stats.loss == pytest.approx(stats.recon, rel=1e-6)


def test_infer_latent_deterministic_and_valid(grid_data, disc_model, cont_model):
    codec, x_t, y_t, _ = grid_data
    disc, _ = disc_model
    cont, _ = cont_model
    idx1 = infer_latent(disc, codec, x_t, y_t)
    idx2 = infer_latent(disc, codec, x_t, y_t)
    assert torch.equal(idx1, idx2)
    assert idx1.dtype == torch.long
    assert int(idx1.max()) < 36 and int(idx1.min()) >= 0
    z1 = infer_latent(cont, codec, x_t, y_t)
    z2 = infer_latent(cont, codec, x_t, y_t)
    assert torch.equal(z1, z2)
    assert z1.shape == (64, 16)


def test_apply_latent_deterministic(grid_data, disc_model):
    codec, x_t, y_t, _ = grid_data
    disc, _ = disc_model
    idx = infer_latent(disc, codec, x_t, y_t)
    a = apply_latent(disc, codec, idx, x_t)
    b = apply_latent(disc, codec, idx, x_t)
    assert torch.equal(a, b)


def test_optimize_latent_zero_steps_is_identity(grid_data, cont_model):
    codec, x_t, y_t, _ = grid_data
    cont, _ = cont_model
    z0 = infer_latent(cont, codec, x_t, y_t)
    z = optimize_latent(cont, codec, x_t, y_t, z0, steps=0, step_size=0.1)
    assert torch.equal(z, z0)


def test_optimize_latent_reduces_loss_statistically(grid_data, cont_model):
    codec, x_t, y_t, _ = grid_data
    cont, _ = cont_model
    z0 = infer_latent(cont, codec, x_t, y_t)
    z = optimize_latent(cont, codec, x_t, y_t, z0, steps=10, step_size=0.05)
    with torch.no_grad():
        s_x, _ = codec.posterior(x_t)
        before = codec.recon_loss(codec.decode_t(cont.transition(s_x, z0)), y_t)
        after = codec.recon_loss(codec.decode_t(cont.transition(s_x, z)), y_t)
    assert float(after.mean()) <= float(before.mean())
    assert (after <= before + 1e-6).float().mean() > 0.8


def test_optimize_latent_rejected_for_discrete(grid_data, disc_model):
    codec, x_t, y_t, _ = grid_data
    disc, _ = disc_model
    with pytest.raises(ValueError):
        optimize_latent(disc, codec, x_t, y_t, torch.zeros(64, 16), 5, 0.1)


def test_cont_opt_with_zero_steps_is_exactly_cont(grid_data, cont_model):
    codec, _, _, ts = grid_data
    cont, _ = cont_model
    plain = MonolithicAdapter(cont, codec, opt_steps=0)
    opt0 = MonolithicAdapter(cont, codec, opt_steps=0, opt_lr=0.5)
    t1, _ = plain.induce(ts.xs, ts.ys)
    t2, _ = opt0.induce(ts.xs, ts.ys)
    assert torch.equal(t1, t2)
    p1 = plain.predict(t1, ts.xs)
    p2 = opt0.predict(t2, ts.xs)
    assert np.array_equal(p1, p2)


def test_discrete_baseline_has_no_sequencing_surface(disc_model):
    disc, _ = disc_model
    assert not hasattr(disc, "execute_step")  # single-shot transition only
    assert disc.config.kind == "disc"


def test_monolithic_adapter_one_step_requires_discrete(grid_data, cont_model):
    codec, _, _, ts = grid_data
    cont, _ = cont_model
    adapter = MonolithicAdapter(cont, codec)
    assert adapter.n_codes is None
    with pytest.raises(ValueError):
        adapter.one_step(ts.xs[:2], 0)


def test_codec_frozen_through_baseline_training(grid_data):
    codec, x_t, y_t, _ = grid_data
    digest = param_digest(codec)
    config = BaselineConfig(kind="disc", codebook_size=8, lr=1e-3)
    _train(codec, x_t, y_t, config, steps=20)
    assert param_digest(codec) == digest


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        MonolithicModel(BaselineConfig(kind="weird"), "grid", (32,), seed=0)
