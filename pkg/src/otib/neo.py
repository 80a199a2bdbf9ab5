"""Theory-model training machinery.

A model owns a codebook of primitive embeddings, a goal-conditioned
programmer that proposes the next code, and a deterministic transition that
executes it in latent space.  Training unrolls K steps from the encoded
source, decodes every intermediate state against the target, picks the
description-length-optimal prefix, and backpropagates the reconstruction
loss only through that prefix, plus quantization and state-grounding terms.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch
from torch import Tensor, nn

from .codec import TrainingDivergedError
from .dataset_io import digest_of
from .domains import ARITHMETIC
from .nets import FilmMlp, TokenPolicy, TokenTransition
from .quantizer import (
    MODE_ARGMAX,
    MODE_NOISY_ST,
    MODE_RELAXED,
    MODE_ST,
    Codebook,
    select_primitive,
    vq_losses,
)


@dataclass
class NeoConfig:
    k_max: int = 4
    codebook_size: int = 6
    d_action: int = 16
    relaxation: str = MODE_RELAXED  # or MODE_ST
    tau_start: float = 0.3
    tau_end: float = 0.1
    tau_ratio: float = 1.0
    commitment_cost: float = 0.25
    ema_decay: Optional[float] = None
    ortho_weight: float = 0.0
    lambda_mdl_start: float = 0.95
    lambda_mdl_end: float = 0.95
    lambda_mdl_ratio: float = 0.0
    lambda_vq: float = 1.0
    lambda_state: float = 0.1
    lr: float = 5e-4
    weight_decay: float = 1e-2
    warmup_ratio: float = 0.1
    min_lr_ratio: float = 0.1
    policy_lr_scale: float = 0.25
    transition_lr_scale: float = 1.0
    grad_clip: float = 1.0
    epochs: int = 100
    batch_size: int = 128
    policy_d_model: int = 32
    policy_d_ff: int = 128
    policy_heads: int = 4
    policy_layers: int = 6
    transition_d_model: int = 32
    transition_d_ff: int = 128
    transition_heads: int = 2
    transition_layers: int = 4
    n_blocks: int = 2
    residual_transition: bool = True
    code_restart_share: float = 0.0  # restart entries whose usage share decays below this

    def digest(self) -> str:
        return digest_of(asdict(self))


def linear_schedule(step: int, total_steps: int, start: float, end: float, ratio: float) -> float:
    """Linear ramp from start to end over ratio * total steps, then constant."""
    ramp = ratio * total_steps
    if ramp <= 0 or start == end:
        return end if step >= ramp and ramp > 0 else (start if ramp > 0 else end)
    frac = min(step / ramp, 1.0)
    return start + (end - start) * frac


def lambda_schedule(step: int, total_steps: int, config: NeoConfig) -> float:
    if config.lambda_mdl_start == config.lambda_mdl_end or config.lambda_mdl_ratio <= 0:
        return config.lambda_mdl_end
    return linear_schedule(
        step, total_steps, config.lambda_mdl_start, config.lambda_mdl_end, config.lambda_mdl_ratio
    )


def tau_schedule(step: int, total_steps: int, config: NeoConfig) -> float:
    if config.tau_start == config.tau_end or config.tau_ratio <= 0:
        return config.tau_end
    return linear_schedule(step, total_steps, config.tau_start, config.tau_end, config.tau_ratio)


def warmup_cosine(step: int, total_steps: int, warmup_ratio: float, min_lr_ratio: float) -> float:
    """Learning-rate multiplier: linear warmup then cosine decay to a floor."""
    warmup = max(1.0, warmup_ratio * total_steps)
    if step < warmup:
        return (step + 1) / warmup
    if total_steps <= warmup:
        return 1.0
    frac = min((step - warmup) / max(total_steps - warmup, 1), 1.0)
    return min_lr_ratio + (1 - min_lr_ratio) * 0.5 * (1 + math.cos(math.pi * frac))


def select_length(losses: Sequence[float], lambda_mdl: float) -> int:
    """MDL prefix selection over per-state losses (state index, 1-based).

    Returns argmin_k lambda^k * loss_k for k = 1..K+1; a returned value of 1
    means the empty program.  Ties break toward the smaller k.
    """
    if lambda_mdl <= 0:
        raise ValueError("lambda_mdl must be positive")
    arr = np.asarray(list(losses), dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("losses must be a nonempty vector")
    if not np.all(np.isfinite(arr)):
        raise ValueError("losses must be finite")
    weights = lambda_mdl ** np.arange(1, arr.size + 1)
    return int(np.argmin(weights * arr)) + 1


def select_length_batch(losses: Tensor, lambda_mdl: float) -> Tensor:
    """Batched MDL selection; losses is (B, K+1), returns 1-based indices."""
    weights = lambda_mdl ** torch.arange(1, losses.shape[1] + 1, dtype=losses.dtype)
    return (losses * weights).argmin(dim=1) + 1


class NeoModel(nn.Module):
    """Codebook + goal-conditioned programmer + latent transition."""

    def __init__(self, config: NeoConfig, domain: str, state_shape: tuple[int, ...], seed: int):
        super().__init__()
        self.config = config
        self.domain = domain
        self.state_shape = tuple(state_shape)
        torch.manual_seed(seed)
        self.codebook = Codebook(config.codebook_size, config.d_action, config.ema_decay)
        if domain == ARITHMETIC:
            n_tokens, token_dim = state_shape
            self.programmer = TokenPolicy(
                token_dim,
                n_tokens,
                config.d_action,
                d_model=config.policy_d_model,
                d_ff=config.policy_d_ff,
                heads=config.policy_heads,
                layers=config.policy_layers,
            )
            self.transition = TokenTransition(
                token_dim,
                n_tokens,
                config.d_action,
                d_model=config.transition_d_model,
                d_ff=config.transition_d_ff,
                heads=config.transition_heads,
                layers=config.transition_layers,
            )
        else:
            (dim,) = state_shape
            self.programmer = FilmMlp(
                dim,
                dim,
                config.d_action,
                d_model=config.policy_d_model,
                d_ff=config.policy_d_ff,
                n_blocks=config.n_blocks,
            )
            self.transition = FilmMlp(
                dim,
                config.d_action,
                dim,
                d_model=config.transition_d_model,
                d_ff=config.transition_d_ff,
                n_blocks=config.n_blocks,
                residual=config.residual_transition,
            )

    def propose(self, state: Tensor, goal: Tensor) -> Tensor:
        return self.programmer(state, goal)

    def execute_step(self, state: Tensor, embedding: Tensor) -> Tensor:
        out = self.transition(state, embedding)
        if not torch.isfinite(out).all():
            raise TrainingDivergedError(-1, "transition produced non-finite state")
        return out

    def param_groups(self) -> list[dict]:
        policy = list(self.programmer.parameters()) + [
            p for p in self.codebook.parameters() if p.requires_grad
        ]
        return [
            {"params": policy, "role": "policy"},
            {"params": list(self.transition.parameters()), "role": "transition"},
        ]


def init_neo(config: NeoConfig, domain: str, state_shape: tuple[int, ...], seed: int) -> NeoModel:
    return NeoModel(config, domain, state_shape, seed)


@dataclass
class Trace:
    """One unrolled execution: K+1 states, K codes, per-state target losses."""

    states: Tensor  # (B, K+1, *state_shape)
    codes: Tensor  # (B, K) long
    pre_quant: Tensor  # (B, K, d_action)
    embeddings: Tensor  # (B, K, d_action)
    logits: Tensor  # (B, K, n_codes)
    losses: Tensor  # (B, K+1)

    @property
    def k_unrolled(self) -> int:
        return self.codes.shape[1]


def rollout(
    model: NeoModel,
    codec: nn.Module,
    s1: Tensor,
    s_goal: Tensor,
    y_t: Tensor,
    k_steps: int,
    mode: str,
    temperature: float = 1.0,
    generator: Optional[torch.Generator] = None,
) -> Trace:
    """Unroll select/execute for k_steps and score every decoded state.

    ``y_t`` is the tensorized target observation; losses use the domain's
    training reconstruction loss, the same quantity MDL selection minimizes.
    """
    batch = s1.shape[0]
    states = [s1]
    codes, pre_quants, embeddings, logits_all = [], [], [], []
    s = s1
    for _ in range(k_steps):
        u = model.propose(s, s_goal)
        idx, emb, logits = select_primitive(
            u, model.codebook, mode, temperature=temperature, generator=generator
        )
        s = model.execute_step(s, emb)
        states.append(s)
        codes.append(idx)
        pre_quants.append(u)
        embeddings.append(emb)
        logits_all.append(logits)
    stacked = torch.stack(states, dim=1)
    flat = stacked.reshape(batch * (k_steps + 1), *model.state_shape)
    recon = codec.decode_t(flat)
    target = y_t.repeat_interleave(k_steps + 1, dim=0)
    losses = codec.recon_loss(recon, target).reshape(batch, k_steps + 1)
    empty = lambda *shape: torch.zeros(batch, 0, *shape)
    return Trace(
        states=stacked,
        codes=torch.stack(codes, dim=1) if codes else empty().long(),
        pre_quant=torch.stack(pre_quants, dim=1) if pre_quants else empty(model.config.d_action),
        embeddings=torch.stack(embeddings, dim=1) if embeddings else empty(model.config.d_action),
        logits=torch.stack(logits_all, dim=1) if logits_all else empty(model.codebook.n_codes),
        losses=losses,
    )


def grounding_loss(states: Tensor, codec: nn.Module) -> Tensor:
    """Decode-encode cycle consistency over states s_1..s_K.

    The cycle target is stop-gradiented, so the penalty shapes only the
    networks that produced the states, never the frozen codec.
    """
    k_plus_1 = states.shape[1]
    if k_plus_1 < 2:
        return states.new_zeros(())
    cycled = states[:, :-1]  # s_1..s_K
    b, k = cycled.shape[:2]
    flat = cycled.reshape(b * k, *cycled.shape[2:])
    with torch.no_grad():
        obs = codec.discretize(codec.decode_t(flat))
        target, _ = codec.posterior(codec.obs_to_tensor(obs))
    diff = flat - target.detach()
    per_state = diff.reshape(b, k, -1).pow(2).sum(dim=2)
    return per_state.mean(dim=0).sum()


@dataclass
class TrainStats:
    loss: float
    recon: float
    vq_codebook: float
    vq_commit: float
    grounding: float
    ortho: float
    mean_selected_length: float
    lambda_mdl: float
    tau: float
    lr_scale: float
    grad_norm: float
    code_usage: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def make_optimizer(model: NeoModel, config: NeoConfig) -> torch.optim.Optimizer:
    groups = []
    for group in model.param_groups():
        scale = (
            config.policy_lr_scale if group["role"] == "policy" else config.transition_lr_scale
        )
        groups.append(
            {
                "params": group["params"],
                "lr": config.lr * scale,
                "base_scale": scale,
                "weight_decay": config.weight_decay,
            }
        )
    return torch.optim.AdamW(groups)


def train_step(
    model: NeoModel,
    codec: nn.Module,
    optimizer: torch.optim.Optimizer,
    batch_x: Tensor,
    batch_y: Tensor,
    config: NeoConfig,
    step: int,
    total_steps: int,
    generator: Optional[torch.Generator] = None,
) -> TrainStats:
    """One optimization step over a tensorized (x, y) observation batch."""
    model.train()
    with torch.no_grad():
        s1, _ = codec.posterior(batch_x)
        s_goal, _ = codec.posterior(batch_y)
    tau = tau_schedule(step, total_steps, config)
    lam = lambda_schedule(step, total_steps, config)
    mode = config.relaxation
    if mode not in (MODE_RELAXED, MODE_ST, MODE_NOISY_ST, MODE_ARGMAX):
        raise ValueError(f"unknown training relaxation {mode!r}")
    trace = rollout(model, codec, s1, s_goal, batch_y, config.k_max, mode, tau, generator)

    k_star = select_length_batch(trace.losses.detach(), lam)
    recon = trace.losses.gather(1, (k_star - 1).unsqueeze(1)).mean()

    selected = model.codebook.embed(trace.codes)
    cb_term, commit_term = vq_losses(trace.pre_quant, selected)
    if config.ema_decay is not None:
        vq = config.commitment_cost * commit_term
    else:
        vq = cb_term + config.commitment_cost * commit_term
    ortho = model.codebook.ortho_loss() if config.ortho_weight > 0 else recon.new_zeros(())
    ground = (
        grounding_loss(trace.states, codec) if config.lambda_state > 0 else recon.new_zeros(())
    )
    loss = recon + config.lambda_vq * vq + config.lambda_state * ground + config.ortho_weight * ortho
    if not torch.isfinite(loss):
        raise TrainingDivergedError(step, "objective became non-finite")

    lr_scale = warmup_cosine(step, total_steps, config.warmup_ratio, config.min_lr_ratio)
    for group in optimizer.param_groups:
        group["lr"] = config.lr * group["base_scale"] * lr_scale
    optimizer.zero_grad()
    loss.backward()
    grad_norm = torch.nn.utils.clip_grad_norm_(
        [p for g in optimizer.param_groups for p in g["params"]], config.grad_clip
    )
    optimizer.step()
    if config.ema_decay is not None and trace.codes.numel() > 0:
        model.codebook.ema_update(trace.pre_quant, trace.codes)
    if config.code_restart_share > 0 and trace.codes.numel() > 0:
        model.codebook.refresh_dead_codes(
            trace.pre_quant, trace.codes, config.code_restart_share, generator
        )

    usage = torch.bincount(trace.codes.reshape(-1), minlength=config.codebook_size)
    return TrainStats(
        loss=float(loss.detach()),
        recon=float(recon.detach()),
        vq_codebook=float(cb_term.detach()),
        vq_commit=float(commit_term.detach()),
        grounding=float(ground.detach()),
        ortho=float(ortho.detach()),
        mean_selected_length=float((k_star - 1).float().mean()),
        lambda_mdl=lam,
        tau=tau,
        lr_scale=lr_scale,
        grad_norm=float(grad_norm),
        code_usage=usage.tolist(),
    )
