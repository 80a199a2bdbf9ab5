"""Monolithic comparison systems.

All three represent the transformation between a pair as a single latent:
a quantized code (disc), a continuous Gaussian vector (cont), or the latter
refined by gradient steps on the conditional reconstruction at test time
(cont_opt).  They share the frozen state codec and the transition-network
family with the theory model, applied exactly once (K = 1).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import torch
from torch import Tensor, nn

from .codec import TrainingDivergedError
from .dataset_io import digest_of
from .domains import ARITHMETIC
from .neo import tau_schedule, warmup_cosine
from .nets import FilmMlp, TokenPolicy, TokenTransition
from .quantizer import MODE_ARGMAX, Codebook, select_primitive, vq_losses

KIND_DISC = "disc"
KIND_CONT = "cont"


@dataclass
class BaselineConfig:
    kind: str = KIND_DISC
    codebook_size: int = 36
    d_action: int = 16
    relaxation: str = "train_relaxed"
    tau_start: float = 0.3
    tau_end: float = 0.1
    tau_ratio: float = 1.0
    commitment_cost: float = 0.25
    ema_decay: Optional[float] = None
    ortho_weight: float = 0.0
    vae_beta: float = 0.01
    lambda_vq: float = 1.0
    lr: float = 5e-3
    weight_decay: float = 1e-2
    warmup_ratio: float = 0.05
    min_lr_ratio: float = 0.1
    policy_lr_scale: float = 0.25
    transition_lr_scale: float = 1.0
    grad_clip: float = 1.0
    epochs: int = 150
    batch_size: int = 128
    grad_search_steps: int = 0
    grad_search_lr: float = 0.1
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

    def digest(self) -> str:
        return digest_of(asdict(self))


class MonolithicModel(nn.Module):
    """Pair encoder -> single latent -> one conditional transition."""

    def __init__(
        self, config: BaselineConfig, domain: str, state_shape: tuple[int, ...], seed: int
    ) -> None:
        super().__init__()
        if config.kind not in (KIND_DISC, KIND_CONT):
            raise ValueError(f"unknown baseline kind {config.kind!r}")
        self.config = config
        self.domain = domain
        self.state_shape = tuple(state_shape)
        torch.manual_seed(seed)
        latent_out = config.d_action if config.kind == KIND_DISC else 2 * config.d_action
        if domain == ARITHMETIC:
            n_tokens, token_dim = state_shape
            self.pair_encoder = TokenPolicy(
                token_dim,
                n_tokens,
                latent_out,
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
            self.pair_encoder = FilmMlp(
                dim,
                dim,
                latent_out,
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
        self.codebook = (
            Codebook(config.codebook_size, config.d_action, config.ema_decay)
            if config.kind == KIND_DISC
            else None
        )

    def param_groups(self) -> list[dict]:
        policy = list(self.pair_encoder.parameters())
        if self.codebook is not None:
            policy += [p for p in self.codebook.parameters() if p.requires_grad]
        return [
            {"params": policy, "role": "policy"},
            {"params": list(self.transition.parameters()), "role": "transition"},
        ]


def make_baseline_optimizer(model: MonolithicModel, config: BaselineConfig):
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


@dataclass
class BaselineStats:
    loss: float
    recon: float
    extra: float  # vq total (disc) or KL (cont)
    lr_scale: float
    grad_norm: float

    def to_dict(self) -> dict:
        return asdict(self)


def train_baseline_step(
    model: MonolithicModel,
    codec: nn.Module,
    optimizer: torch.optim.Optimizer,
    batch_x: Tensor,
    batch_y: Tensor,
    config: BaselineConfig,
    step: int,
    total_steps: int,
    generator: Optional[torch.Generator] = None,
) -> BaselineStats:
    """One conditional-reconstruction step (single latent, single transition)."""
    model.train()
    with torch.no_grad():
        s_x, _ = codec.posterior(batch_x)
        s_y, _ = codec.posterior(batch_y)
    u = model.pair_encoder(s_x, s_y)
    if config.kind == KIND_DISC:
        tau = tau_schedule(step, total_steps, config)
        idx, emb, _ = select_primitive(
            u, model.codebook, config.relaxation, temperature=tau, generator=generator
        )
        cb_term, commit_term = vq_losses(u, model.codebook.embed(idx))
        if config.ema_decay is not None:
            extra = config.commitment_cost * commit_term
        else:
            extra = cb_term + config.commitment_cost * commit_term
        if config.ortho_weight > 0:
            extra = extra + config.ortho_weight * model.codebook.ortho_loss()
        extra = config.lambda_vq * extra
        z = emb
    else:
        mu, logvar = u.chunk(2, dim=-1)
        noise = torch.randn(mu.shape, generator=generator)
        z = mu + noise * torch.exp(0.5 * logvar)
        kl = (-0.5 * (1 + logvar - mu**2 - logvar.exp())).sum(dim=1).mean()
        extra = config.vae_beta * kl
        idx = None
    pred = model.transition(s_x, z)
    recon = codec.recon_loss(codec.decode_t(pred), batch_y).mean()
    loss = recon + extra
    if not torch.isfinite(loss):
        raise TrainingDivergedError(step, "baseline objective became non-finite")
    lr_scale = warmup_cosine(step, total_steps, config.warmup_ratio, config.min_lr_ratio)
    for group in optimizer.param_groups:
        group["lr"] = config.lr * group["base_scale"] * lr_scale
    optimizer.zero_grad()
    loss.backward()
    grad_norm = torch.nn.utils.clip_grad_norm_(
        [p for g in optimizer.param_groups for p in g["params"]], config.grad_clip
    )
    optimizer.step()
    if config.kind == KIND_DISC and config.ema_decay is not None:
        model.codebook.ema_update(u, idx)
    return BaselineStats(
        loss=float(loss.detach()),
        recon=float(recon.detach()),
        extra=float(extra.detach()),
        lr_scale=lr_scale,
        grad_norm=float(grad_norm),
    )


@torch.no_grad()
def infer_latent(model: MonolithicModel, codec: nn.Module, x_t: Tensor, y_t: Tensor):
    """Amortized latent: nearest code index (disc) or posterior mean (cont)."""
    model.eval()
    s_x, _ = codec.posterior(x_t)
    s_y, _ = codec.posterior(y_t)
    u = model.pair_encoder(s_x, s_y)
    if model.config.kind == KIND_DISC:
        idx, _, _ = select_primitive(u, model.codebook, MODE_ARGMAX)
        return idx
    mu, _ = u.chunk(2, dim=-1)
    return mu


@torch.no_grad()
def apply_latent(model: MonolithicModel, codec: nn.Module, latent: Tensor, xq_t: Tensor) -> Tensor:
    """Conditional decode of the query under a support-derived latent."""
    model.eval()
    s_q, _ = codec.posterior(xq_t)
    z = model.codebook.embed(latent) if model.config.kind == KIND_DISC else latent
    return codec.decode_t(model.transition(s_q, z))


def optimize_latent(
    model: MonolithicModel,
    codec: nn.Module,
    x_t: Tensor,
    y_t: Tensor,
    z0: Tensor,
    steps: int,
    step_size: float,
) -> Tensor:
    """Fixed-step gradient descent on the conditional reconstruction loss.

    Equivalent to gradient ascent on the conditional log-likelihood.  Returns
    the last finite iterate if the refinement ever diverges.
    """
    if model.config.kind != KIND_CONT:
        raise ValueError("latent optimization applies to the continuous baseline only")
    model.eval()
    with torch.no_grad():
        s_x, _ = codec.posterior(x_t)
    z = z0.detach().clone()
    for _ in range(steps):
        with torch.enable_grad():
            z_var = z.detach().clone().requires_grad_(True)
            loss = codec.recon_loss(codec.decode_t(model.transition(s_x, z_var)), y_t).sum()
            (grad,) = torch.autograd.grad(loss, z_var)
        candidate = z - step_size * grad
        if not torch.isfinite(candidate).all():
            break
        z = candidate.detach()
    return z
