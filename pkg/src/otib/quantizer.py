"""Discrete code selection over a learned codebook.

Selection scores a pre-quantization vector against every codebook entry by
negative squared distance.  Three modes: hard nearest-neighbor with a
straight-through embedding, a temperature-relaxed stochastic mixture for
training, and temperature-scaled categorical sampling for test-time search.
"""

from __future__ import annotations

from typing import Optional

import torch
from torch import Tensor, nn

MODE_ARGMAX = "argmax"
MODE_RELAXED = "train_relaxed"
MODE_ST = "train_st"
MODE_NOISY_ST = "train_noisy_st"
MODE_SAMPLE = "sample"

_EPS = 1e-9


class Codebook(nn.Module):
    """M' learned primitive embeddings, optionally maintained by EMA."""

    def __init__(self, n_codes: int, dim: int, ema_decay: Optional[float] = None) -> None:
        super().__init__()
        self.n_codes = n_codes
        self.dim = dim
        self.ema_decay = ema_decay
        entries = torch.randn(n_codes, dim) * dim**-0.5
        self.entries = nn.Parameter(entries, requires_grad=ema_decay is None)
        self.register_buffer("usage_ema", torch.full((n_codes,), 1.0 / n_codes))
        if ema_decay is not None:
            self.register_buffer("ema_cluster_size", torch.ones(n_codes))
            self.register_buffer("ema_sum", entries.clone())

    def distances_sq(self, u: Tensor) -> Tensor:
        flat = u.reshape(-1, self.dim)
        d2 = (
            flat.pow(2).sum(1, keepdim=True)
            - 2.0 * flat @ self.entries.t()
            + self.entries.pow(2).sum(1)
        )
        return d2.clamp_min(0.0).reshape(*u.shape[:-1], self.n_codes)

    def embed(self, indices: Tensor) -> Tensor:
        return self.entries[indices]

    @torch.no_grad()
    def ema_update(self, u: Tensor, indices: Tensor) -> None:
        """Standard smoothed EMA codebook update from the assigned vectors."""
        assert self.ema_decay is not None
        flat = u.reshape(-1, self.dim).detach()
        idx = indices.reshape(-1)
        onehot = torch.zeros(flat.shape[0], self.n_codes, dtype=flat.dtype)
        onehot.scatter_(1, idx.unsqueeze(1), 1.0)
        counts = onehot.sum(0)
        sums = onehot.t() @ flat
        d = self.ema_decay
        self.ema_cluster_size.mul_(d).add_(counts, alpha=1 - d)
        self.ema_sum.mul_(d).add_(sums, alpha=1 - d)
        n = self.ema_cluster_size.sum()
        smoothed = (self.ema_cluster_size + _EPS) / (n + self.n_codes * _EPS) * n
        self.entries.data.copy_(self.ema_sum / smoothed.unsqueeze(1))

    @torch.no_grad()
    def refresh_dead_codes(
        self,
        u: Tensor,
        indices: Tensor,
        min_share: float,
        generator: Optional[torch.Generator] = None,
        decay: float = 0.98,
    ) -> int:
        """Restart entries whose selection share decays below ``min_share``.

        A starved entry is re-seeded at a random pre-quantization vector from
        the current batch, the usual guard against codebook collapse.
        Returns the number of restarted entries.
        """
        flat = u.reshape(-1, self.dim).detach()
        share = torch.bincount(indices.reshape(-1), minlength=self.n_codes).float()
        share = share / max(float(share.sum()), 1.0)
        self.usage_ema.mul_(decay).add_(share, alpha=1 - decay)
        dead = torch.nonzero(self.usage_ema < min_share).reshape(-1)
        for code in dead.tolist():
            pick = int(torch.randint(flat.shape[0], (1,), generator=generator))
            jitter = 0.01 * torch.randn(self.dim, generator=generator)
            self.entries.data[code] = flat[pick] + jitter
            self.usage_ema[code] = 1.0 / self.n_codes
            if self.ema_decay is not None:
                self.ema_cluster_size[code] = 1.0
                self.ema_sum[code] = self.entries.data[code].clone()
        return int(dead.numel())

    def ortho_loss(self) -> Tensor:
        """Squared off-diagonal Gram mass of the normalized entries."""
        e = self.entries / (self.entries.norm(dim=1, keepdim=True) + _EPS)
        gram = e @ e.t()
        eye = torch.eye(self.n_codes, dtype=gram.dtype)
        return ((gram - eye) ** 2).sum() / self.n_codes**2


def select_primitive(
    u: Tensor,
    codebook: Codebook,
    mode: str,
    temperature: float = 1.0,
    generator: Optional[torch.Generator] = None,
) -> tuple[Tensor, Tensor, Tensor]:
    """Pick a code for each pre-quantization vector.

    Returns (indices, embedding, logits) where logits are -dist^2 / T.  In
    ``argmax`` mode the embedding is the nearest entry with a straight-through
    gradient; in ``train_relaxed`` it is the softmax-weighted mixture from a
    relaxed categorical draw at the given temperature; ``train_st`` hardens
    that draw in the forward pass only; ``sample`` draws an index from the
    temperature-scaled softmax and returns its entry.
    """
    d2 = codebook.distances_sq(u)
    logits = -d2 / max(temperature, _EPS)
    if mode == MODE_ARGMAX:
        idx = d2.argmin(dim=-1)
        hard = codebook.embed(idx)
        emb = hard.detach() + (u - u.detach())  # forward value is the entry, bitwise
        return idx, emb, logits
    if mode == MODE_NOISY_ST:
        # exploration in the pre-quantization space: selection follows a
        # Gaussian-perturbed vector, so alternatives near cell boundaries get
        # tried while the temperature anneals toward deterministic selection
        noisy = u + temperature * torch.randn(u.shape, generator=generator)
        idx = codebook.distances_sq(noisy).argmin(dim=-1)
        emb = codebook.embed(idx).detach() + (u - u.detach())
        return idx, emb, logits
    if mode in (MODE_RELAXED, MODE_ST):
        # Gumbel noise on the temperature-scaled logits: annealing the
        # temperature both hardens the mixture and decays exploration, so the
        # trained selection converges to the hard nearest-code path.
        uni = torch.rand(d2.shape, generator=generator).clamp_min(1e-20)
        gumbel = -torch.log(-torch.log(uni))
        weights = torch.softmax(logits + gumbel, dim=-1)
        idx = weights.argmax(dim=-1)
        soft = weights @ codebook.entries
        if mode == MODE_ST:
            return idx, soft + (codebook.embed(idx) - soft).detach(), logits
        return idx, soft, logits
    if mode == MODE_SAMPLE:
        probs = torch.softmax(logits, dim=-1)
        flat = probs.reshape(-1, codebook.n_codes)
        idx = torch.multinomial(flat, 1, generator=generator).reshape(probs.shape[:-1])
        return idx, codebook.embed(idx), logits
    raise ValueError(f"unknown selection mode {mode!r}")


def vq_losses(u: Tensor, selected: Tensor) -> tuple[Tensor, Tensor]:
    """(codebook term, commitment term) with the usual stop-gradients.

    The codebook term moves entries toward frozen programmer outputs; the
    commitment term moves programmer outputs toward frozen entries.  Both are
    zero when the output coincides with its entry.
    """
    codebook_term = ((u.detach() - selected) ** 2).mean()
    commitment_term = ((u - selected.detach()) ** 2).mean()
    return codebook_term, commitment_term
