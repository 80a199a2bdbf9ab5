"""Policy and transition network families.

Grid/image states are flat vectors and use feature-wise-modulated MLP blocks
(the conditioning signal produces a per-feature scale and shift on each
hidden layer).  Arithmetic states are token sequences and use a transformer
encoder policy plus a cross-attention transition.
"""

from __future__ import annotations

import torch
from torch import Tensor, nn


class FilmBlock(nn.Module):
    """Residual feed-forward block whose hidden layer is FiLM-conditioned."""

    def __init__(self, d_model: int, d_ff: int, cond_dim: int) -> None:
        super().__init__()
        self.up = nn.Linear(d_model, d_ff)
        self.down = nn.Linear(d_ff, d_model)
        self.film = nn.Linear(cond_dim, 2 * d_ff)
        self.norm = nn.LayerNorm(d_model)
        self.act = nn.SiLU()

    def forward(self, h: Tensor, cond: Tensor) -> Tensor:
        scale, shift = self.film(cond).chunk(2, dim=-1)
        inner = self.act((1.0 + scale) * self.up(self.norm(h)) + shift)
        return h + self.down(inner)


class FilmMlp(nn.Module):
    """Maps (state, conditioning) -> vector through FiLM-modulated blocks."""

    def __init__(
        self,
        in_dim: int,
        cond_dim: int,
        out_dim: int,
        d_model: int = 32,
        d_ff: int = 128,
        n_blocks: int = 2,
        residual: bool = False,
    ) -> None:
        super().__init__()
        self.residual = residual and in_dim == out_dim
        self.proj_in = nn.Linear(in_dim, d_model)
        self.blocks = nn.ModuleList(FilmBlock(d_model, d_ff, cond_dim) for _ in range(n_blocks))
        self.proj_out = nn.Linear(d_model, out_dim)

    def forward(self, x: Tensor, cond: Tensor) -> Tensor:
        h = self.proj_in(x)
        for block in self.blocks:
            h = block(h, cond)
        out = self.proj_out(h)
        if self.residual:
            out = x + out
        return out


class _SelfAttnBlock(nn.Module):
    def __init__(self, d_model: int, d_ff: int, heads: int) -> None:
        super().__init__()
        self.attn = nn.MultiheadAttention(d_model, heads, batch_first=True)
        self.ff = nn.Sequential(nn.Linear(d_model, d_ff), nn.SiLU(), nn.Linear(d_ff, d_model))
        self.n1 = nn.LayerNorm(d_model)
        self.n2 = nn.LayerNorm(d_model)

    def forward(self, h: Tensor) -> Tensor:
        a = self.n1(h)
        h = h + self.attn(a, a, a, need_weights=False)[0]
        return h + self.ff(self.n2(h))


class TokenPolicy(nn.Module):
    """Transformer over [state tokens | goal tokens | readout token]."""

    def __init__(
        self,
        token_dim: int,
        n_tokens: int,
        out_dim: int,
        d_model: int = 64,
        d_ff: int = 256,
        heads: int = 4,
        layers: int = 6,
    ) -> None:
        super().__init__()
        self.n_tokens = n_tokens
        self.proj_in = nn.Linear(token_dim, d_model)
        self.pos = nn.Parameter(torch.zeros(2 * n_tokens + 1, d_model))
        self.segment = nn.Parameter(torch.zeros(3, d_model))
        self.readout_token = nn.Parameter(torch.zeros(d_model))
        self.blocks = nn.ModuleList(_SelfAttnBlock(d_model, d_ff, heads) for _ in range(layers))
        self.norm = nn.LayerNorm(d_model)
        self.head = nn.Linear(d_model, out_dim)

    def forward(self, state: Tensor, goal: Tensor) -> Tensor:
        b, n, _ = state.shape
        s = self.proj_in(state) + self.segment[0]
        g = self.proj_in(goal) + self.segment[1]
        r = (self.readout_token + self.segment[2]).expand(b, 1, -1)
        h = torch.cat([s, g, r], dim=1) + self.pos[: 2 * n + 1]
        for block in self.blocks:
            h = block(h)
        return self.head(self.norm(h[:, -1]))


class TokenTransition(nn.Module):
    """Cross-attention transition: state tokens attend to the action token."""

    def __init__(
        self,
        token_dim: int,
        n_tokens: int,
        action_dim: int,
        d_model: int = 32,
        d_ff: int = 128,
        heads: int = 2,
        layers: int = 4,
    ) -> None:
        super().__init__()
        self.proj_in = nn.Linear(token_dim, d_model)
        self.proj_action = nn.Linear(action_dim, d_model)
        self.pos = nn.Parameter(torch.zeros(n_tokens, d_model))
        self.cross = nn.ModuleList(
            nn.MultiheadAttention(d_model, heads, batch_first=True) for _ in range(layers)
        )
        self.ffs = nn.ModuleList(
            nn.Sequential(nn.Linear(d_model, d_ff), nn.SiLU(), nn.Linear(d_ff, d_model))
            for _ in range(layers)
        )
        self.norms1 = nn.ModuleList(nn.LayerNorm(d_model) for _ in range(layers))
        self.norms2 = nn.ModuleList(nn.LayerNorm(d_model) for _ in range(layers))
        self.proj_out = nn.Linear(d_model, token_dim)

    def forward(self, state: Tensor, action: Tensor) -> Tensor:
        h = self.proj_in(state) + self.pos[: state.shape[1]]
        kv = self.proj_action(action).unsqueeze(1)
        for attn, ff, n1, n2 in zip(self.cross, self.ffs, self.norms1, self.norms2):
            q = n1(h)
            h = h + attn(q, kv, kv, need_weights=False)[0]
            h = h + ff(n2(h))
        return state + self.proj_out(h)
