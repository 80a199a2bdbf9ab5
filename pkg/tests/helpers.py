"""Shared test doubles: an exact analytic grid codec and an oracle-backed
model whose transition is the ground-truth move applied in latent space."""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from otib.domains import GRID
from otib.domains import grid as grid_mod
from otib.neo import NeoConfig
from otib.quantizer import Codebook


class AnalyticGridCodec(nn.Module):
    """Exact grid codec: the latent is the flattened occupancy itself."""

    domain = GRID

    def obs_to_tensor(self, obs):
        arr = np.asarray(obs)
        if arr.ndim == 2:
            arr = arr[None]
        occ = torch.from_numpy(arr.astype(np.float32))
        return torch.stack([1.0 - occ, occ], dim=1)

    def posterior(self, obs_t):
        mu = obs_t[:, 1].reshape(obs_t.shape[0], 100)
        return mu, torch.zeros_like(mu)

    def decode_t(self, state):
        return (state.reshape(-1, 10, 10) - 0.5) * 40.0

    def recon_loss(self, recon, obs_t):
        target = obs_t[:, 1]
        return torch.nn.functional.binary_cross_entropy_with_logits(
            recon, target, reduction="none"
        ).sum(dim=(1, 2))

    def discretize(self, recon):
        flat = recon.reshape(recon.shape[0], -1)
        idx = flat.argmax(dim=1).cpu().numpy()
        out = np.zeros((recon.shape[0], 10, 10), dtype=np.uint8)
        out[np.arange(len(idx)), idx // 10, idx % 10] = 1
        return out


class OracleGridModel:
    """Transition = latent-space oracle move, programmer = correct next move."""

    domain = GRID
    state_shape = (100,)

    def __init__(self):
        self.config = NeoConfig(codebook_size=4, d_action=8)
        self.codebook = Codebook(4, 8)
        with torch.no_grad():
            self.codebook.entries.copy_(torch.eye(4, 8) * 3.0)

    def _positions(self, s):
        idx = s.argmax(dim=1)
        return idx // 10, idx % 10

    def propose(self, s, s_goal):
        r, c = self._positions(s)
        gr, gc = self._positions(s_goal)
        codes = torch.zeros(s.shape[0], dtype=torch.long)
        codes[(gr - r) > 0] = 2  # down
        codes[(gc - c) < 0] = 3  # left
        codes[(gc - c) > 0] = 1  # right
        codes[(gr - r) < 0] = 0  # up
        return self.codebook.entries[codes].detach()

    def execute_step(self, s, emb):
        code = self.codebook.distances_sq(emb).argmin(dim=1)
        deltas = torch.tensor(grid_mod.DELTAS)
        r, c = self._positions(s)
        r = (r + deltas[code, 0]).clamp(0, 9)
        c = (c + deltas[code, 1]).clamp(0, 9)
        out = torch.zeros_like(s)
        out[torch.arange(s.shape[0]), r * 10 + c] = 1.0
        return out

    def eval(self):
        return self


def all_grid_observations() -> np.ndarray:
    return np.stack(
        [grid_mod.make_observation(r, c) for r in range(10) for c in range(10)]
    )
