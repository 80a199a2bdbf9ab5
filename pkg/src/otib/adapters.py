"""Uniform evaluation interface over the theory model and the baselines.

An adapter exposes ``induce(xs, ys)`` returning per-instance theories plus
optional trace records, ``predict(theories, x)`` applying them to fresh
inputs, and ``one_step(xs, code)`` for code-level probing of models with a
discrete vocabulary.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
import torch

from .baselines import KIND_CONT, KIND_DISC, MonolithicModel, apply_latent, infer_latent, optimize_latent
from .codec import decode, encode
from .inference import (
    InferenceRecord,
    Program,
    SearchConfig,
    apply_programs_batch,
    infer_programs_batch,
    select_at_b,
)
from .neo import NeoModel


def _instance_seed(root: int, index: int) -> int:
    return int(np.random.SeedSequence([root, index]).generate_state(1)[0])


class NeoAdapter:
    """Greedy or search-based induction with a trained theory model."""

    def __init__(
        self,
        model: NeoModel,
        codec,
        k_max: int,
        epsilon: float,
        lambda_mdl: float,
        search: Optional[SearchConfig] = None,
    ) -> None:
        self.model = model
        self.codec = codec
        self.k_max = k_max
        self.epsilon = epsilon
        self.lambda_mdl = lambda_mdl
        self.search = search
        self.domain = model.domain
        self.n_codes = model.codebook.n_codes

    def induce(self, xs, ys, start_index: int = 0):
        if self.search is None:
            return infer_programs_batch(
                self.model, self.codec, xs, ys, self.k_max, self.epsilon, self.lambda_mdl
            )
        programs, records = [], []
        for i in range(len(xs)):
            cfg = SearchConfig(
                budget=self.search.budget,
                temperature=self.search.temperature,
                k_max=self.search.k_max,
                epsilon=self.search.epsilon,
                seed=_instance_seed(self.search.seed, start_index + i),
            )
            result = select_at_b(self.model, self.codec, xs[i], ys[i], cfg, self.lambda_mdl)
            programs.append(result.program)
            records.append(result.record)
        return programs, records

    def predict(self, theories: list[Program], x) -> np.ndarray:
        return apply_programs_batch(self.model, self.codec, theories, x)

    @torch.no_grad()
    def one_step(self, xs, code: int) -> np.ndarray:
        states = encode(self.codec, xs)
        emb = self.model.codebook.embed(
            torch.full((states.shape[0],), int(code), dtype=torch.long)
        )
        return decode(self.codec, self.model.execute_step(states, emb))


class MonolithicAdapter:
    """Amortized (and optionally refined) single-latent induction."""

    def __init__(self, model: MonolithicModel, codec, opt_steps: int = 0, opt_lr: float = 0.1):
        self.model = model
        self.codec = codec
        self.opt_steps = opt_steps
        self.opt_lr = opt_lr
        self.domain = model.domain
        self.n_codes = model.codebook.n_codes if model.config.kind == KIND_DISC else None

    def induce(self, xs, ys, start_index: int = 0):
        x_t = self.codec.obs_to_tensor(xs)
        y_t = self.codec.obs_to_tensor(ys)
        latent = infer_latent(self.model, self.codec, x_t, y_t)
        if self.opt_steps > 0:
            if self.model.config.kind != KIND_CONT:
                raise ValueError("latent refinement applies to the continuous baseline only")
            latent = optimize_latent(
                self.model, self.codec, x_t, y_t, latent, self.opt_steps, self.opt_lr
            )
        records = [None] * len(xs)
        return latent, records

    def predict(self, theories, x) -> np.ndarray:
        xq_t = self.codec.obs_to_tensor(x)
        recon = apply_latent(self.model, self.codec, theories, xq_t)
        return self.codec.discretize(recon)

    @torch.no_grad()
    def one_step(self, xs, code: int) -> np.ndarray:
        if self.n_codes is None:
            raise ValueError("continuous baseline has no discrete codes")
        idx = torch.full((len(np.atleast_1d(xs)),), int(code), dtype=torch.long)
        recon = apply_latent(self.model, self.codec, idx, self.codec.obs_to_tensor(xs))
        return self.codec.discretize(recon)
