from __future__ import annotations

import numpy as np
import pytest

from otib.codec import CodecConfig, pretrain_codec
from otib.domains import grid as grid_mod


def all_grid_observations() -> np.ndarray:
    return np.stack(
        [grid_mod.make_observation(r, c) for r in range(10) for c in range(10)]
    )


@pytest.fixture(scope="session")
def grid_codec():
    config = CodecConfig(domain="grid", dropout=0.0, epochs=400, beta=1e-5, lr=5e-3)
    codec, provenance = pretrain_codec(all_grid_observations(), config, seed=0)
    return codec, provenance


@pytest.fixture(scope="session")
def arith_codec():
    rng = np.random.default_rng(0)
    values = rng.integers(0, 1_000_000, size=4000).astype(np.int64)
    config = CodecConfig(
        domain="arithmetic", latent_dim=8, beta=2e-5, lr=3e-3, epochs=300, batch_size=512
    )
    codec, provenance = pretrain_codec(values, config, seed=1)
    return codec, provenance
