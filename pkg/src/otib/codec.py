"""Per-domain observation autoencoders defining the latent state space.

The codecs are pretrained VAEs, frozen afterwards and shared by every model
(theory model and baselines alike).  Encoding at inference time returns the
posterior mean, so execution traces are deterministic.  Latent shapes:
grid (32,), image (256,), arithmetic (6, 8) digit-token embeddings.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .dataset_io import digest_of
from .domains import ARITHMETIC, GRID, IMAGE
from .domains import arithmetic as arith_domain
from .domains import grid as grid_domain


class TrainingDivergedError(RuntimeError):
    """Non-finite loss during training; carries the failing step index."""

    def __init__(self, step: int, message: str = "") -> None:
        self.step = step
        super().__init__(f"non-finite loss at step {step}. {message}".strip())


class CheckpointMismatchError(RuntimeError):
    """Checkpoint does not match the requesting configuration."""


@dataclass
class CodecConfig:
    domain: str
    latent_dim: int = 32
    d_model: int = 32
    d_ff: int = 128
    dropout: float = 0.1
    beta: float = 1e-5
    lr: float = 5e-3
    weight_decay: float = 1e-2
    min_lr_ratio: float = 0.005
    epochs: int = 50
    batch_size: int = 512
    grad_clip: float = 1.0
    image_size: int = 32

    def digest(self) -> str:
        return digest_of(asdict(self))


def param_digest(module: nn.Module) -> str:
    """Stable digest of all parameters and buffers, for freeze checks."""
    h = hashlib.sha256()
    state = module.state_dict()
    for key in sorted(state):
        h.update(key.encode())
        h.update(state[key].detach().cpu().numpy().tobytes())
    return h.hexdigest()


class _LatentStandardizer(nn.Module):
    """Fixed affine whitening of the latent space, fit after pretraining.

    Downstream networks see zero-mean, unit-variance states regardless of the
    scale the encoder happened to settle at; the decoder receives states
    mapped back to its native coordinates.  Identity until calibrated.
    """

    def _init_standardizer(self, shape: tuple[int, ...]) -> None:
        self.register_buffer("latent_loc", torch.zeros(shape))
        self.register_buffer("latent_scale", torch.ones(shape))

    def standardize(self, mu: Tensor, logvar: Tensor) -> tuple[Tensor, Tensor]:
        mu = (mu - self.latent_loc) / self.latent_scale
        logvar = logvar - 2.0 * torch.log(self.latent_scale)
        return mu, logvar

    def unstandardize(self, state: Tensor) -> Tensor:
        return state * self.latent_scale + self.latent_loc

    @torch.no_grad()
    def calibrate_latents(self, obs_t: Tensor) -> None:
        mu, _ = self.raw_posterior(obs_t)
        dims = tuple(range(mu.dim() - 1)) if self.domain != ARITHMETIC else (0, 1)
        loc = mu.mean(dim=dims)
        scale = mu.std(dim=dims).clamp_min(1e-3)
        self.latent_loc.copy_(loc)
        self.latent_scale.copy_(scale)


class _SpatialSoftmax(nn.Module):
    """Per-channel soft-argmax over a feature map, emitting (x, y) pairs.

    Keypoint coordinates translate linearly with image content, which keeps
    the latent geometry of a moving object close to affine in its position.
    """

    def __init__(self, side: int) -> None:
        super().__init__()
        grid = (torch.arange(side, dtype=torch.float32) / (side - 1)) * 2 - 1
        self.register_buffer("coord", grid)

    def forward(self, features: Tensor) -> Tensor:
        b, c, h, w = features.shape
        attn = torch.softmax(features.reshape(b, c, h * w), dim=-1).reshape(b, c, h, w)
        ys = (attn.sum(dim=3) * self.coord[:h]).sum(dim=2)
        xs = (attn.sum(dim=2) * self.coord[:w]).sum(dim=2)
        return torch.cat([ys, xs], dim=1)  # (B, 2C)


class GridCodec(_LatentStandardizer):
    """Convolutional VAE over 10x10 single-object occupancy grids.

    The encoder ends in a spatial-softmax keypoint head, so unit moves of the
    object correspond to near-uniform shifts of the latent state.
    """

    domain = GRID

    def __init__(self, config: CodecConfig) -> None:
        super().__init__()
        self.config = config
        self._init_standardizer((config.latent_dim,))
        d, ff, z = config.d_model, config.d_ff, config.latent_dim
        side = grid_domain.SIZE
        keypoints = max(z // 2, 1)
        self.enc = nn.Sequential(
            nn.Conv2d(2, d, 3, padding=1),
            nn.SiLU(),
            nn.Conv2d(d, d, 3, padding=1),
            nn.SiLU(),
            nn.Dropout2d(config.dropout),
            nn.Conv2d(d, keypoints, 1),
            _SpatialSoftmax(side),
        )
        self.enc_head = nn.Linear(2 * keypoints, 2 * z)
        self.dec = nn.Sequential(
            nn.Linear(z, ff),
            nn.SiLU(),
            nn.Linear(ff, d * (side // 2) ** 2),
            nn.SiLU(),
            nn.Unflatten(1, (d, side // 2, side // 2)),
            nn.ConvTranspose2d(d, d, 2, stride=2),
            nn.SiLU(),
            nn.Conv2d(d, 1, 3, padding=1),
        )

    def obs_to_tensor(self, obs: np.ndarray) -> Tensor:
        arr = np.asarray(obs)
        if arr.ndim == 2:
            arr = arr[None]
        occ = torch.from_numpy(arr.astype(np.float32))
        return torch.stack([1.0 - occ, occ], dim=1)  # per-cell one-hot channels

    def raw_posterior(self, obs_t: Tensor) -> tuple[Tensor, Tensor]:
        mu, logvar = self.enc_head(self.enc(obs_t)).chunk(2, dim=-1)
        return mu, logvar

    def posterior(self, obs_t: Tensor) -> tuple[Tensor, Tensor]:
        return self.standardize(*self.raw_posterior(obs_t))

    def decode_t(self, state: Tensor) -> Tensor:
        return self.dec(self.unstandardize(state)).squeeze(1)  # (B, 10, 10) logits

    def recon_loss(self, recon: Tensor, obs_t: Tensor) -> Tensor:
        target = obs_t[:, 1]  # occupied channel
        return F.binary_cross_entropy_with_logits(recon, target, reduction="none").sum(
            dim=(1, 2)
        )

    def discretize(self, recon: Tensor) -> np.ndarray:
        flat = recon.reshape(recon.shape[0], -1)
        idx = flat.argmax(dim=1).cpu().numpy()
        out = np.zeros((recon.shape[0], grid_domain.SIZE, grid_domain.SIZE), dtype=np.uint8)
        out[np.arange(len(idx)), idx // grid_domain.SIZE, idx % grid_domain.SIZE] = 1
        return out


class ArithmeticCodec(_LatentStandardizer):
    """Digit-token embedding codec: six tokens of width eight per integer."""

    domain = ARITHMETIC

    def __init__(self, config: CodecConfig) -> None:
        super().__init__()
        self.config = config
        width = config.latent_dim
        self._init_standardizer((width,))
        self.embed = nn.Embedding(10, width)
        self.logvar = nn.Parameter(torch.full((10, width), -6.0))
        self.readout = nn.Linear(width, 10)

    def obs_to_tensor(self, obs: np.ndarray) -> Tensor:
        values = np.atleast_1d(np.asarray(obs, dtype=np.int64))
        digits = np.stack([arith_domain.to_digits(int(v)) for v in values])
        return torch.from_numpy(digits)

    def raw_posterior(self, obs_t: Tensor) -> tuple[Tensor, Tensor]:
        return self.embed(obs_t), self.logvar[obs_t]

    def posterior(self, obs_t: Tensor) -> tuple[Tensor, Tensor]:
        return self.standardize(*self.raw_posterior(obs_t))

    def decode_t(self, state: Tensor) -> Tensor:
        return self.readout(self.unstandardize(state))  # (B, 6, 10) digit logits

    def recon_loss(self, recon: Tensor, obs_t: Tensor) -> Tensor:
        return F.cross_entropy(
            recon.reshape(-1, 10), obs_t.reshape(-1), reduction="none"
        ).reshape(obs_t.shape).sum(dim=1)

    def discretize(self, recon: Tensor) -> np.ndarray:
        digits = recon.argmax(dim=-1).cpu().numpy()
        return np.array([arith_domain.from_digits(d) for d in digits], dtype=np.int64)


class ImageCodec(_LatentStandardizer):
    """Convolutional VAE over (H, W, 3) images with a flat 256-d latent."""

    domain = IMAGE

    def __init__(self, config: CodecConfig) -> None:
        super().__init__()
        self.config = config
        self._init_standardizer((config.latent_dim,))
        d, z, side = config.d_model, config.latent_dim, config.image_size
        if side % 8 != 0:
            raise ValueError("image size must be a multiple of 8")
        self._grid = side // 8
        c2 = 2 * d
        self.enc = nn.Sequential(
            nn.Conv2d(3, d, 3, stride=2, padding=1),
            nn.SiLU(),
            nn.Conv2d(d, c2, 3, stride=2, padding=1),
            nn.SiLU(),
            nn.Conv2d(c2, c2, 3, stride=2, padding=1),
            nn.SiLU(),
            nn.Flatten(),
            nn.Dropout(config.dropout),
        )
        self.enc_head = nn.Linear(c2 * self._grid**2, 2 * z)
        self.dec_in = nn.Linear(z, c2 * self._grid**2)
        self.dec = nn.Sequential(
            nn.SiLU(),
            nn.ConvTranspose2d(c2, c2, 4, stride=2, padding=1),
            nn.SiLU(),
            nn.ConvTranspose2d(c2, d, 4, stride=2, padding=1),
            nn.SiLU(),
            nn.ConvTranspose2d(d, d, 4, stride=2, padding=1),
            nn.SiLU(),
            nn.Conv2d(d, 3, 3, padding=1),
        )

    def obs_to_tensor(self, obs: np.ndarray) -> Tensor:
        arr = np.asarray(obs, dtype=np.float32)
        if arr.ndim == 3:
            arr = arr[None]
        return torch.from_numpy(arr).permute(0, 3, 1, 2).contiguous()

    def raw_posterior(self, obs_t: Tensor) -> tuple[Tensor, Tensor]:
        mu, logvar = self.enc_head(self.enc(obs_t)).chunk(2, dim=-1)
        return mu, logvar

    def posterior(self, obs_t: Tensor) -> tuple[Tensor, Tensor]:
        return self.standardize(*self.raw_posterior(obs_t))

    def decode_t(self, state: Tensor) -> Tensor:
        h = self.dec_in(self.unstandardize(state))
        h = h.reshape(-1, 2 * self.config.d_model, self._grid, self._grid)
        return torch.sigmoid(self.dec(h))

    def recon_loss(self, recon: Tensor, obs_t: Tensor) -> Tensor:
        return ((recon - obs_t) ** 2).sum(dim=(1, 2, 3))

    def discretize(self, recon: Tensor) -> np.ndarray:
        arr = recon.detach().cpu().numpy().transpose(0, 2, 3, 1)
        return np.ascontiguousarray(np.clip(arr, 0.0, 1.0), dtype=np.float32)


_CODEC_CLASSES = {GRID: GridCodec, ARITHMETIC: ArithmeticCodec, IMAGE: ImageCodec}


def make_codec(config: CodecConfig) -> nn.Module:
    try:
        cls = _CODEC_CLASSES[config.domain]
    except KeyError:
        raise ValueError(f"unknown domain {config.domain!r}") from None
    return cls(config)


@torch.no_grad()
def encode(codec: nn.Module, obs: np.ndarray) -> Tensor:
    """Deterministic posterior-mean encoding of a batch of observations."""
    codec.eval()
    mu, _ = codec.posterior(codec.obs_to_tensor(obs))
    return mu


@torch.no_grad()
def decode(codec: nn.Module, state: Tensor) -> np.ndarray:
    """Decode latent states to discretized/clipped observations."""
    codec.eval()
    return codec.discretize(codec.decode_t(state))


def roundtrip_error(codec: nn.Module, obs: np.ndarray) -> float:
    """Mean domain distance between obs and decode(encode(obs)); 0 is perfect."""
    from .metrics import domain_distance

    recon = decode(codec, encode(codec, obs))
    if codec.domain == ARITHMETIC:
        values = np.atleast_1d(np.asarray(obs, dtype=np.int64))
        errs = [1.0 - domain_distance(ARITHMETIC, int(r), int(v)) for r, v in zip(recon, values)]
    else:
        arr = np.asarray(obs)
        if arr.ndim == (2 if codec.domain == GRID else 3):
            arr = arr[None]
        if codec.domain == GRID:
            errs = [1.0 - domain_distance(GRID, r, t) for r, t in zip(recon, arr)]
        else:
            errs = [domain_distance(IMAGE, r, t) for r, t in zip(recon, arr)]
    return float(np.mean(errs))


def freeze(codec: nn.Module) -> nn.Module:
    codec.eval()
    for p in codec.parameters():
        p.requires_grad_(False)
        p.grad = None
    return codec


def _cosine_lr(step: int, total: int, base: float, min_ratio: float) -> float:
    if total <= 1:
        return base
    frac = min(step / (total - 1), 1.0)
    return base * (min_ratio + (1 - min_ratio) * 0.5 * (1 + np.cos(np.pi * frac)))


def pretrain_codec(
    observations: np.ndarray, config: CodecConfig, seed: int
) -> tuple[nn.Module, dict]:
    """Train the VAE; returns the frozen codec plus a provenance record."""
    torch.manual_seed(seed)
    codec = make_codec(config)
    obs_t = codec.obs_to_tensor(observations)
    n = obs_t.shape[0]
    if n < 2:
        raise ValueError("need at least two observations to pretrain")
    opt = torch.optim.AdamW(codec.parameters(), lr=config.lr, weight_decay=config.weight_decay)
    gen = torch.Generator().manual_seed(seed + 1)
    steps_per_epoch = max(1, n // config.batch_size)
    total_steps = config.epochs * steps_per_epoch
    codec.train()
    step = 0
    final_loss = float("nan")
    for _epoch in range(config.epochs):
        perm = torch.randperm(n, generator=gen)
        for b in range(steps_per_epoch):
            idx = perm[b * config.batch_size : (b + 1) * config.batch_size]
            batch = obs_t[idx]
            mu, logvar = codec.raw_posterior(batch)
            noise = torch.randn(mu.shape, generator=gen)
            z = mu + noise * torch.exp(0.5 * logvar)
            recon = codec.decode_t(z)  # standardizer is identity until calibrated
            rec = codec.recon_loss(recon, batch).mean()
            kl_dims = tuple(range(1, mu.dim()))
            kl = (-0.5 * (1 + logvar - mu**2 - logvar.exp())).sum(dim=kl_dims).mean()
            loss = rec + config.beta * kl
            if not torch.isfinite(loss):
                raise TrainingDivergedError(step, "codec pretraining diverged")
            for group in opt.param_groups:
                group["lr"] = _cosine_lr(step, total_steps, config.lr, config.min_lr_ratio)
            opt.zero_grad()
            loss.backward()
            nn.utils.clip_grad_norm_(codec.parameters(), config.grad_clip)
            opt.step()
            final_loss = float(loss.detach())
            step += 1
    codec.calibrate_latents(obs_t)
    freeze(codec)
    provenance = {
        "config_digest": config.digest(),
        "seed": seed,
        "steps": step,
        "final_loss": final_loss,
        "n_observations": int(n),
    }
    return codec, provenance


def save_codec(path, codec: nn.Module, provenance: dict) -> None:
    payload = {
        "kind": "codec",
        "format_version": 1,
        "config": asdict(codec.config),
        "config_digest": codec.config.digest(),
        "state_dict": codec.state_dict(),
        "provenance": provenance,
    }
    torch.save(payload, path)


def load_codec(path, expected_config: CodecConfig | None = None) -> tuple[nn.Module, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("kind") != "codec":
        raise CheckpointMismatchError(f"{path} is not a codec checkpoint")
    config = CodecConfig(**payload["config"])
    if expected_config is not None and expected_config.digest() != payload["config_digest"]:
        raise CheckpointMismatchError(
            f"{path}: codec config digest {payload['config_digest'][:12]} does not match "
            f"the requested configuration {expected_config.digest()[:12]}"
        )
    codec = make_codec(config)
    codec.load_state_dict(payload["state_dict"])
    freeze(codec)
    return codec, payload["provenance"]
