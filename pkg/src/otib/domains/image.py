"""Image editing domain: eight pixel-space edits on (H, W, 3) arrays in [0, 1].

Canonical classes are index-sorted multisets, executed in canonical order
(several edits do not commute, so the canonical order defines the class
semantics).  A multiset is rejected as a class representative when it
contains a canceling brightness or hue pair, repeats an involutive or
idempotent edit (flips, mask), or stacks more than two quarter rotations;
this reproduces the valid-class counts 8 / 31 / 79 / 152 at lengths 1-4.

Sources default to a seeded synthetic generator (smooth two-color gradients
plus a few solid shapes); a callable ``(rng, size) -> array`` can be supplied
instead to draw from an image folder or any other corpus.
"""

from __future__ import annotations

import numpy as np
from matplotlib.colors import hsv_to_rgb, rgb_to_hsv

PRIMITIVE_NAMES = (
    "brightness_plus",
    "brightness_minus",
    "hue_plus",
    "hue_minus",
    "horizontal_flip",
    "vertical_flip",
    "rotation",
    "masking",
)

BRIGHTNESS_UP = 1.5
BRIGHTNESS_DOWN = 0.5
HUE_SHIFT = 0.3
MASK_VALUE = 128.0 / 255.0

DEFAULT_SIZE = 32
DEFAULT_RETENTION_THRESHOLD = 0.02
_MAX_SOURCE_TRIES = 64


def _check(obs: np.ndarray) -> np.ndarray:
    arr = np.asarray(obs, dtype=np.float32)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"image observation must be (H, W, 3), got {arr.shape}")
    return arr


def _shift_hue(img: np.ndarray, delta: float) -> np.ndarray:
    hsv = rgb_to_hsv(img)
    hsv[..., 0] = np.mod(hsv[..., 0] + delta, 1.0)
    return hsv_to_rgb(hsv).astype(np.float32)


def step(obs: np.ndarray, index: int) -> np.ndarray:
    img = _check(obs)
    if index == 0:
        out = np.clip(img * BRIGHTNESS_UP, 0.0, 1.0)
    elif index == 1:
        out = np.clip(img * BRIGHTNESS_DOWN, 0.0, 1.0)
    elif index == 2:
        out = _shift_hue(img, HUE_SHIFT)
    elif index == 3:
        out = _shift_hue(img, -HUE_SHIFT)
    elif index == 4:
        out = img[:, ::-1, :]
    elif index == 5:
        out = img[::-1, :, :]
    elif index == 6:
        out = np.rot90(img, k=-1, axes=(0, 1))
    elif index == 7:
        out = img.copy()
        h, w = img.shape[:2]
        out[: h // 2, : w // 2, :] = MASK_VALUE
    else:  # pragma: no cover
        raise ValueError(f"unknown image primitive {index}")
    return np.ascontiguousarray(np.clip(out, 0.0, 1.0), dtype=np.float32)


def multiset_valid(indices: list[int]) -> bool:
    counts = [indices.count(i) for i in range(8)]
    if counts[0] and counts[1]:  # brightness up with brightness down
        return False
    if counts[2] and counts[3]:  # hue plus with hue minus
        return False
    if counts[4] > 1 or counts[5] > 1 or counts[7] > 1:  # involutive / idempotent
        return False
    if counts[6] > 2:  # three quarter-turns revert toward identity
        return False
    return True


def synthetic_source(rng: np.random.Generator, size: int = DEFAULT_SIZE) -> np.ndarray:
    """Procedural stand-in for a natural-image corpus.

    Two saturated anchor colors blended along a random direction, plus one to
    three solid rectangles or disks.  Piecewise smooth, so a small VAE can
    reconstruct it well, while saturated hues keep every edit detectable.
    """
    h = w = int(size)

    def _color() -> np.ndarray:
        hsv = np.array(
            [rng.uniform(0.0, 1.0), rng.uniform(0.45, 1.0), rng.uniform(0.25, 0.9)]
        )
        return hsv_to_rgb(hsv.reshape(1, 1, 3))[0, 0]

    c0, c1 = _color(), _color()
    theta = rng.uniform(0.0, 2.0 * np.pi)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float32)
    t = (np.cos(theta) * xx / max(w - 1, 1)) + (np.sin(theta) * yy / max(h - 1, 1))
    t = (t - t.min()) / max(t.max() - t.min(), 1e-8)
    img = (1.0 - t[..., None]) * c0 + t[..., None] * c1

    for _ in range(int(rng.integers(1, 4))):
        color = _color()
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        ry, rx = rng.uniform(h * 0.1, h * 0.35), rng.uniform(w * 0.1, w * 0.35)
        if rng.random() < 0.5:
            mask = (np.abs(yy - cy) < ry) & (np.abs(xx - cx) < rx)
        else:
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 < 1.0
        img[mask] = color

    return np.ascontiguousarray(np.clip(img, 0.0, 1.0), dtype=np.float32)


def folder_source(folder) -> "callable":
    """Source provider that cycles over ``.npy`` images stored in a folder.

    Each file must hold an (H, W, 3) array; values outside [0, 1] are assumed
    to be 8-bit and rescaled.  Selection is seeded via the supplied RNG.
    """
    from pathlib import Path

    paths = sorted(Path(folder).glob("*.npy"))
    if not paths:
        raise FileNotFoundError(f"no .npy images under {folder}")

    def _provider(rng: np.random.Generator, size: int = DEFAULT_SIZE) -> np.ndarray:
        arr = np.load(paths[int(rng.integers(len(paths)))])
        arr = np.asarray(arr, dtype=np.float32)
        if arr.max() > 1.0:
            arr = arr / 255.0
        if arr.shape[0] != size or arr.shape[1] != size:
            ys = np.linspace(0, arr.shape[0] - 1, size).round().astype(int)
            xs = np.linspace(0, arr.shape[1] - 1, size).round().astype(int)
            arr = arr[np.ix_(ys, xs)]
        return np.ascontiguousarray(np.clip(arr, 0.0, 1.0), dtype=np.float32)

    return _provider


def sample_source(
    prog,
    rng: np.random.Generator,
    image_size: int | None = None,
    image_source=None,
    retention_threshold: float | None = None,
) -> np.ndarray:
    """Draw a source whose edit is visible above the retention threshold."""
    from . import InfeasibleProgramError, oracle_execute

    size = DEFAULT_SIZE if image_size is None else int(image_size)
    source = synthetic_source if image_source is None else image_source
    threshold = (
        DEFAULT_RETENTION_THRESHOLD if retention_threshold is None else float(retention_threshold)
    )
    for _ in range(_MAX_SOURCE_TRIES):
        img = source(rng, size)
        out = oracle_execute(img, prog)
        if float(np.mean(np.abs(out - img))) >= threshold:
            return img
    raise InfeasibleProgramError(
        f"image program {prog.name} never exceeded the retention threshold {threshold}"
    )
