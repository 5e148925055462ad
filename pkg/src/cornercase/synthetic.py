"""Procedural road-like scenes for desk-scale detection pipelines.

Each scene family tunes the in-distribution variation so that one
corruption kind lands in the detectable-but-not-trivial regime of the
toy encoder:

* fog family: scenes carry a random native haze level, so light extra
  fog overlaps the training distribution while heavy fog leaves it.
* noise family: low-contrast scenes whose per-channel contrast is
  calibrated to a fixed value, so the global std features of the toy
  encoder sit in a tight band that small sensor noise visibly shifts.
* white-box family: scenes natively contain a few bright patches, so
  small injected boxes blend in while large ones stand out.

Scenes are pure functions of (family, seed).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corruptions import DEFAULT_ATMOSPHERIC_LIGHT, apply_fog
from .errors import ValidationError
from .images import ImageBuffer, save_image


@dataclass(frozen=True)
class SceneFamily:
    """Distribution parameters for one synthetic scene population."""

    height: int = 64
    width: int = 96
    sky_color: tuple = (0.55, 0.64, 0.80)
    road_gray: float = 0.38
    color_jitter: float = 0.06
    brightness_jitter: float = 0.08
    block_count: tuple = (2, 5)
    block_value_range: tuple = (0.15, 0.75)
    haze_beta_max: float = 0.0
    atmospheric_light: float = DEFAULT_ATMOSPHERIC_LIGHT
    white_patch_max_fraction: float = 0.0
    normalize_std: float | None = None


FOG_FAMILY = SceneFamily(haze_beta_max=0.012)

NOISE_FAMILY = SceneFamily(
    sky_color=(0.50, 0.50, 0.52),
    road_gray=0.45,
    color_jitter=0.015,
    brightness_jitter=0.04,
    block_value_range=(0.40, 0.52),
    normalize_std=0.025,
)

WHITEBOX_FAMILY = SceneFamily(white_patch_max_fraction=0.05)

_FAMILY_BY_KIND = {
    "fog": FOG_FAMILY,
    "gaussian_noise": NOISE_FAMILY,
    "white_box": WHITEBOX_FAMILY,
}


def family_for_kind(kind: str) -> SceneFamily:
    if kind not in _FAMILY_BY_KIND:
        raise ValidationError(f"no scene family for corruption kind {kind!r}")
    return _FAMILY_BY_KIND[kind]


def road_scene(family: SceneFamily, seed: int) -> ImageBuffer:
    """Render one scene deterministically from the family and seed."""
    rng = np.random.default_rng(seed)
    h, w = family.height, family.width
    img = np.empty((h, w, 3))

    horizon = int(h * rng.uniform(0.35, 0.50))
    sky = np.array(family.sky_color) + rng.normal(0.0, family.color_jitter, 3)
    sky = np.clip(sky, 0.05, 0.95)
    # sky fades toward a lighter horizon
    for r in range(horizon):
        frac = r / max(horizon - 1, 1)
        img[r, :, :] = sky * (1 - 0.4 * frac) + 0.9 * (0.4 * frac)

    road = family.road_gray + rng.normal(0.0, family.color_jitter)
    road = float(np.clip(road, 0.05, 0.9))
    for r in range(horizon, h):
        frac = (r - horizon) / max(h - horizon - 1, 1)
        img[r, :, :] = road * (0.9 + 0.2 * frac)

    # buildings / vehicles: rectangles in the band around the horizon
    lo, hi = family.block_count
    for _ in range(int(rng.integers(lo, hi + 1))):
        bw = int(rng.integers(4, max(5, w // 5)))
        bh = int(rng.integers(4, max(5, h // 4)))
        top = int(rng.integers(max(0, horizon - bh), min(h - bh, horizon + h // 6) + 1))
        left = int(rng.integers(0, w - bw + 1))
        color = rng.uniform(*family.block_value_range, 3)
        img[top : top + bh, left : left + bw, :] = color

    img *= 1.0 + rng.uniform(-family.brightness_jitter, family.brightness_jitter)
    buf = ImageBuffer(np.clip(img, 0.0, 1.0))

    if family.haze_beta_max > 0:
        beta = float(rng.uniform(0.0, family.haze_beta_max))
        buf = apply_fog(buf, None, beta, family.atmospheric_light)

    if family.white_patch_max_fraction > 0:
        px = buf.pixels.copy()
        budget = family.white_patch_max_fraction * h * w * rng.uniform(0.0, 1.0)
        used = 0.0
        for _ in range(int(rng.integers(0, 4))):
            side = int(rng.integers(2, 13))
            if used + side * side > budget:
                break
            top = int(rng.integers(0, h - side + 1))
            left = int(rng.integers(0, w - side + 1))
            px[top : top + side, left : left + side, :] = 1.0
            used += side * side
        buf = ImageBuffer(px)

    if family.normalize_std is not None:
        px = buf.pixels.copy()
        for c in range(3):
            chan = px[:, :, c]
            std = chan.std()
            if std > 0:
                px[:, :, c] = chan.mean() + (chan - chan.mean()) * (
                    family.normalize_std / std
                )
        buf = ImageBuffer(np.clip(px, 0.0, 1.0))

    return buf


def scene_set(family: SceneFamily, n: int, seed: int = 0) -> list[ImageBuffer]:
    """Generate n scenes with per-scene seeds derived as seed + i."""
    if n < 1:
        raise ValidationError("need at least one scene")
    return [road_scene(family, seed + i) for i in range(n)]


def write_scene_set(out_dir, family: SceneFamily, n: int, seed: int = 0) -> list[Path]:
    """Materialize a scene set as numbered PNGs; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, img in enumerate(scene_set(family, n, seed)):
        path = out_dir / f"scene-{i:04d}.png"
        save_image(img, path)
        paths.append(path)
    return paths
