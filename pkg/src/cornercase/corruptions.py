"""Co-variate corruption generators: depth-aware fog, sensor noise,
white-pixel occlusion, and severity sweeps.

Fog follows the atmospheric scattering model
    out = in * t + A * (1 - t),   t = exp(-beta * depth),
so each output pixel is a convex combination of the scene radiance and
the atmospheric light A. With A above the scene radiance the output is
monotone non-decreasing in beta pixel by pixel.

Every operation is a pure function of (input, spec) including the
seed, so sweeps replay bit-identically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .images import DepthMap, ImageBuffer, load_depth, load_image, save_image

CORRUPTION_KINDS = ("fog", "gaussian_noise", "white_box")

DEFAULT_ATMOSPHERIC_LIGHT = 0.92

# depth fallback when no map is supplied: vertical ramp approximating
# road-scene geometry, far at the top of the frame, near at the bottom
RAMP_TOP_METERS = 300.0
RAMP_BOTTOM_METERS = 5.0

SWEEP_PRESETS = {
    "fog-paper": ("fog", (0.005, 0.01, 0.02)),
    "noise-paper": ("gaussian_noise", tuple(np.linspace(0.001, 0.01, 50))),
    "whitebox-paper": ("white_box", tuple(np.linspace(0.007, 0.119, 20))),
}


@dataclass(frozen=True)
class CorruptionSpec:
    """One corruption setting: beta for fog, sigma for noise, area
    fraction for white_box."""

    kind: str
    severity: float
    seed: int = 0
    atmospheric_light: float = DEFAULT_ATMOSPHERIC_LIGHT

    def __post_init__(self):
        if self.kind not in CORRUPTION_KINDS:
            raise ValidationError(f"unknown corruption kind {self.kind!r}")
        if not np.isfinite(self.severity) or self.severity < 0:
            raise ValidationError("severity must be a non-negative real")
        if self.kind == "white_box" and self.severity > 1.0:
            raise ValidationError("white_box area fraction must be <= 1")
        if not 0.0 <= self.atmospheric_light <= 1.0:
            raise ValidationError("atmospheric_light must lie in [0, 1]")


def default_depth_ramp(height: int, width: int) -> DepthMap:
    """Linear top-to-bottom depth ramp for depth-free datasets."""
    col = np.linspace(RAMP_TOP_METERS, RAMP_BOTTOM_METERS, height)
    depth = np.tile(col[:, None], (1, width))
    return DepthMap(depth=depth, valid=np.ones((height, width), dtype=bool))


def _resolved_depth(img: ImageBuffer, depth: DepthMap | None) -> np.ndarray:
    if depth is None:
        return default_depth_ramp(img.height, img.width).depth
    if (depth.height, depth.width) != (img.height, img.width):
        raise ValidationError(
            f"depth {depth.height}x{depth.width} does not match "
            f"image {img.height}x{img.width}"
        )
    if depth.valid.all():
        return depth.depth
    if not depth.valid.any():
        raise ValidationError("depth map has no valid pixels")
    filled = depth.depth.copy()
    filled[~depth.valid] = np.median(depth.depth[depth.valid])
    return filled


def apply_fog(
    img: ImageBuffer,
    depth: DepthMap | None,
    beta: float,
    atmospheric_light: float = DEFAULT_ATMOSPHERIC_LIGHT,
) -> ImageBuffer:
    """Render fog with extinction coefficient beta (per meter).

    Invalid-depth pixels use the median of the valid depths; a missing
    depth map falls back to the default vertical ramp.
    """
    if beta < 0 or not np.isfinite(beta):
        raise ValidationError("beta must be a non-negative real")
    if not 0.0 <= atmospheric_light <= 1.0:
        raise ValidationError("atmospheric_light must lie in [0, 1]")
    if beta == 0.0:
        return img
    d = _resolved_depth(img, depth)
    t = np.exp(-beta * d)[:, :, None]
    out = img.pixels * t + atmospheric_light * (1.0 - t)
    return ImageBuffer(np.clip(out, 0.0, 1.0))


def apply_gaussian_noise(img: ImageBuffer, sigma: float, seed: int = 0) -> ImageBuffer:
    """Add i.i.d. zero-mean Gaussian noise per pixel-channel, clamped."""
    if sigma < 0 or not np.isfinite(sigma):
        raise ValidationError("sigma must be a non-negative real")
    if sigma == 0.0:
        return img
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, sigma, img.pixels.shape)
    return ImageBuffer(np.clip(img.pixels + noise, 0.0, 1.0))


def apply_white_box(img: ImageBuffer, area_fraction: float, seed: int = 0) -> ImageBuffer:
    """Paint one square white box covering roughly area_fraction of the image.

    The side is round(sqrt(f * H * W)) clamped to the image bounds; the
    box position is drawn uniformly from the seeded generator.
    """
    if not np.isfinite(area_fraction) or not 0.0 <= area_fraction <= 1.0:
        raise ValidationError("area_fraction must lie in [0, 1]")
    h, w = img.height, img.width
    side = int(np.floor(np.sqrt(area_fraction * h * w) + 0.5))
    side = min(side, h, w)
    if side == 0:
        return img
    rng = np.random.default_rng(seed)
    top = int(rng.integers(0, h - side + 1))
    left = int(rng.integers(0, w - side + 1))
    out = img.pixels.copy()
    out[top : top + side, left : left + side, :] = 1.0
    return ImageBuffer(out)


def apply_corruption(
    img: ImageBuffer, spec: CorruptionSpec, depth: DepthMap | None = None
) -> ImageBuffer:
    """Dispatch a corruption spec onto one image."""
    if spec.kind == "fog":
        return apply_fog(img, depth, spec.severity, spec.atmospheric_light)
    if spec.kind == "gaussian_noise":
        return apply_gaussian_noise(img, spec.severity, spec.seed)
    return apply_white_box(img, spec.severity, spec.seed)


def severity_sweep(
    kind: str,
    grid,
    base_seed: int = 0,
    atmospheric_light: float = DEFAULT_ATMOSPHERIC_LIGHT,
) -> list[CorruptionSpec]:
    """Expand a severity grid or a named preset into corruption specs.

    Presets: fog-paper (3 fog levels), noise-paper (50 equally spaced
    sigmas in [0.001, 0.01]), whitebox-paper (20 area fractions equally
    spaced in [0.007, 0.119]). Sweep seeds derive as base_seed + i.
    """
    if isinstance(grid, str):
        if grid not in SWEEP_PRESETS:
            raise ValidationError(
                f"unknown preset {grid!r}; choose from {sorted(SWEEP_PRESETS)}"
            )
        preset_kind, severities = SWEEP_PRESETS[grid]
        if preset_kind != kind:
            raise ValidationError(f"preset {grid!r} is for kind {preset_kind!r}, not {kind!r}")
    else:
        severities = tuple(float(v) for v in grid)
        if not severities:
            raise ValidationError("severity grid must be non-empty")
        if any(b <= a for a, b in zip(severities, severities[1:])):
            raise ValidationError("severity grid must be strictly increasing")
    return [
        CorruptionSpec(
            kind=kind,
            severity=float(sev),
            seed=base_seed + i,
            atmospheric_light=atmospheric_light,
        )
        for i, sev in enumerate(severities)
    ]


# ---------------------------------------------------------------------------
# directory sweeps
# ---------------------------------------------------------------------------


def severity_dirname(severity: float) -> str:
    return format(severity, ".6g")


def run_sweep(
    images_dir,
    specs,
    out_dir,
    depth_dir=None,
) -> dict:
    """Corrupt every PNG under images_dir once per spec.

    Output layout is <out>/<kind>/<severity>/<original-filename>, plus
    a manifest.json listing (source, spec, output) triples and the
    depth policy actually used. Depth maps, when given, are matched to
    images by filename in depth_dir. Per-image noise/box seeds derive
    as spec.seed + image index (sorted filename order) and are recorded
    in the manifest.
    """
    images_dir = Path(images_dir)
    out_dir = Path(out_dir)
    sources = sorted(p for p in images_dir.iterdir() if p.suffix.lower() == ".png")
    if not sources:
        raise ValidationError(f"no PNG images found under {images_dir}")
    specs = list(specs)
    if not specs:
        raise ValidationError("no corruption specs supplied")
    kind = specs[0].kind
    if any(s.kind != kind for s in specs):
        raise ValidationError("all specs in one sweep must share a corruption kind")

    depth_policy = "default_ramp"
    if depth_dir is not None:
        depth_policy = "provided"
    entries = []
    for spec in specs:
        sev_dir = out_dir / kind / severity_dirname(spec.severity)
        sev_dir.mkdir(parents=True, exist_ok=True)
        for idx, src in enumerate(sources):
            img = load_image(src)
            depth = None
            if depth_dir is not None:
                depth_path = Path(depth_dir) / src.name
                depth = load_depth(depth_path)
                if not depth.valid.all():
                    depth_policy = "provided_with_median_fill"
            per_image = CorruptionSpec(
                kind=spec.kind,
                severity=spec.severity,
                seed=spec.seed + idx,
                atmospheric_light=spec.atmospheric_light,
            )
            corrupted = apply_corruption(img, per_image, depth)
            dst = sev_dir / src.name
            save_image(corrupted, dst)
            entries.append(
                {
                    "source": str(src),
                    "output": str(dst),
                    "severity": spec.severity,
                    "seed": per_image.seed,
                }
            )
    manifest = {
        "kind": kind,
        "atmospheric_light": specs[0].atmospheric_light,
        "depth_policy": depth_policy if kind == "fog" else "not_applicable",
        "entries": entries,
    }
    manifest_path = out_dir / kind / "manifest.json"
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest
