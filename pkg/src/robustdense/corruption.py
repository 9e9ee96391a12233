"""Deterministic blur/deletion corruption of spectral rasters.

Regions (rectangles or ellipses) are sampled greedily until the requested
fraction of pixels is covered; each region is either motion-blurred or filled.
DSM and label rasters are never touched.
"""

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .errors import ValidationError

MASK64 = (1 << 64) - 1

MAX_DAMAGE_FRACTION = 0.5
MIN_TILE_SIDE = 32


def fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & MASK64
    return h


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return (x ^ (x >> 31)) & MASK64


def tile_rng_seed(seed: int, tile_id: str) -> int:
    """64-bit per-tile seed: splitmix64(seed XOR fnv1a64(tile_id))."""
    return splitmix64((seed ^ fnv1a64(tile_id)) & MASK64)


@dataclass(frozen=True)
class CorruptionSpec:
    damage_fraction: float = 0.0
    blur_share: float = 0.5  # portion of regions assigned to blur vs deletion
    kernel_length_range: tuple = (5, 25)
    region_side_range: tuple = (16, 128)
    region_shapes: tuple = ("rectangle", "ellipse")
    fill_value: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.damage_fraction <= MAX_DAMAGE_FRACTION:
            raise ValidationError(
                f"damage_fraction must be in [0, {MAX_DAMAGE_FRACTION}], got {self.damage_fraction}"
            )
        if not 0.0 <= self.blur_share <= 1.0:
            raise ValidationError(f"blur_share must be in [0, 1], got {self.blur_share}")
        lo, hi = self.kernel_length_range
        if lo < 3 or hi < lo:
            raise ValidationError(f"bad kernel_length_range {self.kernel_length_range}")
        lo, hi = self.region_side_range
        if lo < 2 or hi < lo:
            raise ValidationError(f"bad region_side_range {self.region_side_range}")
        if not 0.0 <= self.fill_value <= 1.0:
            raise ValidationError(f"fill_value must be in [0, 1], got {self.fill_value}")
        for shape in self.region_shapes:
            if shape not in ("rectangle", "ellipse"):
                raise ValidationError(f"unknown region shape {shape!r}")

    def to_dict(self) -> dict:
        return {
            "damage_fraction": self.damage_fraction,
            "blur_share": self.blur_share,
            "kernel_length_range": list(self.kernel_length_range),
            "region_side_range": list(self.region_side_range),
            "region_shapes": list(self.region_shapes),
            "fill_value": self.fill_value,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CorruptionSpec":
        d = dict(d)
        for key in ("kernel_length_range", "region_side_range", "region_shapes"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass(frozen=True)
class Region:
    kind: str  # "blur" | "delete"
    shape: str  # "rectangle" | "ellipse"
    row: int
    col: int
    height: int
    width: int
    length: int | None = None  # blur kernel length
    angle: float | None = None  # blur direction, radians

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "shape": self.shape, "row": self.row, "col": self.col,
             "height": self.height, "width": self.width}
        if self.kind == "blur":
            d["length"] = self.length
            d["angle"] = self.angle
        return d


@dataclass
class DamageMask:
    mask: np.ndarray  # bool (H, W)
    regions: list = field(default_factory=list)


def region_mask(region: Region, h: int, w: int) -> np.ndarray:
    if not (0 <= region.row and region.row + region.height <= h
            and 0 <= region.col and region.col + region.width <= w):
        raise ValidationError(f"region {region} outside {h}x{w} raster")
    mask = np.zeros((h, w), dtype=bool)
    r0, c0 = region.row, region.col
    rh, rw = region.height, region.width
    if region.shape == "rectangle":
        mask[r0:r0 + rh, c0:c0 + rw] = True
    else:
        rr, cc = np.mgrid[0:rh, 0:rw]
        cy, cx = (rh - 1) / 2.0, (rw - 1) / 2.0
        a, b = max(rh / 2.0, 0.5), max(rw / 2.0, 0.5)
        inside = ((rr - cy) / a) ** 2 + ((cc - cx) / b) ** 2 <= 1.0
        mask[r0:r0 + rh, c0:c0 + rw] = inside
    return mask


def sample_damage_mask(h: int, w: int, spec: CorruptionSpec, tile_id: str) -> DamageMask:
    """Greedy region sampling until h*w*damage_fraction pixels are covered."""
    if h < MIN_TILE_SIDE or w < MIN_TILE_SIDE:
        raise ValidationError(f"tile must be at least {MIN_TILE_SIDE}px per side, got {h}x{w}")
    rng = np.random.default_rng(tile_rng_seed(spec.seed, tile_id))
    mask = np.zeros((h, w), dtype=bool)
    regions = []
    target = int(round(h * w * spec.damage_fraction))
    count = 0
    lo, hi = spec.region_side_range
    for _ in range(100_000):
        remaining = target - count
        if remaining < 4:
            break
        side_h = int(rng.integers(lo, hi + 1))
        side_w = int(rng.integers(lo, hi + 1))
        if side_h * side_w > remaining:
            scale = math.sqrt(remaining / (side_h * side_w))
            side_h = max(2, int(side_h * scale))
            side_w = max(2, int(side_w * scale))
        side_h = min(side_h, h)
        side_w = min(side_w, w)
        row = int(rng.integers(0, h - side_h + 1))
        col = int(rng.integers(0, w - side_w + 1))
        shape = str(rng.choice(np.array(spec.region_shapes)))
        if rng.random() < spec.blur_share:
            klo, khi = spec.kernel_length_range
            length = int(rng.integers(klo, khi + 1)) | 1  # odd
            region = Region("blur", shape, row, col, side_h, side_w,
                            length=length, angle=float(rng.uniform(0.0, math.pi)))
        else:
            region = Region("delete", shape, row, col, side_h, side_w)
        regions.append(region)
        painted = region_mask(region, h, w)
        count += int((painted & ~mask).sum())
        mask |= painted
    return DamageMask(mask=mask, regions=regions)


def motion_blur_kernel(length: int, angle: float) -> np.ndarray:
    """Normalized linear motion kernel: a Bresenham line of the given length/angle."""
    length = int(round(length))
    if length % 2 == 0:
        length += 1
    if length <= 1:
        return np.ones((1, 1))
    kernel = np.zeros((length, length))
    c = (length - 1) // 2
    half = (length - 1) / 2.0
    x0, y0 = int(round(c - half * math.cos(angle))), int(round(c - half * math.sin(angle)))
    x1, y1 = int(round(c + half * math.cos(angle))), int(round(c + half * math.sin(angle)))
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    x, y = x0, y0
    while True:
        kernel[y, x] = 1.0
        if x == x1 and y == y1:
            break
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x += sx
        if e2 <= dx:
            err += dx
            y += sy
    return kernel / kernel.sum()


def motion_blur(image: np.ndarray, region: Region, length: int, angle: float) -> np.ndarray:
    """Blur the region of a (C, H, W) raster in [0, 1]; pixels outside it are untouched.

    The convolution reflects at the region's bounding box, so no content leaks
    across the region border.
    """
    c, h, w = image.shape
    inside = region_mask(region, h, w)
    if not inside.any():
        warnings.warn(f"degenerate blur region {region}; skipping", RuntimeWarning)
        return image.copy()
    if length <= 1:
        return image.copy()
    kernel = motion_blur_kernel(length, angle)
    out = image.copy()
    r0, c0 = region.row, region.col
    r1, c1 = r0 + region.height, c0 + region.width
    patch = image[:, r0:r1, c0:c1]
    blurred = np.stack([
        ndimage.convolve(patch[ch], kernel, mode="reflect") for ch in range(c)
    ])
    box = inside[r0:r1, c0:c1]
    sub = out[:, r0:r1, c0:c1]
    sub[:, box] = np.clip(blurred[:, box], 0.0, 1.0)
    return out


def area_delete(image: np.ndarray, region: Region, fill: float = 0.0) -> np.ndarray:
    """Fill all spectral channels inside the region; DSM/labels never come here."""
    _, h, w = image.shape
    inside = region_mask(region, h, w)
    out = image.copy()
    out[:, inside] = fill
    return out


def corrupt(tile, spec: CorruptionSpec):
    """Corrupt a tile's spectral raster per spec. Pure in (tile, spec); DSM,
    labels and tile_id pass through bit-identical."""
    from .data import MultiModalTile

    h, w = tile.labels.shape
    if spec.damage_fraction == 0.0:
        return MultiModalTile(tile.spectral.copy(), tile.dsm.copy(),
                              tile.labels.copy(), tile.tile_id)
    damage = sample_damage_mask(h, w, spec, tile.tile_id)
    spectral = tile.spectral.copy()
    for region in damage.regions:
        if region.kind == "blur":
            spectral = motion_blur(spectral, region, region.length, region.angle)
        else:
            spectral = area_delete(spectral, region, fill=spec.fill_value)
    return MultiModalTile(spectral, tile.dsm.copy(), tile.labels.copy(), tile.tile_id)


def vary_seed(spec: CorruptionSpec, salt: int) -> CorruptionSpec:
    """Derive a spec with a per-step seed (for corruption augmentation)."""
    return replace(spec, seed=splitmix64((spec.seed + salt) & MASK64))
