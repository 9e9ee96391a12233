"""Tiles, dataset manifests, tiling/rotation, and the synthetic desk-scale dataset.

On-disk format per tile: one 16-bit RGBA PNG holding NIR,R,G,B in the R,G,B,A
slots, one 16-bit grayscale PNG for the DSM (min-max normalized per tile, the
range recorded in the manifest), one 8-bit paletted PNG for labels.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
from PIL import Image

from .errors import ValidationError
from .metrics import CLASS_NAMES, IGNORE_INDEX

MANIFEST_SCHEMA_VERSION = 1
U16_MAX = 65535

# Per-class spectral means (NIR, R, G, B) for the synthetic scenes; pairwise
# separation is far above the noise scale so a small model can fit them.
SYNTH_SPECTRAL_MEANS = np.array([
    [0.35, 0.55, 0.55, 0.55],  # Imp-suf
    [0.45, 0.70, 0.40, 0.40],  # Building
    [0.70, 0.35, 0.60, 0.30],  # Low-veg
    [0.85, 0.25, 0.45, 0.25],  # Tree
    [0.30, 0.80, 0.20, 0.70],  # Car
    [0.55, 0.45, 0.80, 0.60],  # Clutter
])
SYNTH_NOISE_SIGMA = 0.02
SYNTH_CLASS_HEIGHT = np.array([0.05, 0.60, 0.10, 0.45, 0.15, 0.00])

LABEL_PALETTE = [
    (255, 255, 255),  # Imp-suf
    (0, 0, 255),      # Building
    (0, 255, 255),    # Low-veg
    (0, 255, 0),      # Tree
    (255, 255, 0),    # Car
    (255, 0, 0),      # Clutter
]


@dataclass
class MultiModalTile:
    spectral: np.ndarray  # (4, H, W) float32 in [0, 1], NIR,R,G,B
    dsm: np.ndarray       # (1, H, W) float32 in [0, 1]
    labels: np.ndarray    # (H, W) uint8, classes or IGNORE_INDEX
    tile_id: str

    def validate(self, num_classes: int = len(CLASS_NAMES)):
        h, w = self.labels.shape
        if self.spectral.shape != (4, h, w) or self.dsm.shape != (1, h, w):
            raise ValidationError(
                f"tile {self.tile_id}: rasters not co-registered "
                f"(spectral {self.spectral.shape}, dsm {self.dsm.shape}, labels {self.labels.shape})"
            )
        if not (np.isfinite(self.spectral).all() and np.isfinite(self.dsm).all()):
            raise ValidationError(f"tile {self.tile_id}: non-finite raster values")
        bad = (self.labels >= num_classes) & (self.labels != IGNORE_INDEX)
        if bad.any():
            raise ValidationError(f"tile {self.tile_id}: label values outside [0, {num_classes})")
        return self

    @property
    def shape(self):
        return self.labels.shape


@dataclass
class TileRecord:
    tile_id: str
    spectral_path: str
    dsm_path: str
    label_path: str
    split: str
    dsm_min: float | None = None
    dsm_max: float | None = None


@dataclass
class DatasetManifest:
    records: list
    class_names: tuple = CLASS_NAMES
    dataset_id: str = ""
    root: Path = field(default_factory=Path)

    def split(self, name: str) -> list:
        return [r for r in self.records if r.split == name]

    def load_tile(self, record: TileRecord) -> MultiModalTile:
        root = self.root
        spectral = load_spectral_png(root / record.spectral_path)
        dsm = load_dsm_png(root / record.dsm_path)
        labels = load_labels_png(root / record.label_path)
        return MultiModalTile(spectral, dsm, labels, record.tile_id).validate(len(self.class_names))

    def tiles(self, split: str):
        for record in self.split(split):
            yield self.load_tile(record)

    def save(self, path) -> Path:
        path = Path(path)
        doc = {
            "schema_version": MANIFEST_SCHEMA_VERSION,
            "dataset_id": self.dataset_id,
            "class_names": list(self.class_names),
            "records": [
                {k: v for k, v in vars(r).items() if v is not None} for r in self.records
            ],
        }
        path.write_text(json.dumps(doc, indent=2))
        return path


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    doc = json.loads(path.read_text())
    if doc.get("schema_version") != MANIFEST_SCHEMA_VERSION:
        raise ValidationError(f"unsupported manifest schema_version {doc.get('schema_version')}")
    records = [TileRecord(**r) for r in doc["records"]]
    seen = set()
    for r in records:
        if r.split not in ("train", "val", "test"):
            raise ValidationError(f"record {r.tile_id}: unknown split {r.split!r}")
        if r.tile_id in seen:
            raise ValidationError(f"duplicate tile_id {r.tile_id}")
        seen.add(r.tile_id)
        for p in (r.spectral_path, r.dsm_path, r.label_path):
            if not (path.parent / p).exists():
                raise ValidationError(f"missing raster file {p} (referenced by {r.tile_id})")
    return DatasetManifest(
        records=records,
        class_names=tuple(doc["class_names"]),
        dataset_id=doc.get("dataset_id", ""),
        root=path.parent,
    )


# --- PNG round trip ---------------------------------------------------------

def _quantize(x: np.ndarray) -> np.ndarray:
    return np.clip(np.round(x * U16_MAX), 0, U16_MAX).astype(np.uint16)


def save_spectral_png(spectral: np.ndarray, path):
    """PNG R,G,B,A slots <- NIR,R,G,B. cv2 maps array channels B,G,R,A to PNG."""
    nir, r, g, b = (_quantize(spectral[i]) for i in range(4))
    bgra = np.stack([g, r, nir, b], axis=-1)
    if not cv2.imwrite(str(path), bgra):
        raise OSError(f"failed to write {path}")


def load_spectral_png(path) -> np.ndarray:
    bgra = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if bgra is None or bgra.ndim != 3 or bgra.shape[2] != 4:
        raise ValidationError(f"{path}: not a 4-channel spectral PNG")
    g, r, nir, b = (bgra[..., i] for i in range(4))
    stacked = np.stack([nir, r, g, b]).astype(np.float32)
    return stacked / U16_MAX


def save_dsm_png(dsm: np.ndarray, path):
    if not cv2.imwrite(str(path), _quantize(dsm[0])):
        raise OSError(f"failed to write {path}")


def load_dsm_png(path) -> np.ndarray:
    gray = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if gray is None or gray.ndim != 2:
        raise ValidationError(f"{path}: not a grayscale DSM PNG")
    return (gray.astype(np.float32) / U16_MAX)[None]


def save_labels_png(labels: np.ndarray, path):
    img = Image.fromarray(labels.astype(np.uint8), mode="P")
    palette = np.zeros((256, 3), dtype=np.uint8)
    for i, c in enumerate(LABEL_PALETTE):
        palette[i] = c
    img.putpalette(palette.ravel().tolist())
    img.save(path)


def load_labels_png(path) -> np.ndarray:
    img = Image.open(path)
    if img.mode != "P":
        raise ValidationError(f"{path}: labels must be a paletted PNG, got mode {img.mode}")
    return np.asarray(img, dtype=np.uint8)


def save_tile(tile: MultiModalTile, out_dir) -> dict:
    """Write the three rasters; returns relative paths keyed like TileRecord."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = {
        "spectral_path": f"{tile.tile_id}_spectral.png",
        "dsm_path": f"{tile.tile_id}_dsm.png",
        "label_path": f"{tile.tile_id}_labels.png",
    }
    save_spectral_png(tile.spectral, out_dir / names["spectral_path"])
    save_dsm_png(tile.dsm, out_dir / names["dsm_path"])
    save_labels_png(tile.labels, out_dir / names["label_path"])
    return names


# --- tiling and augmentation ------------------------------------------------

def window_starts(size: int, patch: int, stride: int) -> list:
    """Sliding-window starts plus a final edge-aligned window covering the remainder."""
    if patch > size:
        raise ValidationError(
            f"patch {patch} exceeds raster size {size}; pad the raster before tiling"
        )
    if stride < 1:
        raise ValidationError(f"stride must be >= 1, got {stride}")
    starts = list(range(0, size - patch + 1, stride))
    if starts[-1] + patch < size:
        starts.append(size - patch)
    return starts


def tile_raster(tile: MultiModalTile, patch: int, stride: int) -> list:
    """Cut a tile into patch x patch children; every pixel lands in >= 1 child."""
    if patch % 32 != 0:
        raise ValidationError(f"patch must be divisible by 32, got {patch}")
    h, w = tile.shape
    children = []
    for r in window_starts(h, patch, stride):
        for c in window_starts(w, patch, stride):
            children.append(MultiModalTile(
                spectral=tile.spectral[:, r:r + patch, c:c + patch].copy(),
                dsm=tile.dsm[:, r:r + patch, c:c + patch].copy(),
                labels=tile.labels[r:r + patch, c:c + patch].copy(),
                tile_id=f"{tile.tile_id}#{r},{c}",
            ))
    return children


def augment_rotate(tile: MultiModalTile, k: int) -> MultiModalTile:
    """Rotate all modalities clockwise by k*90 degrees; (r, c) -> (c, H-1-r) at k=1."""
    if k not in (0, 1, 2, 3):
        raise ValidationError(f"rotation k must be in 0..3, got {k}")
    h, w = tile.shape
    if h != w:
        raise ValidationError(f"rotation needs a square patch, got {h}x{w}")
    if k == 0:
        return tile
    rot = lambda a: np.rot90(a, k=-k, axes=(-2, -1)).copy()
    return MultiModalTile(rot(tile.spectral), rot(tile.dsm), rot(tile.labels), tile.tile_id)


# --- synthetic dataset ------------------------------------------------------

def _synth_tile(size: int, seed: int, index: int) -> tuple:
    rng = np.random.default_rng([seed, index])
    n_sites = max(6, size // 16)
    sites = rng.uniform(0, size, size=(n_sites, 2))
    site_classes = np.concatenate([
        np.arange(6), rng.integers(0, 6, size=n_sites - 6)
    ]) if n_sites >= 6 else rng.integers(0, 6, size=n_sites)

    rr, cc = np.mgrid[0:size, 0:size]
    d2 = (rr[..., None] - sites[:, 0]) ** 2 + (cc[..., None] - sites[:, 1]) ** 2
    labels = site_classes[np.argmin(d2, axis=-1)].astype(np.uint8)

    spectral = SYNTH_SPECTRAL_MEANS[labels].transpose(2, 0, 1)
    spectral = spectral + rng.normal(0.0, SYNTH_NOISE_SIGMA, size=spectral.shape)
    spectral = np.clip(spectral, 0.0, 1.0).astype(np.float32)

    slope = rng.uniform(-0.2, 0.2, size=2)
    terrain = slope[0] * rr / size + slope[1] * cc / size
    height = terrain + SYNTH_CLASS_HEIGHT[labels] + rng.normal(0.0, 0.01, size=labels.shape)
    h_min, h_max = float(height.min()), float(height.max())
    dsm = ((height - h_min) / max(h_max - h_min, 1e-9)).astype(np.float32)[None]
    return spectral, dsm, labels, (h_min, h_max)


def synth_dataset(num_tiles: int, size: int, seed: int, out_dir,
                  val_fraction: float = 0.125, test_fraction: float = 0.25) -> DatasetManifest:
    """Generate a deterministic multimodal dataset and write it under out_dir."""
    if size % 32 != 0:
        raise ValidationError(f"size must be divisible by 32, got {size}")
    if num_tiles < 1:
        raise ValidationError(f"num_tiles must be >= 1, got {num_tiles}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n_val = int(round(num_tiles * val_fraction))
    n_test = int(round(num_tiles * test_fraction))
    n_train = num_tiles - n_val - n_test
    if n_train < 1:
        raise ValidationError("split fractions leave no training tiles")
    records = []
    for i in range(num_tiles):
        spectral, dsm, labels, (h_min, h_max) = _synth_tile(size, seed, i)
        split = "train" if i < n_train else ("val" if i < n_train + n_val else "test")
        tile = MultiModalTile(spectral, dsm, labels, f"synth{i:03d}")
        paths = save_tile(tile, out_dir)
        records.append(TileRecord(tile_id=tile.tile_id, split=split,
                                  dsm_min=h_min, dsm_max=h_max, **paths))
    manifest = DatasetManifest(
        records=records,
        dataset_id=f"synth-{seed}-{num_tiles}x{size}",
        root=out_dir,
    )
    manifest.save(out_dir / "manifest.json")
    return manifest
