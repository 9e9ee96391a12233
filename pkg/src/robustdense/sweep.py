"""Robustness sweep: evaluate a checkpoint across damage fractions."""

from dataclasses import dataclass

import numpy as np

from .checkpoint import checkpoint_digest, load_checkpoint
from .corruption import MAX_DAMAGE_FRACTION, CorruptionSpec, corrupt
from .data import DatasetManifest, tile_raster
from .errors import ValidationError
from .metrics import ConfusionMatrix, foreground_mask, metrics_report
from .training import tiles_to_batch

REPORT_SCHEMA_VERSION = 1


@dataclass
class RobustnessReport:
    rows: list  # metrics reports ordered by damage_fraction
    checkpoint_id: str = ""
    dataset_id: str = ""

    def validate(self) -> "RobustnessReport":
        fractions = [row["damage_fraction"] for row in self.rows]
        if any(b <= a for a, b in zip(fractions, fractions[1:])):
            raise ValidationError(f"damage fractions must strictly increase, got {fractions}")
        for row in self.rows:
            f1 = np.asarray(row["per_class_f1"])
            recomputed = float(f1[foreground_mask(tuple(row["class_names"]))].mean())
            if abs(recomputed - row["mean_f1"]) > 1e-9:
                raise ValidationError(
                    f"inconsistent report row at fraction {row['damage_fraction']}: "
                    f"mean_f1 {row['mean_f1']} != recomputed {recomputed}"
                )
        return self

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "checkpoint_id": self.checkpoint_id,
            "dataset_id": self.dataset_id,
            "rows": self.rows,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RobustnessReport":
        if doc.get("schema_version") != REPORT_SCHEMA_VERSION:
            raise ValidationError(f"unsupported report schema_version {doc.get('schema_version')}")
        return cls(rows=doc["rows"], checkpoint_id=doc.get("checkpoint_id", ""),
                   dataset_id=doc.get("dataset_id", "")).validate()


def _patch_size_for(tile, patch_size):
    if patch_size is not None:
        return patch_size
    h, w = tile.shape
    if h % 32 or w % 32:
        raise ValidationError(
            f"tile {tile.tile_id} is {h}x{w}; pass an explicit patch size divisible by 32"
        )
    return min(h, w)


def evaluate_split(model, manifest: DatasetManifest, fraction: float = 0.0, seed: int = 0,
                   split: str = "test", patch_size: int | None = None,
                   corruption_overrides: dict | None = None, dtype=None) -> dict:
    """Corrupt the split at one damage fraction, run inference, accumulate metrics."""
    import torch

    if not manifest.split(split):
        raise ValidationError(f"manifest has no {split} split")
    dtype = dtype or next(model.parameters()).dtype
    spec = CorruptionSpec(damage_fraction=fraction, seed=seed,
                          **(corruption_overrides or {}))
    cm = ConfusionMatrix(model.cfg.num_classes)
    with torch.no_grad():
        for tile in manifest.tiles(split):
            if fraction > 0:
                tile = corrupt(tile, spec)
            patch = _patch_size_for(tile, patch_size)
            for child in tile_raster(tile, patch, patch):
                spectral, dsm, labels = tiles_to_batch([child], dtype)
                pred = model.predict(spectral, dsm)
                cm.accumulate(pred[0].numpy(), labels[0].numpy())
    return metrics_report(cm, manifest.class_names, damage_fraction=fraction)


def evaluate_sweep(checkpoint_path, manifest: DatasetManifest, fractions, seed: int = 0,
                   patch_size: int | None = None, split: str = "test",
                   corruption_overrides: dict | None = None) -> RobustnessReport:
    """Deterministic degradation curve over sorted damage fractions."""
    fractions = [float(f) for f in fractions]
    if not fractions:
        raise ValidationError("need at least one damage fraction")
    if any(f < 0 or f > MAX_DAMAGE_FRACTION for f in fractions):
        raise ValidationError(f"fractions must lie in [0, {MAX_DAMAGE_FRACTION}], got {fractions}")
    if any(b <= a for a, b in zip(fractions, fractions[1:])):
        raise ValidationError(f"fractions must be strictly increasing, got {fractions}")
    model, _ = load_checkpoint(checkpoint_path)
    model.eval()
    rows = [
        evaluate_split(model, manifest, fraction=f, seed=seed, split=split,
                       patch_size=patch_size, corruption_overrides=corruption_overrides)
        for f in fractions
    ]
    return RobustnessReport(
        rows=rows,
        checkpoint_id=checkpoint_digest(checkpoint_path),
        dataset_id=manifest.dataset_id,
    ).validate()
