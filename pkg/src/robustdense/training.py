"""Config-driven training loop with deterministic data order and checkpointing."""

import copy
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import torch

from .checkpoint import save_checkpoint
from .config import TrainConfig
from .corruption import CorruptionSpec, corrupt, vary_seed
from .data import DatasetManifest, augment_rotate, tile_raster
from .errors import ConfigError, NumericsError, ValidationError
from .losses import cross_entropy_loss
from .metrics import ConfusionMatrix, metrics_report
from .network import RobustDenseNet

log = logging.getLogger(__name__)


@dataclass
class TrainResult:
    checkpoint_path: Path
    loss_history: list
    val_history: list
    steps: int


def build_optimizer(cfg, model):
    name = cfg.optimizer.name.lower()
    if name == "sgd":
        return torch.optim.SGD(model.parameters(), lr=cfg.optimizer.learning_rate,
                               momentum=cfg.optimizer.momentum,
                               weight_decay=cfg.optimizer.weight_decay)
    if name == "adam":
        return torch.optim.Adam(model.parameters(), lr=cfg.optimizer.learning_rate,
                                weight_decay=cfg.optimizer.weight_decay)
    raise ConfigError(f"unknown optimizer {cfg.optimizer.name!r}")


def tiles_to_batch(tiles, dtype, device="cpu"):
    """Stack same-sized tiles into (spectral, dsm, labels) tensors."""
    spectral = torch.stack([torch.from_numpy(t.spectral) for t in tiles]).to(dtype)
    dsm = torch.stack([torch.from_numpy(t.dsm) for t in tiles]).to(dtype)
    labels = torch.stack([torch.from_numpy(t.labels.astype(np.int64)) for t in tiles])
    return spectral.to(device), dsm.to(device), labels.to(device)


def _load_patches(manifest: DatasetManifest, split: str, patch: int, stride: int) -> list:
    patches = []
    for tile in manifest.tiles(split):
        patches.extend(tile_raster(tile, patch, stride))
    return patches


def pixel_accuracy(model, patches, dtype=torch.float32) -> float:
    """Fraction of non-ignored pixels predicted correctly over a patch list."""
    cm = ConfusionMatrix(model.cfg.num_classes)
    with torch.no_grad():
        for patch in patches:
            spectral, dsm, labels = tiles_to_batch([patch], dtype)
            pred = model.predict(spectral, dsm)
            cm.accumulate(pred[0].numpy(), labels[0].numpy())
    return float(np.trace(cm.counts) / max(cm.total, 1))


def train(cfg: TrainConfig, manifest: DatasetManifest, out_dir) -> TrainResult:
    """Run momentum-SGD training; deterministic in (cfg, seed, dataset)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not manifest.split("train"):
        raise ValidationError("manifest has no train split")

    torch.manual_seed(cfg.seed)
    dtype = torch.float64 if cfg.dtype == "float64" else torch.float32
    model = RobustDenseNet(cfg.model)
    if dtype is torch.float64:
        model = model.double()
    optimizer = build_optimizer(cfg, model)

    stride = cfg.patch_stride or cfg.patch_size
    patches = _load_patches(manifest, "train", cfg.patch_size, stride)
    val_patches = _load_patches(manifest, "val", cfg.patch_size, stride)

    rng = np.random.default_rng(cfg.seed)
    aug_spec = CorruptionSpec.from_dict(cfg.corruption) if cfg.corruption else None

    def next_indices():
        while True:
            for i in rng.permutation(len(patches)):
                yield int(i)

    index_stream = next_indices()
    loss_history = []
    val_history = []
    last_good = None
    checkpoint_path = out_dir / "checkpoint.rdn"

    for step in range(1, cfg.max_steps + 1):
        batch = []
        for j in range(cfg.batch_size):
            tile = patches[next(index_stream)]
            if cfg.augment:
                tile = augment_rotate(tile, int(rng.integers(0, 4)))
            if aug_spec is not None and aug_spec.damage_fraction > 0:
                # Uniform damage level per sample keeps near-clean patches in the mix.
                fraction = float(rng.uniform(0.0, aug_spec.damage_fraction))
                step_spec = vary_seed(replace(aug_spec, damage_fraction=fraction),
                                      step * cfg.batch_size + j)
                tile = corrupt(tile, step_spec)
            batch.append(tile)
        spectral, dsm, labels = tiles_to_batch(batch, dtype)

        optimizer.zero_grad()
        try:
            loss = cross_entropy_loss(model(spectral, dsm), labels)
            diverged = not torch.isfinite(loss)
        except NumericsError:
            diverged = True
        if diverged:
            if last_good is not None:
                model.load_state_dict(last_good)
            rescue = save_checkpoint(model, out_dir / "checkpoint_last_good.rdn",
                                     extra={"diverged_at_step": step})
            raise NumericsError(
                f"loss diverged (non-finite) at step {step}; "
                f"last good parameters saved to {rescue}"
            )
        loss.backward()
        optimizer.step()
        loss_history.append(loss.detach().item())
        last_good = copy.deepcopy(model.state_dict())

        if cfg.val_every and step % cfg.val_every == 0 and val_patches:
            cm = ConfusionMatrix(cfg.model.num_classes)
            with torch.no_grad():
                for patch in val_patches:
                    s, d, l = tiles_to_batch([patch], dtype)
                    cm.accumulate(model.predict(s, d)[0].numpy(), l[0].numpy())
            report = metrics_report(cm, manifest.class_names)
            report["step"] = step
            val_history.append(report)
            log.info("step %d: loss %.4f, val OA %.4f, val mean F1 %.4f",
                     step, loss_history[-1], report["oa"], report["mean_f1"])

    save_checkpoint(model, checkpoint_path, extra={
        "steps": cfg.max_steps,
        "seed": cfg.seed,
        "train_config": cfg.to_dict(),
        "final_loss": loss_history[-1],
    })
    return TrainResult(checkpoint_path, loss_history, val_history, cfg.max_steps)
