"""Command-line interface: synth | corrupt | train | eval | sweep | report."""

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .config import load_train_config
from .corruption import CorruptionSpec, corrupt, sample_damage_mask
from .data import DatasetManifest, load_manifest, save_tile, synth_dataset
from .errors import NumericsError, ValidationError
from .report import emit_report, load_report, render_comparison_table
from .sweep import evaluate_split, evaluate_sweep
from .training import train

log = logging.getLogger("robustdense")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robustdense",
                                     description="Robust multimodal segmentation toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic multimodal dataset")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--num-tiles", type=int, default=16)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--val-fraction", type=float, default=0.125)
    p.add_argument("--test-fraction", type=float, default=0.25)

    p = sub.add_parser("corrupt", help="write corrupted copies of a dataset")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--fraction", required=True, type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--blur-share", type=float, default=0.5)
    p.add_argument("--fill", type=float, default=0.0)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", required=True, type=Path, help="TOML or JSON TrainConfig")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--no-semix", action="store_true", help="ablate the DSM fusion block")
    p.add_argument("--plain-pixelshuffle", action="store_true",
                   help="ablate the up-block fusion path")

    p = sub.add_parser("eval", help="evaluate a checkpoint at one damage fraction")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--fraction", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", default="test")
    p.add_argument("--patch", type=int, default=None)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("sweep", help="evaluate a checkpoint across damage fractions")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--fractions", default="0,0.2,0.5",
                   help="comma-separated damage fractions")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", default="test")
    p.add_argument("--patch", type=int, default=None)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("report", help="re-emit files from a saved report")
    p.add_argument("--report", required=True, type=Path, help="path to report.json")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--compare", type=Path, default=None,
                   help="comparison-table JSON to render alongside the curves")
    return parser


def cmd_synth(args) -> int:
    manifest = synth_dataset(args.num_tiles, args.size, args.seed, args.out,
                             val_fraction=args.val_fraction, test_fraction=args.test_fraction)
    log.info("wrote %d tiles to %s", len(manifest.records), args.out)
    return 0


def cmd_corrupt(args) -> int:
    manifest = load_manifest(args.manifest)
    spec = CorruptionSpec(damage_fraction=args.fraction, seed=args.seed,
                          blur_share=args.blur_share, fill_value=args.fill)
    args.out.mkdir(parents=True, exist_ok=True)
    sidecar = {"spec": spec.to_dict(), "tiles": {}}
    records = []
    for record in manifest.records:
        tile = manifest.load_tile(record)
        damaged = corrupt(tile, spec)
        paths = save_tile(damaged, args.out)
        regions = sample_damage_mask(*tile.shape, spec, tile.tile_id).regions
        sidecar["tiles"][tile.tile_id] = [r.to_dict() for r in regions]
        records.append(dataclasses.replace(record, **paths))
    out_manifest = DatasetManifest(records=records, class_names=manifest.class_names,
                                   dataset_id=f"{manifest.dataset_id}-damaged{args.fraction}",
                                   root=args.out)
    out_manifest.save(args.out / "manifest.json")
    (args.out / "corruption.json").write_text(json.dumps(sidecar, indent=2))
    log.info("corrupted %d tiles at fraction %.2f", len(records), args.fraction)
    return 0


def cmd_train(args) -> int:
    cfg = load_train_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    model_overrides = {}
    if args.no_semix:
        model_overrides["use_semix"] = False
    if args.plain_pixelshuffle:
        model_overrides["plain_pixelshuffle"] = True
    if model_overrides:
        cfg = dataclasses.replace(cfg, model=dataclasses.replace(cfg.model, **model_overrides))
    manifest = load_manifest(args.manifest)
    result = train(cfg, manifest, args.out)
    log.info("trained %d steps; final loss %.4f; checkpoint %s",
             result.steps, result.loss_history[-1], result.checkpoint_path)
    return 0


def cmd_eval(args) -> int:
    from .checkpoint import load_checkpoint

    model, _ = load_checkpoint(args.checkpoint)
    model.eval()
    manifest = load_manifest(args.manifest)
    report = evaluate_split(model, manifest, fraction=args.fraction, seed=args.seed,
                            split=args.split, patch_size=args.patch)
    args.out.mkdir(parents=True, exist_ok=True)
    out = args.out / "eval.json"
    out.write_text(json.dumps(report, indent=2))
    log.info("OA %.4f, mean F1 %.4f -> %s", report["oa"], report["mean_f1"], out)
    return 0


def cmd_sweep(args) -> int:
    fractions = [float(f) for f in args.fractions.split(",") if f.strip()]
    manifest = load_manifest(args.manifest)
    report = evaluate_sweep(args.checkpoint, manifest, fractions, seed=args.seed,
                            patch_size=args.patch, split=args.split)
    paths = emit_report(report, args.out)
    log.info("sweep report written: %s", ", ".join(str(p) for p in paths.values()))
    return 0


def cmd_report(args) -> int:
    report = load_report(args.report)
    paths = emit_report(report, args.out)
    if args.compare is not None:
        table = render_comparison_table(json.loads(args.compare.read_text()))
        compare_path = args.out / "comparison.txt"
        compare_path.write_text(table)
        paths["comparison"] = compare_path
        print(table, end="")
    log.info("report files written: %s", ", ".join(str(p) for p in paths.values()))
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "corrupt": cmd_corrupt,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    threads = os.environ.get("ROBUSTDENSE_THREADS")
    if threads:
        import torch

        torch.set_num_threads(int(threads))
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NumericsError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
