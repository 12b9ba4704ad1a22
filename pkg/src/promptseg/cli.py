"""Command-line surface: train, eval, stats, export-errors, inspect-checkpoint.

Exit codes: 0 success, 1 runtime failure (bad data, aborted training),
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .config import load_run_config
from .data import label_distribution, load_manifest, load_taxonomy
from .errors import ConfigError, PromptSegError
from .metrics import export_error_ply, render_table
from .pipeline import (
    evaluate,
    load_checkpoint,
    load_split,
    model_from_checkpoint,
    predict_scan,
    train,
)


def _add_config_arg(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="run config YAML")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="promptseg",
        description="Platform-conditioned point cloud segmentation at desk scale")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model from a run config")
    _add_config_arg(p_train)
    p_train.add_argument("--seed", type=int, default=None)
    p_train.add_argument("--epochs", type=int, default=None)
    p_train.add_argument("--alignment", choices=("LA", "DA"), default=None)

    p_eval = sub.add_parser("eval", help="score a checkpoint on a split")
    _add_config_arg(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--split", choices=("train", "val", "test"),
                        default="val")

    p_stats = sub.add_parser("stats", help="label fraction table per platform")
    _add_config_arg(p_stats)
    p_stats.add_argument("--split", choices=("train", "val", "test"),
                         default="train")

    p_export = sub.add_parser("export-errors",
                              help="write a colored error point cloud")
    _add_config_arg(p_export)
    p_export.add_argument("--checkpoint", required=True)
    p_export.add_argument("--split", choices=("train", "val", "test"),
                          default="val")
    p_export.add_argument("--index", type=int, default=0,
                          help="scan index within the split, platforms concatenated")
    p_export.add_argument("--out", required=True, help="output .ply path")
    p_export.add_argument("--focus-class", default=None,
                          help="class name: its misses red, false alarms blue")

    p_inspect = sub.add_parser("inspect-checkpoint",
                               help="print checkpoint metadata")
    p_inspect.add_argument("--checkpoint", required=True)
    return parser


def _cmd_train(args) -> int:
    overrides = {"seed": args.seed, "epochs": args.epochs,
                 "alignment": args.alignment}
    cfg = load_run_config(args.config, overrides)
    result = train(cfg)
    print(f"final train loss {result.final_loss:.6f}")
    print(f"checkpoint written to {result.checkpoint_path}")
    return 0


def _cmd_eval(args) -> int:
    cfg = load_run_config(args.config)
    taxonomy = load_taxonomy(cfg.taxonomy)
    manifests = load_split(cfg, args.split)
    if not manifests:
        raise ConfigError(f"no platform provides a {args.split} manifest")
    model = model_from_checkpoint(load_checkpoint(args.checkpoint))
    summaries = evaluate(model, manifests, taxonomy, cfg)
    print(render_table(summaries, taxonomy.superclass_names))
    for name, summary in summaries.items():
        print(f"{name}: {summary.ignored} ignored points")
    return 0


def _cmd_stats(args) -> int:
    cfg = load_run_config(args.config)
    taxonomy = load_taxonomy(cfg.taxonomy)
    for platform in cfg.conditions:
        path = cfg.manifest_path(platform, args.split)
        if path is None:
            continue
        manifest = load_manifest(path, args.split)
        dist = label_distribution(manifest, taxonomy, cfg.intensity_scale)
        print(f"== {platform} ({dist.total_points} points) ==")
        for name, fraction in dist.as_rows(taxonomy):
            print(f"{name:<24}{fraction:.4f}")
        if dist.skipped:
            print(f"skipped {len(dist.skipped)} unreadable entries")
        print()
    return 0


def _cmd_export_errors(args) -> int:
    cfg = load_run_config(args.config)
    taxonomy = load_taxonomy(cfg.taxonomy)
    manifests = load_split(cfg, args.split)
    entries = [e for manifest in manifests.values() for e in manifest.entries]
    if not entries:
        raise ConfigError(f"no entries in split {args.split}")
    if not 0 <= args.index < len(entries):
        raise ConfigError(
            f"--index {args.index} outside 0..{len(entries) - 1}")
    focus = None
    if args.focus_class is not None:
        if args.focus_class not in taxonomy.superclass_names:
            raise ConfigError(
                f"unknown class {args.focus_class!r}; "
                f"choose from {taxonomy.superclass_names}")
        focus = taxonomy.superclass_names.index(args.focus_class)

    from .data import load_labeled_scan  # local to keep module import light
    entry = entries[args.index]
    scan = load_labeled_scan(entry, taxonomy, cfg.intensity_scale)
    model = model_from_checkpoint(load_checkpoint(args.checkpoint))
    pred = predict_scan(model, scan, cfg.voxel_size)
    gt = scan.labels if scan.labels is not None else np.full(
        scan.num_points, taxonomy.ignore_index, dtype=np.int64)
    export_error_ply(args.out, scan.coords, gt, pred,
                     taxonomy.ignore_index, focus)
    print(f"wrote {scan.num_points} points to {args.out}")
    return 0


def _cmd_inspect(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    meta = ckpt.meta
    print(f"epoch: {meta['epoch']}")
    print(f"alignment: {meta['alignment']}")
    print(f"conditions: {', '.join(meta['conditions'])}")
    print(f"precision: {meta['precision']}")
    total = sum(int(np.prod(v.shape)) for v in ckpt.params.values())
    print(f"parameters: {len(ckpt.params)} arrays, {total} values")
    if meta["history"]:
        last = meta["history"][-1]
        print(f"last train loss: {last['train_loss']:.6f}")
        for name, miou in last.get("val_miou", {}).items():
            print(f"last val mIoU [{name}]: {miou:.4f}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "stats": _cmd_stats,
    "export-errors": _cmd_export_errors,
    "inspect-checkpoint": _cmd_inspect,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except PromptSegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
