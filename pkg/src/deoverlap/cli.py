"""Batch command-line interface.

Subcommands::

    decompose   populate intersection/complement RLE layers in a manifest
    merge       recombine per-instance probability grids into instance masks
    synthesize  generate synthetic overlapping clusters with exact labels
    attention   aggregate predictions into an attention map, reweight features
    evaluate    score predictions against ground truth (JSON + optional CSV)

Exit codes: 0 on success, 1 on data errors (one machine-readable JSON line
on stderr), 2 on usage errors.  All outputs are written atomically and are
byte-identical for identical inputs and seed.  Set ``DEOVERLAP_LOG`` to
DEBUG/INFO/WARNING/ERROR to control log verbosity.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .attention import aggregate_attention, reweight
from .config import RunConfig, load_run_config, load_synth_config
from .decompose import decompose_annotation
from .errors import CorruptDataError, DeoverlapError, InvalidInputError
from .gridio import (
    atomic_write_bytes,
    read_feature_grid,
    read_image_png,
    read_prob_png,
    write_feature_grid,
    write_image_png,
    write_prob_png,
)
from .manifest import DatasetManifest, ManifestImage, ManifestInstance, load_manifest, save_manifest
from .masks import BBox, binarize, paste, rle_encode
from .metrics import METRIC_NAMES, evaluate_annotations
from .recombine import CoarseLoss, consistency_loss, pixel_ce, soft_xor_merge, total_loss
from .synth import extract_cell, generate

logger = logging.getLogger("deoverlap")


def _map_ordered(fn, items, jobs: int) -> list:
    """Apply ``fn`` over ``items``, optionally threaded, preserving order."""
    if jobs <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _write_json(data, path) -> None:
    atomic_write_bytes(path, (json.dumps(data, sort_keys=True, indent=2) + "\n").encode("utf-8"))


def _load_config(args) -> RunConfig:
    return load_run_config(args.config) if getattr(args, "config", None) else RunConfig()


# ---------------------------------------------------------------------------
# decompose
# ---------------------------------------------------------------------------


def _cmd_decompose(args) -> int:
    cfg = _load_config(args)
    manifest = load_manifest(args.in_path)
    jobs = args.jobs if args.jobs is not None else cfg.jobs

    def work(img: ManifestImage) -> ManifestImage:
        ann = img.to_annotation()
        layers = decompose_annotation(ann, args.cell_class)
        for inst in img.instances:
            if inst.id in layers:
                inst.intersection_rle = rle_encode(layers[inst.id].intersection)
                inst.complement_rle = rle_encode(layers[inst.id].complement)
        return img

    manifest.images = _map_ordered(work, manifest.images, jobs)
    save_manifest(manifest, args.out)
    return 0


# ---------------------------------------------------------------------------
# merge
# ---------------------------------------------------------------------------


def _instance_box(inst: ManifestInstance, grid: np.ndarray, img: ManifestImage) -> BBox:
    """Box a grid maps into: the declared bbox, or the full image for
    image-sized grids."""
    if inst.bbox is not None:
        return BBox.from_list(inst.bbox)
    if grid.shape == (img.height, img.width):
        return BBox(0, 0, img.width, img.height)
    raise CorruptDataError(
        f"instance {inst.id} on image {img.image_id!r}: grid of shape "
        f"{grid.shape} needs an explicit bbox"
    )


def _cmd_merge(args) -> int:
    cfg = _load_config(args)
    threshold = args.threshold if args.threshold is not None else cfg.binarize_threshold
    manifest = load_manifest(args.in_path)
    base = Path(args.in_path).parent
    gt_by_id = {}
    if args.gt:
        gt_by_id = {img.image_id: img for img in load_manifest(args.gt).images}

    image_losses: list[tuple[float, float, float]] = []
    for img in manifest.images:
        merged_entries: list[ManifestInstance] = []
        zeros = np.zeros((img.height, img.width))
        inst_losses: list[tuple[float, float, float]] = []
        gt_img = gt_by_id.get(img.image_id)
        gt_layers = None
        gt_instances = {}
        if gt_img is not None:
            gt_ann = gt_img.to_annotation()
            gt_layers = decompose_annotation(gt_ann)
            gt_instances = {inst.id: inst for inst in gt_ann.instances}

        for inst in img.instances:
            if inst.intersection_png is None or inst.complement_png is None:
                raise CorruptDataError(
                    f"instance {inst.id} on image {img.image_id!r}: merge needs "
                    "intersection_png and complement_png"
                )
            p_o = read_prob_png(base / inst.intersection_png)
            p_m = read_prob_png(base / inst.complement_png)
            merged = soft_xor_merge(p_o, p_m)
            box = _instance_box(inst, merged, img)
            merged_full = paste(merged, zeros, box, mode="sum")
            mask = binarize(merged_full, threshold)
            if not mask.any():
                logger.warning(
                    "image %s instance %d: recombined mask is empty, dropping",
                    img.image_id,
                    inst.id,
                )
            else:
                entry = dataclasses.replace(inst)
                entry.rle = rle_encode(mask)
                entry.bbox = BBox.from_mask(mask).as_list()
                merged_entries.append(entry)

            if gt_img is not None:
                gt_inst = gt_instances.get(inst.id)
                if gt_inst is None:
                    logger.warning(
                        "image %s instance %d: no ground-truth counterpart, "
                        "skipped in loss computation",
                        img.image_id,
                        inst.id,
                    )
                    continue
                p_o_full = paste(p_o, zeros, box, mode="sum")
                p_m_full = paste(p_m, zeros, box, mode="sum")
                if inst.refined_png is not None:
                    refined = read_prob_png(base / inst.refined_png)
                    refined_full = paste(refined, zeros, _instance_box(inst, refined, img), mode="sum")
                else:
                    refined_full = merged_full
                layer = gt_layers[gt_inst.id]
                dec = pixel_ce(p_o_full, layer.intersection) + pixel_ce(p_m_full, layer.complement)
                rmask = pixel_ce(refined_full, gt_inst.mask)
                cons = consistency_loss(refined_full, p_o_full, p_m_full)
                inst_losses.append((dec, rmask, cons))

        img.instances = merged_entries
        if inst_losses:
            n = len(inst_losses)
            image_losses.append(tuple(sum(v[k] for v in inst_losses) / n for k in range(3)))

    save_manifest(manifest, args.out)

    if args.gt:
        if not image_losses:
            raise InvalidInputError("ground truth shares no instance ids with the predictions")
        n = len(image_losses)
        dec, rmask, cons = (sum(v[k] for v in image_losses) / n for k in range(3))
        breakdown = total_loss(CoarseLoss(), dec, rmask, cons, cfg.loss_weights)
        out = Path(args.out)
        losses_path = out.parent / (out.stem + ".losses.json")
        _write_json(
            {"losses": breakdown.as_dict(), "weights": dataclasses.asdict(cfg.loss_weights)},
            losses_path,
        )
    return 0


# ---------------------------------------------------------------------------
# synthesize
# ---------------------------------------------------------------------------


def _build_cell_bank(bank_manifest: DatasetManifest, base: Path, cell_class: str | None):
    bank = []
    for img in bank_manifest.images:
        if img.file_path is None:
            logger.warning("bank image %s has no file_path, skipping", img.image_id)
            continue
        pixels = read_image_png(base / img.file_path)
        ann = img.to_annotation()
        if pixels.shape[:2] != (img.height, img.width):
            raise CorruptDataError(
                f"bank image {img.image_id!r}: file is {pixels.shape[1]}x{pixels.shape[0]}, "
                f"manifest says {img.width}x{img.height}"
            )
        for inst in ann.instances:
            if cell_class is not None and inst.cell_class.value != cell_class:
                continue
            bank.append(extract_cell(pixels, inst))
    if not bank:
        raise InvalidInputError("no cells extracted from the bank manifest")
    return bank


def _cmd_synthesize(args) -> int:
    synth_cfg = load_synth_config(args.config)
    if args.seed is not None:
        synth_cfg = dataclasses.replace(synth_cfg, seed=args.seed)
    bank_manifest = load_manifest(args.bank)
    bank = _build_cell_bank(bank_manifest, Path(args.bank).parent, args.cell_class)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def work(index: int) -> ManifestImage:
        name = f"synth-{index:05d}"
        sample = generate(
            dataclasses.replace(synth_cfg, seed=synth_cfg.seed + index), bank, image_id=name
        )
        write_image_png(sample.image, out_dir / f"{name}.png")
        logger.info("%s: overlaps %s", name, [round(r, 4) for r in sample.achieved_overlaps])
        return ManifestImage.from_annotation(
            sample.annotation, file_path=f"{name}.png", layers=sample.recorded_layers
        )

    images = _map_ordered(work, range(args.n), args.jobs if args.jobs is not None else 1)
    save_manifest(DatasetManifest(version="1", images=images), out_dir / "manifest.json")
    return 0


# ---------------------------------------------------------------------------
# attention
# ---------------------------------------------------------------------------


def _attention_inputs(img: ManifestImage, base: Path):
    preds = []
    for inst in img.instances:
        if inst.prob_png is not None:
            grid = read_prob_png(base / inst.prob_png)
            box = _instance_box(inst, grid, img)
        elif inst.rle is not None:
            mask = inst.decode_mask(img.width, img.height)
            box = BBox.from_mask(mask)
            grid = mask[box.slices].astype(np.float64)
        else:
            raise CorruptDataError(
                f"instance {inst.id} on image {img.image_id!r}: needs prob_png or rle"
            )
        preds.append((grid, box, inst.score))
    return preds


def _cmd_attention(args) -> int:
    manifest = load_manifest(args.in_path)
    base = Path(args.in_path).parent
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    features = None
    if args.features:
        if len(manifest.images) != 1:
            raise InvalidInputError("--features requires a manifest with exactly one image")
        features = read_feature_grid(args.features)
    for img in manifest.images:
        attn = aggregate_attention(_attention_inputs(img, base), img.width, img.height)
        write_prob_png(attn, out_dir / f"{img.image_id}_attention.png")
        if features is not None:
            write_feature_grid(reweight(features, attn), out_dir / f"{img.image_id}_reweighted.bin")
    return 0


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------


def _cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    gt = load_manifest(args.gt).to_annotations()
    pred = load_manifest(args.pred).to_annotations()
    report = evaluate_annotations(
        gt,
        pred,
        iou_threshold=args.iou_threshold if args.iou_threshold is not None else cfg.iou_threshold,
        dice_threshold=args.dice_threshold if args.dice_threshold is not None else cfg.dice_threshold,
        dice_mode=args.dice_mode if args.dice_mode is not None else cfg.dice_mode,
    )
    _write_json(report.as_dict(), args.out)
    if args.csv:
        rows = ["class,map,dice,f1,aji,tpp,fno"]
        entries = list(report.per_class.items()) + [("average", report.average)]
        for name, values in entries:
            pct = values.as_percent_dict()
            rows.append(name + "," + ",".join(repr(pct[m]) for m in METRIC_NAMES))
        atomic_write_bytes(args.csv, ("\n".join(rows) + "\n").encode("utf-8"))
    return 0


# ---------------------------------------------------------------------------
# parser / entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deoverlap",
        description="De-overlapping toolkit for translucent cell annotations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", help="add intersection/complement layers to a manifest")
    p.add_argument("--in", dest="in_path", required=True, help="input manifest JSON")
    p.add_argument("--out", required=True, help="output manifest JSON")
    p.add_argument("--class", dest="cell_class", choices=["nuclei", "cytoplasm"], default=None)
    p.add_argument("--jobs", type=int, default=None, help="parallel images")
    p.add_argument("--config", default=None, help="run config JSON")
    p.set_defaults(func=_cmd_decompose)

    p = sub.add_parser("merge", help="recombine intersection/complement grids into masks")
    p.add_argument("--in", dest="in_path", required=True, help="prediction manifest JSON")
    p.add_argument("--out", required=True, help="output manifest JSON")
    p.add_argument("--gt", default=None, help="ground-truth manifest (enables loss report)")
    p.add_argument("--threshold", type=float, default=None, help="binarization threshold")
    p.add_argument("--config", default=None, help="run config JSON")
    p.set_defaults(func=_cmd_merge)

    p = sub.add_parser("synthesize", help="generate synthetic overlapping clusters")
    p.add_argument("--config", required=True, help="synth config JSON (or run config with 'synth')")
    p.add_argument("--bank", required=True, help="cell bank manifest (needs image files)")
    p.add_argument("--n", type=int, default=1, help="number of samples")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--class", dest="cell_class", choices=["nuclei", "cytoplasm"], default=None)
    p.add_argument("--jobs", type=int, default=None, help="parallel samples")
    p.set_defaults(func=_cmd_synthesize)

    p = sub.add_parser("attention", help="aggregate predictions into an attention map")
    p.add_argument("--in", dest="in_path", required=True, help="prediction manifest JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--features", default=None, help="feature grid (flat binary) to reweight")
    p.set_defaults(func=_cmd_attention)

    p = sub.add_parser("evaluate", help="score predictions against ground truth")
    p.add_argument("--gt", required=True, help="ground-truth manifest JSON")
    p.add_argument("--pred", required=True, help="prediction manifest JSON")
    p.add_argument("--out", required=True, help="metrics report JSON")
    p.add_argument("--csv", default=None, help="also write a CSV rendering")
    p.add_argument("--iou-threshold", type=float, default=None)
    p.add_argument("--dice-threshold", type=float, default=None)
    p.add_argument("--dice-mode", choices=["instance", "union"], default=None)
    p.add_argument("--config", default=None, help="run config JSON")
    p.set_defaults(func=_cmd_evaluate)
    return parser


def main(argv=None) -> int:
    """Run one subcommand; returns the process exit code."""
    level = os.environ.get("DEOVERLAP_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DeoverlapError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}), file=sys.stderr)
        return 1
    except OSError as exc:
        print(json.dumps({"error": "io", "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
