"""Shared fixtures-in-code for the CLI and acceptance tests."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from deoverlap.annotations import CellClass, ImageAnnotation, InstanceAnnotation
from deoverlap.gridio import write_image_png, write_prob_png
from deoverlap.manifest import DatasetManifest, ManifestImage, load_manifest, save_manifest
from deoverlap.masks import BBox, rle_decode


def disc_mask(h, w, cy, cx, r):
    yy, xx = np.mgrid[0:h, 0:w]
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r


def rect_mask(h, w, y0, y1, x0, x1):
    m = np.zeros((h, w), dtype=bool)
    m[y0:y1, x0:x1] = True
    return m


def overlapping_annotation(image_id="im0", h=24, w=24) -> ImageAnnotation:
    """Two overlapping cytoplasm cells plus one nucleus inside the first."""
    instances = [
        InstanceAnnotation.from_mask(1, CellClass.CYTOPLASM, disc_mask(h, w, 10, 8, 6)),
        InstanceAnnotation.from_mask(2, CellClass.CYTOPLASM, disc_mask(h, w, 12, 15, 6)),
        InstanceAnnotation.from_mask(3, CellClass.NUCLEI, disc_mask(h, w, 10, 8, 2)),
    ]
    ann = ImageAnnotation(image_id=image_id, width=w, height=h, instances=instances)
    ann.validate()
    return ann


def save_annotations(path, annotations, score=None) -> Path:
    images = []
    for ann in annotations:
        img = ManifestImage.from_annotation(ann)
        if score is not None:
            for inst in img.instances:
                inst.score = score
        images.append(img)
    save_manifest(DatasetManifest(version="1", images=images), path)
    return Path(path)


def layers_to_merge_inputs(layers_manifest_path, out_path) -> Path:
    """Turn a decomposed manifest into merge inputs with hard probability grids.

    Each instance's intersection/complement layers become 16-bit PNGs holding
    exact 0/1 probabilities, cropped to the instance bbox; the rle is dropped
    so `merge` has to reconstruct it.
    """
    manifest = load_manifest(layers_manifest_path)
    out_path = Path(out_path)
    grid_dir = out_path.parent
    for img in manifest.images:
        for inst in img.instances:
            box = BBox.from_list(inst.bbox)
            o = rle_decode(inst.intersection_rle, img.width, img.height)
            m = rle_decode(inst.complement_rle, img.width, img.height)
            o_name = f"{img.image_id}_{inst.id}_o.png"
            m_name = f"{img.image_id}_{inst.id}_m.png"
            write_prob_png(o[box.slices].astype(np.float64), grid_dir / o_name)
            write_prob_png(m[box.slices].astype(np.float64), grid_dir / m_name)
            inst.intersection_png = o_name
            inst.complement_png = m_name
            inst.intersection_rle = None
            inst.complement_rle = None
            inst.rle = None
            inst.score = 1.0
    save_manifest(manifest, out_path)
    return out_path


def make_bank_dataset(tmp_path, n_images=2) -> Path:
    """PNG images + manifest usable as a synthesize cell bank."""
    rng = np.random.default_rng(404)
    images = []
    for i in range(n_images):
        h = w = 32
        masks = [
            disc_mask(h, w, 10, 10, 5 + i),
            rect_mask(h, w, 18, 28, 16, 27),
        ]
        pixels = np.full((h, w, 3), 235, dtype=np.uint8)
        for m, color in zip(masks, ((170, 80, 140), (90, 140, 200))):
            pixels[m] = color
        pixels ^= (rng.integers(0, 8, pixels.shape)).astype(np.uint8)
        name = f"bank-{i}.png"
        write_image_png(pixels, tmp_path / name)
        instances = [
            InstanceAnnotation.from_mask(j + 1, CellClass.CYTOPLASM, m)
            for j, m in enumerate(masks)
        ]
        ann = ImageAnnotation(image_id=f"bank-{i}", width=w, height=h, instances=instances)
        images.append(ManifestImage.from_annotation(ann, file_path=name))
    path = tmp_path / "bank.json"
    save_manifest(DatasetManifest(version="1", images=images), path)
    return path


def write_synth_config(tmp_path, **overrides) -> Path:
    cfg = {
        "seed": 9,
        "cells_per_cluster": 2,
        "target_overlap": 0.3,
        "overlap_tolerance": 0.1,
        "alpha": 0.6,
        "max_placement_attempts": 2000,
        "canvas": [72, 72],
    }
    cfg.update(overrides)
    path = tmp_path / "synth.json"
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return path
