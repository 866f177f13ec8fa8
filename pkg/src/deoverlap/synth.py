"""Synthetic overlapping-cluster generation from annotated cell crops.

Cells extracted from labeled images are re-composited onto a canvas as
translucent layers with a controllable pairwise overlap ratio.  Because the
compositor knows every placement, it emits exact ground truth alongside the
image: instance masks, plus the intersection/complement layers recorded from
its own per-class coverage counts (pixels covered by two or more same-class
instances form the shared region).

The overlap ratio between two regions is ``|A & B| / min(|A|, |B|)``, which
stays meaningful when cell sizes differ.  Placement is incremental: each new
cell rejection-samples an offset until its ratio against the union of the
already-placed masks falls inside ``[target - tol, target + tol]``.

Generation is fully driven by one seeded generator, so identical
``(seed, config, bank)`` inputs reproduce bit-identical samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .annotations import CellClass, ImageAnnotation, InstanceAnnotation
from .decompose import ClusterDecomposition, InstanceLayers, build_overlap_graph
from .errors import GenerationError, InvalidInputError, PlacementError
from .masks import BBox, check_bit_mask

DEFAULT_BACKGROUND = (230, 230, 230)  # light gray
MAX_RESTARTS = 32


@dataclass(frozen=True)
class SynthConfig:
    """Knobs of the cluster generator; validated on construction."""

    seed: int = 0
    cells_per_cluster: int = 2
    target_overlap: float = 0.3
    overlap_tolerance: float = 0.05
    alpha: float = 0.6
    max_placement_attempts: int = 1000
    canvas: tuple[int, int] = (128, 128)  # (width, height)

    def __post_init__(self):
        if self.cells_per_cluster < 2:
            raise InvalidInputError("cells_per_cluster must be >= 2")
        if not 0.0 <= self.target_overlap < 1.0:
            raise InvalidInputError("target_overlap must lie in [0, 1)")
        if self.overlap_tolerance <= 0.0:
            raise InvalidInputError("overlap_tolerance must be positive")
        if self.target_overlap + self.overlap_tolerance >= 1.0:
            raise InvalidInputError("target_overlap + overlap_tolerance must stay below 1")
        if not 0.0 < self.alpha <= 1.0:
            raise InvalidInputError("alpha must lie in (0, 1]")
        if self.max_placement_attempts < 1:
            raise InvalidInputError("max_placement_attempts must be >= 1")
        w, h = self.canvas
        if w <= 0 or h <= 0:
            raise InvalidInputError("canvas dimensions must be positive")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "cells_per_cluster": self.cells_per_cluster,
            "target_overlap": self.target_overlap,
            "overlap_tolerance": self.overlap_tolerance,
            "alpha": self.alpha,
            "max_placement_attempts": self.max_placement_attempts,
            "canvas": list(self.canvas),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SynthConfig":
        kwargs = dict(data)
        if "canvas" in kwargs:
            kwargs["canvas"] = tuple(int(v) for v in kwargs["canvas"])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise InvalidInputError(f"bad synth config: {exc}") from exc


@dataclass(frozen=True)
class CellCrop:
    """A cell cut from a source image: RGB pixels and mask, tight to the bbox."""

    image: np.ndarray  # (h, w, 3) uint8
    mask: np.ndarray  # (h, w) bool
    cell_class: CellClass = CellClass.CYTOPLASM

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    @property
    def width(self) -> int:
        return self.mask.shape[1]


@dataclass(frozen=True)
class Placement:
    """A crop positioned on the canvas; (x, y) is its top-left corner."""

    crop: CellCrop
    x: int
    y: int

    def canvas_mask(self, width: int, height: int) -> np.ndarray:
        out = np.zeros((height, width), dtype=bool)
        out[self.y : self.y + self.crop.height, self.x : self.x + self.crop.width] = self.crop.mask
        return out


@dataclass(frozen=True)
class SynthSample:
    """One generated cluster: image, annotation, recorded layers, overlap ratios."""

    image: np.ndarray  # (H, W, 3) uint8
    annotation: ImageAnnotation
    recorded_layers: ClusterDecomposition
    achieved_overlaps: list[float] = field(default_factory=list)


def extract_cell(source_image: np.ndarray, instance: InstanceAnnotation) -> CellCrop:
    """Cut an instance out of its source image, tight to its bounding box."""
    mask = check_bit_mask(instance.mask)
    if not mask.any():
        raise InvalidInputError(f"instance {instance.id}: cannot extract an empty mask")
    img = np.asarray(source_image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise InvalidInputError("source image must be (height, width, 3)")
    if img.shape[:2] != mask.shape:
        raise InvalidInputError(
            f"instance {instance.id}: mask {mask.shape} does not fit image {img.shape[:2]}"
        )
    box = BBox.from_mask(mask)
    return CellCrop(
        image=np.ascontiguousarray(img[box.slices], dtype=np.uint8),
        mask=mask[box.slices].copy(),
        cell_class=instance.cell_class,
    )


def overlap_ratio(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection area over the smaller region's area."""
    a, b = check_bit_mask(a, "a"), check_bit_mask(b, "b")
    area_a = int(np.count_nonzero(a))
    area_b = int(np.count_nonzero(b))
    if area_a == 0 or area_b == 0:
        raise InvalidInputError("overlap ratio undefined for an empty region")
    return int(np.count_nonzero(a & b)) / min(area_a, area_b)


def place_with_overlap(
    base_mask: np.ndarray, incoming: CellCrop, cfg: SynthConfig, rng: np.random.Generator
) -> tuple[int, int]:
    """Rejection-sample an (x, y) offset hitting the configured overlap band.

    ``base_mask`` is the canvas-sized union of everything already placed.
    Offsets are drawn uniformly over all positions keeping the crop inside
    the canvas; the first whose measured ratio lands in
    ``[target - tol, target + tol]`` wins.  Raises
    :class:`~deoverlap.errors.PlacementError` when the attempt budget runs
    out, in which case the caller resamples cells.
    """
    base_mask = check_bit_mask(base_mask, "base_mask")
    width, height = cfg.canvas
    if base_mask.shape != (height, width):
        raise InvalidInputError("base_mask must match the canvas size")
    if incoming.width > width or incoming.height > height:
        raise InvalidInputError(
            f"crop {incoming.width}x{incoming.height} exceeds canvas {width}x{height}"
        )
    lo = max(0.0, cfg.target_overlap - cfg.overlap_tolerance)
    hi = cfg.target_overlap + cfg.overlap_tolerance
    for _ in range(cfg.max_placement_attempts):
        x = int(rng.integers(0, width - incoming.width + 1))
        y = int(rng.integers(0, height - incoming.height + 1))
        shifted = Placement(incoming, x, y).canvas_mask(width, height)
        if lo <= overlap_ratio(base_mask, shifted) <= hi:
            return x, y
    raise PlacementError(
        f"no offset with overlap in [{lo:.3f}, {hi:.3f}] "
        f"after {cfg.max_placement_attempts} attempts"
    )


def composite(
    placements: list[Placement], alpha: float, background: np.ndarray
) -> np.ndarray:
    """Alpha-blend placed crops over a background, in placement order.

    Under each crop's mask: ``out = alpha * cell + (1 - alpha) * under``.
    Blending accumulates in float and rounds half-up once at the end, so
    ``alpha = 1`` makes the topmost cell fully occlude what lies below.
    """
    if not 0.0 < alpha <= 1.0:
        raise InvalidInputError("alpha must lie in (0, 1]")
    bg = np.asarray(background)
    if bg.ndim != 3 or bg.shape[2] != 3:
        raise InvalidInputError("background must be (height, width, 3)")
    canvas = bg.astype(np.float64)
    h, w = canvas.shape[:2]
    for p in placements:
        if p.x < 0 or p.y < 0 or p.x + p.crop.width > w or p.y + p.crop.height > h:
            raise InvalidInputError(f"placement at ({p.x}, {p.y}) exceeds the canvas")
        rows = slice(p.y, p.y + p.crop.height)
        cols = slice(p.x, p.x + p.crop.width)
        region = canvas[rows, cols]
        m = p.crop.mask
        region[m] = alpha * p.crop.image[m].astype(np.float64) + (1.0 - alpha) * region[m]
    return np.clip(np.floor(canvas + 0.5), 0, 255).astype(np.uint8)


def _recorded_layers(instances: list[InstanceAnnotation], ann: ImageAnnotation) -> ClusterDecomposition:
    # Coverage-count route: a pixel of instance i is shared iff >= 2 same-class
    # instances cover it.  Independent of the pairwise-union decomposition.
    layers: dict[int, InstanceLayers] = {}
    for cls in {inst.cell_class for inst in instances}:
        members = [inst for inst in instances if inst.cell_class is cls]
        counts = np.zeros(members[0].mask.shape, dtype=np.int32)
        for inst in members:
            counts += inst.mask
        shared = counts >= 2
        for inst in members:
            o = inst.mask & shared
            layers[inst.id] = InstanceLayers(intersection=o, complement=inst.mask & ~o)
    return ClusterDecomposition(layers=layers, graph=build_overlap_graph(ann))


def generate(
    cfg: SynthConfig,
    cell_bank: list[CellCrop],
    background: np.ndarray | None = None,
    image_id: str = "synthetic",
    max_restarts: int = MAX_RESTARTS,
) -> SynthSample:
    """Generate one synthetic cluster with exact ground truth.

    Cells are drawn from the bank with replacement; the first is placed
    uniformly at random, each later one via :func:`place_with_overlap`
    against the union of its predecessors.  A placement dead-end restarts
    the whole sample with fresh cells; after ``max_restarts`` dead-ends a
    :class:`~deoverlap.errors.GenerationError` reports the attempt count.
    """
    if not cell_bank:
        raise InvalidInputError("cell bank is empty")
    width, height = cfg.canvas
    if background is None:
        bg = np.full((height, width, 3), DEFAULT_BACKGROUND, dtype=np.uint8)
    else:
        bg = _tile_background(np.asarray(background), width, height)

    rng = np.random.default_rng(cfg.seed)
    attempts_spent = 0
    for _ in range(max_restarts):
        picks = [cell_bank[int(i)] for i in rng.integers(0, len(cell_bank), cfg.cells_per_cluster)]
        try:
            placements, ratios = _place_all(picks, cfg, rng)
        except PlacementError:
            attempts_spent += cfg.max_placement_attempts
            continue

        instances = [
            InstanceAnnotation.from_mask(i + 1, p.crop.cell_class, p.canvas_mask(width, height))
            for i, p in enumerate(placements)
        ]
        ann = ImageAnnotation(image_id=image_id, width=width, height=height, instances=instances)
        ann.validate()
        return SynthSample(
            image=composite(placements, cfg.alpha, bg),
            annotation=ann,
            recorded_layers=_recorded_layers(instances, ann),
            achieved_overlaps=ratios,
        )
    raise GenerationError(
        f"gave up after {max_restarts} restarts "
        f"(~{attempts_spent} placement attempts); loosen the overlap band, "
        f"enlarge the canvas, or raise max_placement_attempts"
    )


def _place_all(
    picks: list[CellCrop], cfg: SynthConfig, rng: np.random.Generator
) -> tuple[list[Placement], list[float]]:
    width, height = cfg.canvas
    first = picks[0]
    if first.width > width or first.height > height:
        raise InvalidInputError(
            f"crop {first.width}x{first.height} exceeds canvas {width}x{height}"
        )
    x = int(rng.integers(0, width - first.width + 1))
    y = int(rng.integers(0, height - first.height + 1))
    placements = [Placement(first, x, y)]
    covered = placements[0].canvas_mask(width, height)
    ratios: list[float] = []
    for crop in picks[1:]:
        x, y = place_with_overlap(covered, crop, cfg, rng)
        placement = Placement(crop, x, y)
        shifted = placement.canvas_mask(width, height)
        ratios.append(overlap_ratio(covered, shifted))
        placements.append(placement)
        covered |= shifted
    return placements, ratios


def _tile_background(tile: np.ndarray, width: int, height: int) -> np.ndarray:
    if tile.ndim != 3 or tile.shape[2] != 3:
        raise InvalidInputError("background tile must be (height, width, 3)")
    reps_y = -(-height // tile.shape[0])
    reps_x = -(-width // tile.shape[1])
    return np.tile(tile, (reps_y, reps_x, 1))[:height, :width].astype(np.uint8)
