"""Dataset manifest persistence.

A manifest is a UTF-8 JSON document listing images and their instances.
Overlapping instances cannot share a single label raster, so every instance
carries its own RLE mask.  Layout::

    {
      "version": "1",
      "images": [
        {
          "image_id": "im-001",
          "file_path": "im-001.png",          # optional, relative to manifest
          "width": 128, "height": 128,
          "instances": [
            {
              "id": 1,
              "class": "cytoplasm",            # or "nuclei"
              "bbox": [x_min, y_min, x_max, y_max],   # optional, tight, half-open
              "rle": [0, 4, ...],              # optional for grid-only records
              "score": 0.9,                    # predictions only
              "intersection_rle": [...],       # decomposition layers, optional
              "complement_rle": [...],
              "intersection_png": "...",       # probability grid refs, optional,
              "complement_png": "...",         #   16-bit grayscale PNG paths
              "prob_png": "...",               #   relative to the manifest
              "refined_png": "..."
            }
          ]
        }
      ]
    }

Loading validates the schema (errors carry the JSON path), checks RLE run
sums against ``width*height`` naming the offending instance, and enforces
that an explicit bbox is the tight box of the decoded mask (the bbox is
recomputed when absent).  Saving emits canonical JSON -- sorted keys, two
space indent -- through an atomic rename, so ``load(save(m)) == m``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .annotations import CellClass, ImageAnnotation, InstanceAnnotation
from .decompose import ClusterDecomposition
from .errors import CorruptDataError, ManifestSchemaError
from .gridio import atomic_write_bytes
from .masks import BBox, rle_decode, rle_encode

_CLASS_VALUES = tuple(c.value for c in CellClass)
_PNG_FIELDS = ("intersection_png", "complement_png", "prob_png", "refined_png")


@dataclass
class ManifestInstance:
    id: int
    cell_class: str
    rle: list[int] | None = None
    bbox: list[int] | None = None
    score: float | None = None
    intersection_rle: list[int] | None = None
    complement_rle: list[int] | None = None
    intersection_png: str | None = None
    complement_png: str | None = None
    prob_png: str | None = None
    refined_png: str | None = None

    def to_dict(self) -> dict:
        out: dict = {"id": self.id, "class": self.cell_class}
        for name in ("rle", "bbox", "score", "intersection_rle", "complement_rle", *_PNG_FIELDS):
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        return out

    def decode_mask(self, width: int, height: int) -> np.ndarray:
        if self.rle is None:
            raise CorruptDataError(f"instance {self.id} has no rle mask")
        try:
            return rle_decode(self.rle, width, height)
        except CorruptDataError as exc:
            raise CorruptDataError(f"instance {self.id}: {exc}") from exc

    def decode_layer(self, which: str, width: int, height: int) -> np.ndarray:
        runs = getattr(self, f"{which}_rle")
        if runs is None:
            raise CorruptDataError(f"instance {self.id} has no {which}_rle")
        try:
            return rle_decode(runs, width, height)
        except CorruptDataError as exc:
            raise CorruptDataError(f"instance {self.id} ({which}): {exc}") from exc

    def to_instance(self, width: int, height: int) -> InstanceAnnotation:
        mask = self.decode_mask(width, height)
        if not mask.any():
            raise CorruptDataError(f"instance {self.id}: mask is empty")
        tight = BBox.from_mask(mask)
        if self.bbox is not None:
            declared = BBox.from_list(self.bbox)
            if declared != tight:
                raise CorruptDataError(
                    f"instance {self.id}: bbox {self.bbox} is not the tight box "
                    f"of the mask ({tight.as_list()})"
                )
        return InstanceAnnotation(
            id=self.id,
            cell_class=CellClass(self.cell_class),
            bbox=tight,
            mask=mask,
            score=self.score,
        )


@dataclass
class ManifestImage:
    image_id: str
    width: int
    height: int
    file_path: str | None = None
    instances: list[ManifestInstance] = field(default_factory=list)

    def to_dict(self) -> dict:
        out: dict = {
            "image_id": self.image_id,
            "width": self.width,
            "height": self.height,
            "instances": [inst.to_dict() for inst in self.instances],
        }
        if self.file_path is not None:
            out["file_path"] = self.file_path
        return out

    def to_annotation(self) -> ImageAnnotation:
        ann = ImageAnnotation(
            image_id=self.image_id,
            width=self.width,
            height=self.height,
            instances=[inst.to_instance(self.width, self.height) for inst in self.instances],
        )
        ids = [inst.id for inst in ann.instances]
        if len(ids) != len(set(ids)):
            raise CorruptDataError(f"image {self.image_id!r}: duplicate instance ids")
        return ann

    @classmethod
    def from_annotation(
        cls,
        ann: ImageAnnotation,
        file_path: str | None = None,
        layers: ClusterDecomposition | None = None,
    ) -> "ManifestImage":
        instances = []
        for inst in ann.instances:
            entry = ManifestInstance(
                id=inst.id,
                cell_class=inst.cell_class.value,
                rle=rle_encode(inst.mask),
                bbox=inst.bbox.as_list(),
                score=inst.score,
            )
            if layers is not None and inst.id in layers:
                entry.intersection_rle = rle_encode(layers[inst.id].intersection)
                entry.complement_rle = rle_encode(layers[inst.id].complement)
            instances.append(entry)
        return cls(
            image_id=ann.image_id,
            width=ann.width,
            height=ann.height,
            file_path=file_path,
            instances=instances,
        )


@dataclass
class DatasetManifest:
    version: str = "1"
    images: list[ManifestImage] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"version": self.version, "images": [img.to_dict() for img in self.images]}

    def to_annotations(self) -> list[ImageAnnotation]:
        return [img.to_annotation() for img in self.images]


# ---------------------------------------------------------------------------
# Schema validation
# ---------------------------------------------------------------------------


def _fail(path: str, message: str):
    raise ManifestSchemaError(f"{path}: {message}")


def _require(data: dict, key: str, kinds, path: str):
    if key not in data:
        _fail(f"{path}.{key}", "missing required field")
    return _typed(data[key], key, kinds, path)


def _typed(value, key: str, kinds, path: str):
    # bool is an int subclass; reject it explicitly for numeric fields.
    if isinstance(value, bool) and bool not in (kinds if isinstance(kinds, tuple) else (kinds,)):
        _fail(f"{path}.{key}", "expected a number, got a boolean")
    if not isinstance(value, kinds):
        if isinstance(kinds, tuple):
            expected = "/".join(k.__name__ for k in kinds)
        else:
            expected = kinds.__name__
        _fail(f"{path}.{key}", f"expected {expected}, got {type(value).__name__}")
    return value


def _int_list(value, key: str, path: str, allow_negative: bool = False) -> list[int]:
    if not isinstance(value, list):
        _fail(f"{path}.{key}", "expected a list of integers")
    for i, v in enumerate(value):
        if isinstance(v, bool) or not isinstance(v, int):
            _fail(f"{path}.{key}[{i}]", "expected an integer")
        if v < 0 and not allow_negative:
            _fail(f"{path}.{key}[{i}]", "must be non-negative")
    return list(value)


def _parse_instance(data, path: str, width: int, height: int) -> ManifestInstance:
    if not isinstance(data, dict):
        _fail(path, "expected an object")
    inst_id = _require(data, "id", int, path)
    cell_class = _require(data, "class", str, path)
    if cell_class not in _CLASS_VALUES:
        _fail(f"{path}.class", f"must be one of {list(_CLASS_VALUES)}, got {cell_class!r}")
    entry = ManifestInstance(id=inst_id, cell_class=cell_class)

    for rle_key, attr in (
        ("rle", "rle"),
        ("intersection_rle", "intersection_rle"),
        ("complement_rle", "complement_rle"),
    ):
        if rle_key in data:
            runs = _int_list(data[rle_key], rle_key, path)
            if sum(runs) != width * height:
                raise CorruptDataError(
                    f"instance {inst_id}: {rle_key} run sum {sum(runs)} != "
                    f"{width}x{height} = {width * height}"
                )
            setattr(entry, attr, runs)

    if "bbox" in data:
        box = _int_list(data["bbox"], "bbox", path, allow_negative=True)
        if len(box) != 4:
            _fail(f"{path}.bbox", f"expected 4 coordinates, got {len(box)}")
        if not (0 <= box[0] < box[2] <= width and 0 <= box[1] < box[3] <= height):
            _fail(f"{path}.bbox", f"box {box} is degenerate or outside {width}x{height}")
        entry.bbox = box
    if "score" in data:
        score = _typed(data["score"], "score", (int, float), path)
        if not 0.0 <= float(score) <= 1.0:
            _fail(f"{path}.score", f"must lie in [0, 1], got {score}")
        entry.score = float(score)
    for key in _PNG_FIELDS:
        if key in data:
            setattr(entry, key, _typed(data[key], key, str, path))
    known = {"id", "class", "rle", "bbox", "score", "intersection_rle", "complement_rle", *_PNG_FIELDS}
    for key in data:
        if key not in known:
            _fail(f"{path}.{key}", "unknown field")
    return entry


def _parse_image(data, path: str) -> ManifestImage:
    if not isinstance(data, dict):
        _fail(path, "expected an object")
    image_id = _require(data, "image_id", str, path)
    width = _require(data, "width", int, path)
    height = _require(data, "height", int, path)
    if width <= 0 or height <= 0:
        _fail(path, f"dimensions must be positive, got {width}x{height}")
    img = ManifestImage(image_id=image_id, width=width, height=height)
    if "file_path" in data:
        img.file_path = _typed(data["file_path"], "file_path", str, path)
    raw_instances = _require(data, "instances", list, path)
    seen_ids = set()
    for i, raw in enumerate(raw_instances):
        inst = _parse_instance(raw, f"{path}.instances[{i}]", width, height)
        if inst.id in seen_ids:
            _fail(f"{path}.instances[{i}].id", f"duplicate instance id {inst.id}")
        seen_ids.add(inst.id)
        img.instances.append(inst)
    known = {"image_id", "width", "height", "file_path", "instances"}
    for key in data:
        if key not in known:
            _fail(f"{path}.{key}", "unknown field")
    return img


def parse_manifest(data) -> DatasetManifest:
    """Validate a decoded JSON document and build the manifest."""
    if not isinstance(data, dict):
        _fail("$", "top level must be an object")
    version = _require(data, "version", str, "$")
    raw_images = _require(data, "images", list, "$")
    manifest = DatasetManifest(version=version)
    seen_ids = set()
    for i, raw in enumerate(raw_images):
        img = _parse_image(raw, f"$.images[{i}]")
        if img.image_id in seen_ids:
            _fail(f"$.images[{i}].image_id", f"duplicate image_id {img.image_id!r}")
        seen_ids.add(img.image_id)
        manifest.images.append(img)
    for key in data:
        if key not in ("version", "images"):
            _fail(f"$.{key}", "unknown field")
    return manifest


def load_manifest(path) -> DatasetManifest:
    """Load, schema-check, and integrity-check a manifest file.

    Integrity checks decode every RLE present, require non-empty masks, and
    enforce tight bounding boxes, so downstream code can trust the data.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestSchemaError(f"{path}: not valid JSON ({exc})") from exc
    manifest = parse_manifest(data)
    for img in manifest.images:
        for inst in img.instances:
            if inst.rle is not None:
                inst.to_instance(img.width, img.height)
    return manifest


def save_manifest(manifest: DatasetManifest, path) -> None:
    """Write canonical JSON (sorted keys, stable integer formatting) atomically."""
    text = json.dumps(manifest.to_dict(), sort_keys=True, indent=2) + "\n"
    atomic_write_bytes(path, text.encode("utf-8"))
