"""Instance and image annotation records.

An :class:`ImageAnnotation` is the per-image label set: every instance has a
class, a tight bounding box, and a full-resolution binary mask.  The same
record type carries predictions, in which case ``score`` is set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import InvalidInputError
from .masks import BBox, check_bit_mask


class CellClass(str, Enum):
    NUCLEI = "nuclei"
    CYTOPLASM = "cytoplasm"

    def __str__(self) -> str:  # "nuclei" rather than "CellClass.NUCLEI"
        return self.value


@dataclass
class InstanceAnnotation:
    """One labeled (or predicted) instance: id, class, tight box, mask, score."""

    id: int
    cell_class: CellClass
    bbox: BBox
    mask: np.ndarray
    score: float | None = None

    @classmethod
    def from_mask(cls, id: int, cell_class, mask, score: float | None = None) -> "InstanceAnnotation":
        """Build an instance from a mask, computing the tight bounding box."""
        mask = check_bit_mask(mask)
        return cls(
            id=int(id),
            cell_class=CellClass(cell_class),
            bbox=BBox.from_mask(mask),
            mask=mask,
            score=score,
        )

    def validate(self) -> None:
        mask = check_bit_mask(self.mask)
        if not mask.any():
            raise InvalidInputError(f"instance {self.id}: mask is empty")
        tight = BBox.from_mask(mask)
        if tight != self.bbox:
            raise InvalidInputError(
                f"instance {self.id}: bbox {self.bbox.as_list()} is not the tight "
                f"box of the mask ({tight.as_list()})"
            )
        if self.score is not None and not 0.0 <= self.score <= 1.0:
            raise InvalidInputError(f"instance {self.id}: score {self.score} outside [0, 1]")


@dataclass
class ImageAnnotation:
    """All instances of one image, sharing its pixel dimensions."""

    image_id: str
    width: int
    height: int
    instances: list[InstanceAnnotation] = field(default_factory=list)

    def validate(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise InvalidInputError(f"image {self.image_id}: non-positive dimensions")
        seen = set()
        for inst in self.instances:
            inst.validate()
            if inst.mask.shape != (self.height, self.width):
                raise InvalidInputError(
                    f"image {self.image_id}: instance {inst.id} mask shape "
                    f"{inst.mask.shape} != image ({self.height}, {self.width})"
                )
            if inst.id in seen:
                raise InvalidInputError(
                    f"image {self.image_id}: duplicate instance id {inst.id}"
                )
            seen.add(inst.id)

    def of_class(self, cell_class: CellClass | str) -> list[InstanceAnnotation]:
        cell_class = CellClass(cell_class)
        return [i for i in self.instances if i.cell_class is cell_class]

    def classes(self) -> list[CellClass]:
        """Classes present on this image, in enum declaration order."""
        present = {i.cell_class for i in self.instances}
        return [c for c in CellClass if c in present]
