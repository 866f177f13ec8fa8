"""Overlap graphs and exact intersection/complement decomposition.

Every instance mask ``e`` splits into the pixels it shares with at least one
other same-class instance (the intersection layer ``o``) and the pixels that
belong to it alone (the complement layer ``m``)::

    o = e & union(all other same-class masks)
    m = e & ~o

so ``o | m == e`` and ``o & m == 0`` hold bit-exactly.  Decomposition is
always computed within a class: nuclei never contribute to cytoplasm
overlap and vice versa, since nucleus-in-cytoplasm containment is handled
by the attention stage, not by decomposition.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .annotations import CellClass, ImageAnnotation, InstanceAnnotation
from .masks import check_bit_mask, union_all
from .validation import check_same_shape


@dataclass(frozen=True)
class OverlapGraph:
    """Instances as nodes; an edge wherever two masks share at least one pixel.

    ``edges`` maps ordered pairs ``(i, j)`` with ``i < j`` to the intersection
    area in pixels (always >= 1).
    """

    nodes: tuple[int, ...]
    edges: dict[tuple[int, int], int] = field(default_factory=dict)

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.edges

    def weight(self, i: int, j: int) -> int:
        return self.edges.get((min(i, j), max(i, j)), 0)

    def neighbors(self, i: int) -> list[int]:
        out = [b if a == i else a for (a, b) in self.edges if i in (a, b)]
        return sorted(out)

    def isolated(self) -> list[int]:
        """Nodes with no overlap partner."""
        touched = {n for edge in self.edges for n in edge}
        return [n for n in self.nodes if n not in touched]

    def components(self) -> list[list[int]]:
        """Connected components ("clusters"), each sorted, ordered by minimum id."""
        adj: dict[int, set[int]] = {n: set() for n in self.nodes}
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        seen: set[int] = set()
        comps = []
        for start in sorted(self.nodes):
            if start in seen:
                continue
            stack, comp = [start], []
            seen.add(start)
            while stack:
                n = stack.pop()
                comp.append(n)
                for nb in adj[n]:
                    if nb not in seen:
                        seen.add(nb)
                        stack.append(nb)
            comps.append(sorted(comp))
        return comps


@dataclass(frozen=True)
class InstanceLayers:
    """The (intersection, complement) mask pair of one instance."""

    intersection: np.ndarray
    complement: np.ndarray


@dataclass(frozen=True)
class ClusterDecomposition:
    """Per-instance layer pairs plus the overlap graph they were derived from."""

    layers: dict[int, InstanceLayers]
    graph: OverlapGraph

    def __contains__(self, instance_id: int) -> bool:
        return instance_id in self.layers

    def __getitem__(self, instance_id: int) -> InstanceLayers:
        return self.layers[instance_id]


def build_overlap_graph(
    ann: ImageAnnotation, class_filter: CellClass | str | None = None
) -> OverlapGraph:
    """Pairwise-intersection graph of an image's instances.

    With ``class_filter`` set, only instances of that class become nodes;
    otherwise all instances do (edges still require a shared pixel, so
    cross-class pairs only connect when their masks genuinely overlap).
    """
    instances = ann.of_class(class_filter) if class_filter is not None else ann.instances
    nodes = tuple(inst.id for inst in instances)
    edges: dict[tuple[int, int], int] = {}
    for idx, a in enumerate(instances):
        for b in instances[idx + 1 :]:
            w = int(np.count_nonzero(a.mask & b.mask))
            if w > 0:
                key = (a.id, b.id) if a.id < b.id else (b.id, a.id)
                edges[key] = w
    return OverlapGraph(nodes=nodes, edges=edges)


def decompose_instance(
    target: InstanceAnnotation, others: list[InstanceAnnotation]
) -> tuple[np.ndarray, np.ndarray]:
    """Split ``target.mask`` into (intersection, complement) against ``others``.

    The result is permutation-invariant in ``others``; with no others the
    intersection layer is empty and the complement equals the full mask.
    """
    mask = check_bit_mask(target.mask)
    for other in others:
        check_same_shape(mask, other.mask, "instance masks")
    shared = union_all((o.mask for o in others), *mask.shape)
    intersection = mask & shared
    complement = mask & ~intersection
    return intersection, complement


def decompose_image(ann: ImageAnnotation, cell_class: CellClass | str) -> ClusterDecomposition:
    """Decompose every instance of one class against its same-class peers."""
    cell_class = CellClass(cell_class)
    instances = ann.of_class(cell_class)
    layers: dict[int, InstanceLayers] = {}
    for inst in instances:
        others = [o for o in instances if o.id != inst.id]
        intersection, complement = decompose_instance(inst, others)
        layers[inst.id] = InstanceLayers(intersection=intersection, complement=complement)
    return ClusterDecomposition(layers=layers, graph=build_overlap_graph(ann, cell_class))


def decompose_annotation(
    ann: ImageAnnotation, class_filter: CellClass | str | None = None
) -> ClusterDecomposition:
    """Decompose one class, or every class present, of an image.

    Decomposition is always same-class; with no filter the per-class results
    are merged (instance ids are unique per image, and the merged graph is
    the disjoint union of the per-class graphs).
    """
    classes = [CellClass(class_filter)] if class_filter is not None else ann.classes()
    layers: dict[int, InstanceLayers] = {}
    nodes: list[int] = []
    edges: dict[tuple[int, int], int] = {}
    for cls in classes:
        part = decompose_image(ann, cls)
        layers.update(part.layers)
        nodes.extend(part.graph.nodes)
        edges.update(part.graph.edges)
    return ClusterDecomposition(layers=layers, graph=OverlapGraph(tuple(nodes), edges))


class ClusterDecomposer(BaseEstimator, TransformerMixin):
    """Stateless transformer turning annotations into layer decompositions.

    Parameters
    ----------
    class_filter : str or CellClass or None, default=None
        Restrict decomposition to one class; ``None`` decomposes every class
        present (each within itself) and merges the results per image.
    """

    def __init__(self, class_filter=None):
        self.class_filter = class_filter

    def fit(self, X, y=None):
        return self

    def transform(self, X) -> list[ClusterDecomposition]:
        """Decompose a sequence of :class:`ImageAnnotation` objects."""
        return [decompose_annotation(ann, self.class_filter) for ann in X]
