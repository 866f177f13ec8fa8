"""Instance-segmentation evaluation: AJI, Dice, F1, mAP, TPp, FNo.

Every metric is deterministic down to the last bit.  Tie-breaks are fixed:
predictions are processed in descending score order (equal scores by list
index), a prediction claims the highest-IoU available ground-truth instance
(IoU ties by lowest index), and the aggregated Jaccard index consumes each
prediction at most once (ties by lowest index).  All final averages are
sequential reductions in a fixed order, never pairwise summations, so
independent re-implementations that follow the same rules agree exactly.

Object-level functions take lists of binary masks; ids in results are list
indices.  Dataset-level evaluation lives in :func:`evaluate_annotations`,
which pairs ground-truth and prediction annotations by ``image_id``,
averages per-image metrics per class, pools detections across images for
average precision (COCO protocol: IoU thresholds 0.50:0.05:0.95, 101-point
interpolated precision), and finally averages over classes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .annotations import ImageAnnotation
from .errors import CorruptDataError, InvalidInputError, UndefinedMetricError
from .masks import union_all
from .validation import check_bit_mask

# IoU thresholds 0.50, 0.55, ..., 0.95 built from integers to pin the floats.
DEFAULT_IOU_THRESHOLDS = tuple((50 + 5 * i) / 100 for i in range(10))
RECALL_GRID_POINTS = 101


@dataclass(frozen=True)
class MatchResult:
    """Greedy matching outcome; ids are list indices into the inputs."""

    pairs: list[tuple[int, int, float]]  # (gt index, pred index, IoU)
    unmatched_gt: list[int]
    unmatched_pred: list[int]


def _pair_stats(a: np.ndarray, b: np.ndarray) -> tuple[int, int]:
    inter = int(np.count_nonzero(a & b))
    union = int(np.count_nonzero(a)) + int(np.count_nonzero(b)) - inter
    return inter, union


def _check_masks(masks, name: str) -> list[np.ndarray]:
    return [check_bit_mask(m, f"{name}[{i}]") for i, m in enumerate(masks)]


def _score_order(n_pred: int, scores) -> list[int]:
    """Prediction indices in descending score order, ties by index."""
    if scores is None:
        return list(range(n_pred))
    scores = [float(s) for s in scores]
    if len(scores) != n_pred:
        raise InvalidInputError(f"got {len(scores)} scores for {n_pred} predictions")
    return sorted(range(n_pred), key=lambda i: (-scores[i], i))


def match_instances(gt, pred, scores=None, iou_threshold: float = 0.5) -> MatchResult:
    """Greedily match predictions to ground truth at an IoU threshold.

    Predictions are visited in descending score order; each takes the
    highest-IoU still-unmatched ground-truth instance with IoU >= threshold,
    ties going to the lowest ground-truth index.
    """
    gt = _check_masks(gt, "gt")
    pred = _check_masks(pred, "pred")
    taken = [False] * len(gt)
    pairs: list[tuple[int, int, float]] = []
    matched_pred = set()
    for p_idx in _score_order(len(pred), scores):
        best_iou, best_gt = 0.0, -1
        for g_idx, g in enumerate(gt):
            if taken[g_idx]:
                continue
            inter, union = _pair_stats(g, pred[p_idx])
            if union == 0:
                continue
            iou = inter / union
            if iou >= iou_threshold and iou > best_iou:
                best_iou, best_gt = iou, g_idx
        if best_gt >= 0:
            taken[best_gt] = True
            matched_pred.add(p_idx)
            pairs.append((best_gt, p_idx, best_iou))
    return MatchResult(
        pairs=pairs,
        unmatched_gt=[i for i, t in enumerate(taken) if not t],
        unmatched_pred=[i for i in range(len(pred)) if i not in matched_pred],
    )


def aji(gt, pred) -> float:
    """Aggregated Jaccard index over one scene.

    Ground-truth instances (in index order) each claim the unused prediction
    maximizing IoU (ties by lowest prediction index), adding the pair's
    intersection to the numerator and union to the denominator; ground truth
    with no overlapping unused prediction adds its own area to the
    denominator, as does every prediction left unused.
    """
    gt = _check_masks(gt, "gt")
    pred = _check_masks(pred, "pred")
    if not gt:
        raise UndefinedMetricError("AJI undefined: no ground-truth instances")
    used = [False] * len(pred)
    c_sum = 0
    u_sum = 0
    for g in gt:
        best_iou, best_p, best_inter, best_union = 0.0, -1, 0, 0
        for p_idx, p in enumerate(pred):
            if used[p_idx]:
                continue
            inter, union = _pair_stats(g, p)
            if inter == 0:
                continue
            iou = inter / union
            if iou > best_iou:
                best_iou, best_p, best_inter, best_union = iou, p_idx, inter, union
        if best_p >= 0:
            used[best_p] = True
            c_sum += best_inter
            u_sum += best_union
        else:
            u_sum += int(np.count_nonzero(g))
    for p_idx, p in enumerate(pred):
        if not used[p_idx]:
            u_sum += int(np.count_nonzero(p))
    if u_sum == 0:
        raise UndefinedMetricError("AJI undefined: all masks empty")
    return c_sum / u_sum


def average_dice(gt, pred) -> float:
    """Mean over ground-truth instances of the Dice with their best-IoU prediction.

    Each ground-truth instance independently picks the prediction maximizing
    IoU (ties by lowest index) and contributes ``2|g & p| / (|g| + |p|)``,
    or 0 when nothing overlaps it.
    """
    gt = _check_masks(gt, "gt")
    pred = _check_masks(pred, "pred")
    if not gt:
        raise UndefinedMetricError("average Dice undefined: no ground-truth instances")
    values: list[float] = []
    for g in gt:
        best_iou, best_dice = 0.0, 0.0
        for p in pred:
            inter, union = _pair_stats(g, p)
            if inter == 0:
                continue
            iou = inter / union
            if iou > best_iou:
                best_iou = iou
                best_dice = (2 * inter) / (int(np.count_nonzero(g)) + int(np.count_nonzero(p)))
        values.append(best_dice)
    return sum(values) / len(values)


def union_dice(gt, pred) -> float:
    """Dice of the class-union masks: ``2|G & P| / (|G| + |P|)``."""
    gt = _check_masks(gt, "gt")
    pred = _check_masks(pred, "pred")
    if not gt:
        raise UndefinedMetricError("union Dice undefined: no ground-truth instances")
    g = union_all(gt)
    p = union_all(pred, *g.shape)
    denom = int(np.count_nonzero(g)) + int(np.count_nonzero(p))
    if denom == 0:
        raise UndefinedMetricError("union Dice undefined: all masks empty")
    return (2 * int(np.count_nonzero(g & p))) / denom


def f1_score(gt, pred, scores=None, iou_threshold: float = 0.5) -> float:
    """Detection F1 from greedy matching counts; 0 when precision+recall is 0."""
    if len(gt) == 0 and len(pred) == 0:
        raise InvalidInputError("F1 needs at least one ground-truth or predicted instance")
    m = match_instances(gt, pred, scores, iou_threshold)
    tp = len(m.pairs)
    fp = len(m.unmatched_pred)
    fn = len(m.unmatched_gt)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0.0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def _ap_from_flags(tp_flags: list[bool], n_gt: int) -> float:
    """101-point interpolated AP from true-positive flags in score order."""
    if n_gt == 0:
        raise UndefinedMetricError("AP undefined: no ground-truth instances")
    if not tp_flags:
        return 0.0
    precisions: list[float] = []
    recalls: list[float] = []
    tp = 0
    for rank, flag in enumerate(tp_flags, start=1):
        tp += int(flag)
        precisions.append(tp / rank)
        recalls.append(tp / n_gt)
    # Monotone envelope from the right, then sample the recall grid.
    for i in range(len(precisions) - 2, -1, -1):
        precisions[i] = max(precisions[i], precisions[i + 1])
    grid = [k / (RECALL_GRID_POINTS - 1) for k in range(RECALL_GRID_POINTS)]
    sampled: list[float] = []
    for r in grid:
        idx = int(np.searchsorted(np.asarray(recalls), r, side="left"))
        sampled.append(precisions[idx] if idx < len(precisions) else 0.0)
    return sum(sampled) / len(sampled)


def _pooled_tp_flags(scenes, iou_threshold: float) -> tuple[list[bool], int]:
    """Match each scene, then pool flags in global (score, scene, index) order."""
    order: list[tuple[float, int, int]] = []
    matched: list[set[int]] = []
    n_gt = 0
    for scene_idx, (gt, pred, scores) in enumerate(scenes):
        if scores is None or len(scores) != len(pred):
            raise InvalidInputError("average precision requires a score per prediction")
        n_gt += len(gt)
        m = match_instances(gt, pred, scores, iou_threshold)
        matched.append({p for _, p, _ in m.pairs})
        for p_idx, s in enumerate(scores):
            order.append((float(s), scene_idx, p_idx))
    order.sort(key=lambda t: (-t[0], t[1], t[2]))
    return [p_idx in matched[scene_idx] for _, scene_idx, p_idx in order], n_gt


def pooled_average_precision(scenes, iou_thresholds=DEFAULT_IOU_THRESHOLDS) -> float:
    """COCO-style AP pooled over scenes and averaged over IoU thresholds.

    ``scenes`` is a sequence of ``(gt_masks, pred_masks, scores)`` triples.
    """
    scenes = [( _check_masks(g, "gt"), _check_masks(p, "pred"), s) for g, p, s in scenes]
    if sum(len(g) for g, _, _ in scenes) == 0:
        raise UndefinedMetricError("AP undefined: no ground-truth instances")
    aps: list[float] = []
    for t in iou_thresholds:
        flags, n_gt = _pooled_tp_flags(scenes, t)
        aps.append(_ap_from_flags(flags, n_gt))
    return sum(aps) / len(aps)


def average_precision(gt, pred, scores, iou_thresholds=DEFAULT_IOU_THRESHOLDS) -> float:
    """Single-scene convenience wrapper around :func:`pooled_average_precision`."""
    return pooled_average_precision([(gt, pred, scores)], iou_thresholds)


def tp_pixel(gt_union: np.ndarray, pred_union: np.ndarray) -> float:
    """Pixel-level true-positive rate on class-union masks: ``|G & P| / |G|``."""
    g = check_bit_mask(gt_union, "gt_union")
    p = check_bit_mask(pred_union, "pred_union")
    g_area = int(np.count_nonzero(g))
    if g_area == 0:
        raise UndefinedMetricError("TPp undefined: empty ground-truth union")
    return int(np.count_nonzero(g & p)) / g_area


def fn_object(gt, pred, dice_threshold: float = 0.7) -> float:
    """Object-level false-negative rate.

    A ground-truth instance counts as detected when some prediction reaches
    pairwise Dice >= ``dice_threshold`` with it.
    """
    gt = _check_masks(gt, "gt")
    pred = _check_masks(pred, "pred")
    if not gt:
        raise UndefinedMetricError("FNo undefined: no ground-truth instances")
    missed = 0
    for g in gt:
        g_area = int(np.count_nonzero(g))
        detected = False
        for p in pred:
            inter = int(np.count_nonzero(g & p))
            dice = (2 * inter) / (g_area + int(np.count_nonzero(p)))
            if dice >= dice_threshold:
                detected = True
                break
        missed += 0 if detected else 1
    return missed / len(gt)


# ---------------------------------------------------------------------------
# Dataset-level evaluation
# ---------------------------------------------------------------------------

METRIC_NAMES = ("map", "dice", "f1", "aji", "tpp", "fno")


@dataclass(frozen=True)
class MetricValues:
    """One row of the report; every value lies in [0, 1]."""

    map: float
    dice: float
    f1: float
    aji: float
    tpp: float
    fno: float

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in METRIC_NAMES}

    def as_percent_dict(self) -> dict:
        """Table-style rendering: map/dice/f1/aji scaled by 100, rates raw."""
        out = {name: getattr(self, name) * 100.0 for name in ("map", "dice", "f1", "aji")}
        out.update(tpp=self.tpp, fno=self.fno)
        return out


@dataclass(frozen=True)
class MetricsReport:
    per_class: dict[str, MetricValues]
    average: MetricValues

    def as_dict(self) -> dict:
        out = {name: values.as_dict() for name, values in self.per_class.items()}
        out["average"] = self.average.as_dict()
        return out


def _mean(values: list[float]) -> float:
    return sum(values) / len(values)


def evaluate_annotations(
    gt_annotations: list[ImageAnnotation],
    pred_annotations: list[ImageAnnotation],
    iou_threshold: float = 0.5,
    dice_threshold: float = 0.7,
    map_thresholds=DEFAULT_IOU_THRESHOLDS,
    dice_mode: str = "instance",
) -> MetricsReport:
    """Evaluate predictions against ground truth over a whole dataset.

    Images are paired by ``image_id``; a ground-truth image without
    predictions is evaluated against an empty set, while predictions for an
    unknown ``image_id`` raise.  Per class: AJI/Dice/TPp/FNo average over the
    images where the class has ground truth, F1 over images where the class
    appears at all, and AP pools detections across every image.  The
    ``average`` row is the unweighted mean over per-class values.

    ``dice_mode`` selects instance-averaged Dice (default) or ``"union"``
    for the class-union pixel Dice.
    """
    if dice_mode not in ("instance", "union"):
        raise InvalidInputError(f"dice_mode must be 'instance' or 'union', got {dice_mode!r}")
    gt_by_id: dict[str, ImageAnnotation] = {}
    for ann in gt_annotations:
        if ann.image_id in gt_by_id:
            raise CorruptDataError(f"duplicate ground-truth image_id {ann.image_id!r}")
        gt_by_id[ann.image_id] = ann
    pred_by_id: dict[str, ImageAnnotation] = {}
    for ann in pred_annotations:
        if ann.image_id not in gt_by_id:
            raise CorruptDataError(f"prediction references unknown image_id {ann.image_id!r}")
        if ann.image_id in pred_by_id:
            raise CorruptDataError(f"duplicate prediction image_id {ann.image_id!r}")
        pred_by_id[ann.image_id] = ann

    classes = sorted(
        {inst.cell_class for ann in gt_annotations for inst in ann.instances},
        key=lambda c: c.value,
    )
    if not classes:
        raise UndefinedMetricError("evaluation undefined: ground truth has no instances")

    image_ids = sorted(gt_by_id)
    per_class: dict[str, MetricValues] = {}
    for cls in classes:
        scenes = []
        for image_id in image_ids:
            gt_ann = gt_by_id[image_id]
            pred_ann = pred_by_id.get(image_id)
            gt_insts = gt_ann.of_class(cls)
            pred_insts = pred_ann.of_class(cls) if pred_ann is not None else []
            for inst in pred_insts:
                if inst.score is None:
                    raise InvalidInputError(
                        f"prediction {inst.id} on image {image_id!r} has no score"
                    )
                if inst.mask.shape != (gt_ann.height, gt_ann.width):
                    raise InvalidInputError(
                        f"prediction {inst.id} on image {image_id!r} has mismatched dimensions"
                    )
            scenes.append(
                (
                    [i.mask for i in gt_insts],
                    [i.mask for i in pred_insts],
                    [i.score for i in pred_insts],
                )
            )
        ap = pooled_average_precision(scenes, map_thresholds)
        dice_vals, f1_vals, aji_vals, tpp_vals, fno_vals = [], [], [], [], []
        for gt_masks, pred_masks, scores in scenes:
            if gt_masks:
                if dice_mode == "instance":
                    dice_vals.append(average_dice(gt_masks, pred_masks))
                else:
                    dice_vals.append(union_dice(gt_masks, pred_masks))
                aji_vals.append(aji(gt_masks, pred_masks))
                tpp_vals.append(
                    tp_pixel(union_all(gt_masks), union_all(pred_masks, *gt_masks[0].shape))
                )
                fno_vals.append(fn_object(gt_masks, pred_masks, dice_threshold))
            if gt_masks or pred_masks:
                f1_vals.append(f1_score(gt_masks, pred_masks, scores, iou_threshold))
        per_class[cls.value] = MetricValues(
            map=ap,
            dice=_mean(dice_vals),
            f1=_mean(f1_vals),
            aji=_mean(aji_vals),
            tpp=_mean(tpp_vals),
            fno=_mean(fno_vals),
        )

    rows = [per_class[c.value] for c in classes]
    average = MetricValues(
        **{name: _mean([getattr(r, name) for r in rows]) for name in METRIC_NAMES}
    )
    return MetricsReport(per_class=per_class, average=average)
