"""Image-level attention from instance predictions, and feature reweighting.

Per-instance probability grids are mapped back into their boxes, summed in
the logit domain, and squashed with a sigmoid.  Summing logits (rather than
probabilities) keeps the accumulator unbounded-but-finite, so stacked
confident predictions reinforce each other while uncovered pixels stay at
the sigmoid(0) = 0.5 baseline.  Probabilities are clamped to
``[1e-6, 1 - 1e-6]`` before the logit, bounding each contribution to about
+/-13.8.

The resulting attention map reweights a ``(channels, height, width)``
feature grid elementwise (broadcast over channels), suppressing responses
outside predicted foreground.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import InvalidInputError
from .masks import BBox, paste, resize_nearest
from .validation import check_feature_grid, check_prob_grid

LOGIT_EPS = 1e-6


def sigmoid(x) -> np.ndarray:
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def logit(p, eps: float = LOGIT_EPS) -> np.ndarray:
    """Inverse sigmoid with probabilities clamped to ``[eps, 1 - eps]``."""
    p = np.clip(np.asarray(p, dtype=np.float64), eps, 1.0 - eps)
    return np.log(p / (1.0 - p))


def aggregate_attention(preds, width: int, height: int) -> np.ndarray:
    """Fuse per-instance predictions into one ``(height, width)`` attention map.

    ``preds`` is an iterable of ``(grid, box)`` or ``(grid, box, score)``
    tuples; scores are carried by prediction records but do not enter the
    sum, which is order-independent.  Each grid is nearest-neighbor resampled
    to its box, converted to logits, and accumulated; the map is the sigmoid
    of the accumulator, so pixels no box covers sit at exactly 0.5.
    """
    if width <= 0 or height <= 0:
        raise InvalidInputError("attention map dimensions must be positive")
    acc = np.zeros((height, width), dtype=np.float64)
    for pred in preds:
        grid, box = pred[0], pred[1]
        grid = check_prob_grid(grid, "prediction grid")
        if not isinstance(box, BBox):
            box = BBox.from_list(box)
        acc = paste(logit(grid), acc, box, mode="sum")
    return sigmoid(acc)


def reweight(features: np.ndarray, attention: np.ndarray) -> np.ndarray:
    """Scale a feature grid by the attention map, elementwise per channel.

    The attention map is nearest-neighbor resampled to the feature
    resolution first, then broadcast over channels; signs are preserved and
    magnitudes shrink wherever attention < 1.
    """
    features = check_feature_grid(features)
    attention = np.asarray(attention, dtype=np.float64)
    if attention.ndim != 2:
        raise InvalidInputError("attention map must be 2-D")
    _, h, w = features.shape
    attn = resize_nearest(attention, h, w)
    return features * attn[np.newaxis, :, :]


class AttentionReweighter(BaseEstimator, TransformerMixin):
    """Fit an attention map from instance predictions, then reweight features.

    ``fit`` aggregates the predictions into ``attention_map_``; ``transform``
    applies it to one or more feature grids.

    Parameters
    ----------
    width, height : int
        Image-space size of the attention map.
    """

    def __init__(self, width: int = 0, height: int = 0):
        self.width = width
        self.height = height

    def fit(self, X, y=None):
        """Aggregate ``(grid, box[, score])`` prediction tuples."""
        self.attention_map_ = aggregate_attention(X, self.width, self.height)
        return self

    def transform(self, X) -> list[np.ndarray]:
        """Reweight a sequence of ``(channels, height, width)`` feature grids."""
        if not hasattr(self, "attention_map_"):
            raise InvalidInputError("AttentionReweighter must be fitted before transform")
        return [reweight(f, self.attention_map_) for f in X]
