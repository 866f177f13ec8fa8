"""Probabilistic XOR recombination and the associated scalar losses.

The merge rule for two post-sigmoid grids is the probabilistic exclusive-or

    merge(p, q) = p + q - 2*p*q

which reduces to logical XOR on hard 0/1 inputs, stays inside ``[0, 1]``, is
symmetric and differentiable, and suppresses pixels both branches claim
(``merge(1, 1) == 0``).  Thresholding the merge at 0.5 is equivalent to
XOR-ing the individually thresholded inputs wherever neither input is
exactly 0.5, since ``merge - 0.5 == -2*(p - 0.5)*(q - 0.5)``.

All cross-entropy computations clamp predictions to ``[EPS, 1 - EPS]`` with
``EPS = 1e-7`` before taking logs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import InvalidInputError
from .masks import binarize
from .validation import check_bit_mask, check_non_negative, check_prob_grid, check_same_shape

EPS = 1e-7


@dataclass(frozen=True)
class LossWeights:
    """Trade-off weights for the decomposition, refinement and consistency terms."""

    lambda_dec: float = 1.0
    lambda_rmask: float = 1.0
    lambda_cons: float = 1.0

    def __post_init__(self):
        for name in ("lambda_dec", "lambda_rmask", "lambda_cons"):
            check_non_negative(getattr(self, name), name)


@dataclass(frozen=True)
class CoarseLoss:
    """Box-regression, classification and coarse-mask terms of the base detector."""

    reg: float = 0.0
    cls: float = 0.0
    cmask: float = 0.0

    def __post_init__(self):
        for name in ("reg", "cls", "cmask"):
            check_non_negative(getattr(self, name), name)

    @property
    def total(self) -> float:
        return self.reg + self.cls + self.cmask


@dataclass(frozen=True)
class LossBreakdown:
    """All loss terms plus the weighted total (see :func:`total_loss`)."""

    coarse: CoarseLoss
    dec: float
    rmask: float
    cons: float
    total: float

    def as_dict(self) -> dict:
        return {
            "coarse": {"reg": self.coarse.reg, "cls": self.coarse.cls, "cmask": self.coarse.cmask},
            "dec": self.dec,
            "rmask": self.rmask,
            "cons": self.cons,
            "total": self.total,
        }


def soft_xor_merge(p_o: np.ndarray, p_m: np.ndarray) -> np.ndarray:
    """Merge intersection/complement probability grids: ``p + q - 2pq`` per pixel."""
    p_o = check_prob_grid(p_o, "p_o")
    p_m = check_prob_grid(p_m, "p_m")
    check_same_shape(p_o, p_m, "probability grids")
    return p_o + p_m - 2.0 * p_o * p_m


def recombine_instance(p_o: np.ndarray, p_m: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Binarized XOR merge: the inference-side recombined instance mask."""
    return binarize(soft_xor_merge(p_o, p_m), threshold)


def pixel_ce(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean pixel-wise binary cross-entropy of a grid against a binary mask.

    Also serves as the per-class classification CE when applied to a 1x1
    grid holding a single class score.
    """
    pred = check_prob_grid(pred, "pred")
    target = check_bit_mask(target, "target")
    check_same_shape(pred, target, "pred/target")
    p = np.clip(pred, EPS, 1.0 - EPS)
    t = target.astype(np.float64)
    return float(np.mean(-(t * np.log(p) + (1.0 - t) * np.log(1.0 - p))))


def consistency_loss(refined: np.ndarray, p_o: np.ndarray, p_m: np.ndarray) -> float:
    """Cross-entropy of the refined grid against the XOR merge as a soft target.

    The merged grid is used as-is (no thresholding), so agreement gradients
    reach both branches; only the prediction side is clamped.
    """
    refined = check_prob_grid(refined, "refined")
    q = soft_xor_merge(p_o, p_m)
    check_same_shape(refined, q, "refined/merged")
    p = np.clip(refined, EPS, 1.0 - EPS)
    return float(np.mean(-(q * np.log(p) + (1.0 - q) * np.log(1.0 - p))))


def smooth_l1(pred, target) -> float:
    """Smooth-L1 box regression loss, summed over coordinates.

    Per coordinate: ``0.5*d**2`` for ``|d| < 1`` else ``|d| - 0.5``; the two
    pieces meet at ``|d| = 1`` with matching value and slope.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise InvalidInputError(f"pred/target shapes differ: {pred.shape} vs {target.shape}")
    if not (np.isfinite(pred).all() and np.isfinite(target).all()):
        raise InvalidInputError("smooth_l1 inputs must be finite")
    d = np.abs(pred - target)
    per_coord = np.where(d < 1.0, 0.5 * d * d, d - 0.5)
    return float(per_coord.sum())


def total_loss(
    coarse: CoarseLoss,
    dec: float,
    rmask: float,
    cons: float,
    weights: LossWeights = LossWeights(),
) -> LossBreakdown:
    """Combine the loss terms into the weighted training objective.

    ``total = coarse.total + lambda_dec*dec + lambda_rmask*rmask +
    lambda_cons*cons``; the total is linear in each weight.
    """
    dec = check_non_negative(dec, "dec")
    rmask = check_non_negative(rmask, "rmask")
    cons = check_non_negative(cons, "cons")
    total = (
        coarse.total
        + weights.lambda_dec * dec
        + weights.lambda_rmask * rmask
        + weights.lambda_cons * cons
    )
    return LossBreakdown(coarse=coarse, dec=dec, rmask=rmask, cons=cons, total=total)


class XorRecombiner(BaseEstimator, TransformerMixin):
    """Stateless transformer merging (intersection, complement) grid pairs.

    ``transform`` returns the merged probability grids; ``predict`` applies
    the binarization threshold on top, yielding instance masks.

    Parameters
    ----------
    threshold : float, default=0.5
        Strict binarization threshold used by :meth:`predict`.
    """

    def __init__(self, threshold: float = 0.5):
        self.threshold = threshold

    def fit(self, X, y=None):
        return self

    def transform(self, X) -> list[np.ndarray]:
        """Merge a sequence of ``(p_o, p_m)`` grid pairs."""
        return [soft_xor_merge(p_o, p_m) for p_o, p_m in X]

    def predict(self, X) -> list[np.ndarray]:
        """Merge and binarize a sequence of ``(p_o, p_m)`` grid pairs."""
        return [recombine_instance(p_o, p_m, self.threshold) for p_o, p_m in X]
