"""Training objectives: segmentation, vision-language regularization, total."""

from dataclasses import dataclass

import numpy as np

from .exceptions import ParameterError, ShapeError
from .tensor_core import softmax_with_temperature
from .validation import as_matrix, as_vector

BCE_CLAMP = 1e-7


@dataclass(frozen=True)
class LossWeights:
    lambda_cls: float = 2.0
    lambda_bce: float = 5.0
    lambda_dice: float = 5.0
    lambda_1: float = 1.0
    lambda_2: float = 1.0
    lambda_3: float = 1.0

    def __post_init__(self):
        for name, value in vars(self).items():
            if not value >= 0:
                raise ParameterError(f"{name} must be nonnegative, got {value!r}")

    def scaled(self, factor):
        return LossWeights(**{k: v * factor for k, v in vars(self).items()})


def _pair(pred, target):
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeError(f"prediction shape {p.shape} != target shape {t.shape}")
    return p, t


def bce_loss(pred, target):
    """Mean binary cross-entropy; predictions are clamped to [1e-7, 1 - 1e-7]."""
    p, t = _pair(pred, target)
    p = np.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
    return float(np.mean(-(t * np.log(p) + (1.0 - t) * np.log(1.0 - p))))


def bce_grad(pred, target):
    """Gradient of :func:`bce_loss` w.r.t. the (unclamped interior) predictions."""
    p, t = _pair(pred, target)
    p = np.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
    return (p - t) / (p * (1.0 - p)) / p.size


def dice_loss(pred, target, smooth=1.0):
    p, t = _pair(pred, target)
    if not smooth > 0:
        raise ParameterError("smooth must be positive")
    return float(1.0 - (2.0 * np.sum(p * t) + smooth) / (np.sum(p) + np.sum(t) + smooth))


def class_ce_loss(class_logits, labels):
    """Mean softmax cross-entropy of per-query class logits."""
    logits = as_matrix(class_logits, "class_logits")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (logits.shape[0],):
        raise ShapeError(f"{labels.size} labels for {logits.shape[0]} queries")
    probs = softmax_with_temperature(logits, 1.0)
    return float(-np.mean(np.log(probs[np.arange(labels.size), labels])))


@dataclass(frozen=True)
class LayerPrediction:
    """Output of one decoder layer: per-query soft masks and class logits."""

    masks: np.ndarray
    class_logits: np.ndarray = None


def layer_loss(prediction, target_masks, target_labels=None, weights=None):
    weights = weights or LossWeights()
    masks = np.asarray(prediction.masks, dtype=np.float64)
    ce = 0.0
    if prediction.class_logits is not None:
        ce = class_ce_loss(prediction.class_logits, target_labels)
    bce = bce_loss(masks, target_masks)
    if masks.ndim == 3:
        dice = float(np.mean([dice_loss(m, t) for m, t in zip(masks, np.asarray(target_masks))]))
    else:
        dice = dice_loss(masks, target_masks)
    return weights.lambda_cls * ce + weights.lambda_bce * bce + weights.lambda_dice * dice


def seg_loss(predictions, target_masks, target_labels=None, weights=None):
    """Deep-supervision loss summed over every decoder layer's prediction."""
    predictions = list(predictions)
    if not predictions:
        raise ParameterError("seg_loss needs at least one layer")
    return float(sum(layer_loss(p, target_masks, target_labels, weights) for p in predictions))


def vl_regularization(cls_img, cls_frozen, anchor, anchor_frozen):
    """Squared CLS drift plus anchor cross-entropy against the frozen anchors.

    Both anchor matrices are softmax-normalized row-wise; the cross-entropy
    uses the frozen rows as the target distribution and is averaged over
    classes.
    """
    a = as_vector(cls_img, "cls_img")
    b = as_vector(cls_frozen, "cls_frozen")
    if a.shape != b.shape:
        raise ShapeError("CLS embeddings differ in dimension")
    live = as_matrix(anchor, "anchor")
    frozen = as_matrix(anchor_frozen, "anchor_frozen")
    if live.shape != frozen.shape:
        raise ShapeError(f"anchor shapes differ: {live.shape} vs {frozen.shape}")
    v2v = float(np.sum((a - b) ** 2))
    target = softmax_with_temperature(frozen, 1.0)
    z = live - live.max(axis=1, keepdims=True)
    log_q = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    l2l = float(np.mean(-np.sum(target * log_q, axis=1)))
    return v2v + l2l


def total_loss(seg, reg, scene_cls, weights=None):
    weights = weights or LossWeights()
    return weights.lambda_1 * seg + weights.lambda_2 * reg + weights.lambda_3 * scene_cls
