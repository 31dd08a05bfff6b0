"""Two-branch optimal-transport fusion and the cosine mask head."""

from dataclasses import dataclass

import numpy as np

from .exceptions import DataError, DegenerateTargetError, ParameterError, ShapeError
from .transport import SinkhornConfig, barycentric_project, build_cost_matrix, sinkhorn
from .validation import as_feature_map, as_matrix

DEFAULT_LAMBDA = 0.5
DEFAULT_EPS_NORM = 1e-8
DEFAULT_THRESHOLD = 0.5
PROB_ATOL = 1e-6


@dataclass(frozen=True)
class TraversabilityMask:
    soft: np.ndarray
    threshold: float = DEFAULT_THRESHOLD

    @property
    def binary(self):
        return self.soft >= self.threshold

    @property
    def shape(self):
        return self.soft.shape


def check_preseg_probs(probs, name="probs"):
    """Validate per-class probability maps of shape ``(K, H, W)``."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 3:
        raise ShapeError(f"{name} must have shape (K, H, W), got {p.shape}")
    if p.shape[1] * p.shape[2] == 0:
        raise DegenerateTargetError(f"{name} covers no pixels, so every class aggregate is zero")
    if not np.all(np.isfinite(p)) or p.min() < 0 or p.max() > 1:
        raise DataError(f"{name} must contain probabilities in [0, 1]")
    if np.abs(p.sum(axis=0) - 1.0).max() > PROB_ATOL:
        raise DataError(f"{name}: class probabilities do not sum to 1 at every pixel")
    return p


def build_source(features):
    """Uniform source masses over the pixel grid and the row-major feature rows."""
    fmap = as_feature_map(features, "features")
    h, w, c = fmap.shape
    n = h * w
    return np.full(n, 1.0 / n), fmap.reshape(n, c)


def build_target(probs_img, probs_normal, pooling="aggregate"):
    """Target masses over the K anchors from both branches' class probabilities.

    With ``pooling="aggregate"`` each class map is first reduced to its spatial
    mean and the two branches are then max-pooled per class; ``"pixel"`` takes
    the per-pixel max first and averages afterwards. Masses are normalized to
    sum to one.
    """
    p_img = check_preseg_probs(probs_img, "probs_img")
    p_nrm = check_preseg_probs(probs_normal, "probs_normal")
    if p_img.shape != p_nrm.shape:
        raise ShapeError(f"pre-segmentation shapes differ: {p_img.shape} vs {p_nrm.shape}")
    if pooling == "aggregate":
        pooled = np.maximum(p_img.mean(axis=(1, 2)), p_nrm.mean(axis=(1, 2)))
    elif pooling == "pixel":
        pooled = np.maximum(p_img, p_nrm).mean(axis=(1, 2))
    else:
        raise ParameterError(f"unknown pooling {pooling!r}")
    total = pooled.sum()
    if total <= 0:
        raise DegenerateTargetError("all class aggregates are zero")
    return pooled / total


def fusion_weights(lam):
    """Branch weights ``(lam, 1 - lam)`` computed so they are exactly
    complementary in floating point and swapping branches with ``1 - lam``
    reproduces the same pair in reverse."""
    lam = float(lam)
    if not 0.0 <= lam <= 1.0:
        raise ParameterError(f"fusion weight must lie in [0, 1], got {lam!r}")
    if lam >= 0.5:
        return lam, 1.0 - lam
    other = 1.0 - lam
    return 1.0 - other, other


@dataclass(frozen=True)
class FusionResult:
    fused: np.ndarray
    projected_img: np.ndarray
    projected_normal: np.ndarray
    plan_img: object
    plan_normal: object
    target: np.ndarray


def fuse(
    features_img,
    features_normal,
    probs_img,
    probs_normal,
    anchors,
    lam=DEFAULT_LAMBDA,
    config=None,
    projection="row-normalized",
    pooling="aggregate",
    return_details=False,
):
    """Transport both branches onto the anchors and blend the projections.

    Each branch's pixels form a uniform source distribution; both are solved
    against the same target masses and anchors. The fused map is
    ``lam * projected_img + (1 - lam) * projected_normal`` with shape
    ``(H, W, C)``.
    """
    config = config or SinkhornConfig()
    f_img = as_feature_map(features_img, "features_img")
    f_nrm = as_feature_map(features_normal, "features_normal")
    if f_img.shape != f_nrm.shape:
        raise ShapeError(f"branch feature maps differ: {f_img.shape} vs {f_nrm.shape}")
    anchors = as_matrix(anchors, "anchors")
    h, w, c = f_img.shape
    if anchors.shape[1] != c:
        raise ShapeError(f"anchor dimension {anchors.shape[1]} != feature channels {c}")
    nu = build_target(probs_img, probs_normal, pooling)
    if nu.size != anchors.shape[0]:
        raise ShapeError(f"{nu.size} classes in pre-segmentation, {anchors.shape[0]} anchors")
    if np.asarray(probs_img).shape[1:] != (h, w):
        raise ShapeError("pre-segmentation maps and feature maps have different spatial size")
    w_img, w_nrm = fusion_weights(lam)

    def branch(fmap):
        mu, rows = build_source(fmap)
        plan = sinkhorn(mu, nu, build_cost_matrix(rows, anchors), config)
        return plan, barycentric_project(plan, anchors, mode=projection)

    plan_img, proj_img = branch(f_img)
    plan_nrm, proj_nrm = branch(f_nrm)
    fused = (w_img * proj_img + w_nrm * proj_nrm).reshape(h, w, c)
    if return_details:
        return FusionResult(fused, proj_img.reshape(h, w, c), proj_nrm.reshape(h, w, c), plan_img, plan_nrm, nu)
    return fused


def init_queries(anchors, positional=None):
    """Initial class queries: anchors plus positional encodings."""
    anchors = as_matrix(anchors, "anchors")
    if positional is None:
        return anchors.copy()
    positional = as_matrix(positional, "positional")
    if positional.shape != anchors.shape:
        raise ShapeError(f"positional shape {positional.shape} != anchor shape {anchors.shape}")
    return anchors + positional


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def mask_logits(queries, mask_features, eps_norm=DEFAULT_EPS_NORM):
    """Cosine logits ``(Q_k . F_i) / (|Q_k| |F_i| + eps)`` of shape ``(K, H, W)``."""
    q = as_matrix(queries, "queries")
    fmap = as_feature_map(mask_features, "mask_features")
    if q.shape[1] != fmap.shape[2]:
        raise ShapeError(f"query dimension {q.shape[1]} != feature channels {fmap.shape[2]}")
    if not eps_norm > 0:
        raise ParameterError("eps_norm must be positive")
    dots = np.einsum("kc,hwc->khw", q, fmap)
    qn = np.linalg.norm(q, axis=1)
    fn = np.linalg.norm(fmap, axis=2)
    return dots / (qn[:, None, None] * fn[None, :, :] + eps_norm)


def predict_mask(queries, mask_features, eps_norm=DEFAULT_EPS_NORM, threshold=DEFAULT_THRESHOLD, refine=None):
    """One soft mask per query, ``sigmoid`` of the cosine logit.

    ``refine`` may be any callable mapping the query matrix to refined
    queries; by default queries are used unchanged.
    """
    q = as_matrix(queries, "queries")
    if refine is not None:
        q = as_matrix(refine(q), "refined queries")
    logits = mask_logits(q, mask_features, eps_norm)
    return [TraversabilityMask(sigmoid(lg), threshold) for lg in logits]
