"""
Regularizer Service

Category centers, per-category pseudo-label thresholds, the
category-oriented triplet loss, and the target consistency loss. Losses
return (value, gradient) pairs; centers are constants and receive no
gradient.
"""

import logging
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from app.core.exceptions import (
    DegenerateCategoryError,
    MissingCenterError,
    ShapeMismatchError,
)
from app.models.segmodel import FrozenSegModel
from app.schemas.image import RgbImage
from app.schemas.regularizers import CategoryCenters, PseudoLabelSet, ThresholdConfig, TripletConfig
from app.tensorcore.kernels import (
    cross_entropy_backward,
    cross_entropy_forward,
    l2_normalize_rows,
    l2_normalize_rows_backward,
)
from app.utils.enums import NegativeMode
from app.utils.helpers import nearest_rank_percentile

logger = logging.getLogger(__name__)

# pixels whose hinge argument lies within this band of zero are skipped by
# gradient checks; the loss itself treats them normally
HINGE_EPS = 1e-6


# ----------------------------------------------------
# Category centers
# ----------------------------------------------------
def compute_centers(
    feature_batches: Iterable[Tuple[np.ndarray, np.ndarray]],
    num_categories: int,
) -> CategoryCenters:
    """
    L2-normalized mean feature of every category over all given pixels.

    Args:
        feature_batches: (features (..., F), labels (...)) pairs; labels are
            source ground truth. Labels outside [0, C) are ignored.
        num_categories: C

    Raises:
        DegenerateCategoryError: a category's mean feature has zero norm
    """
    sums = None
    counts = np.zeros(num_categories, dtype=np.int64)
    for features, labels in feature_batches:
        features = np.asarray(features, dtype=np.float64)
        labels = np.asarray(labels)
        if features.shape[:-1] != labels.shape:
            raise ShapeMismatchError("center labels", features.shape[:-1], labels.shape)
        flat_f = features.reshape(-1, features.shape[-1])
        flat_y = labels.reshape(-1)
        keep = (flat_y >= 0) & (flat_y < num_categories)
        if sums is None:
            sums = np.zeros((num_categories, flat_f.shape[1]), dtype=np.float64)
        elif sums.shape[1] != flat_f.shape[1]:
            raise ShapeMismatchError("center features", (sums.shape[1],), (flat_f.shape[1],))
        np.add.at(sums, flat_y[keep], flat_f[keep])
        counts += np.bincount(flat_y[keep], minlength=num_categories)

    if sums is None:
        raise ValueError("compute_centers needs at least one feature batch")

    centers = np.zeros_like(sums)
    for c in range(num_categories):
        if counts[c] == 0:
            logger.debug(f"Category {c} has no source pixels; center marked absent")
            continue
        mean = sums[c] / counts[c]
        norm = np.linalg.norm(mean)
        if norm == 0.0:
            raise DegenerateCategoryError(c)
        centers[c] = mean / norm
    return CategoryCenters(centers=centers, pixel_counts=counts)


# ----------------------------------------------------
# Pseudo-label thresholds
# ----------------------------------------------------
def compute_thresholds(confidences_by_category: Sequence[np.ndarray], cfg: ThresholdConfig) -> np.ndarray:
    """
    t_c = min(P_h, P_{s,c}) where P_{s,c} is the nearest-rank (100 - p)-th
    percentile of category c's confidences. Empty categories get P_h.
    """
    thresholds = np.empty(len(confidences_by_category), dtype=np.float64)
    for c, values in enumerate(confidences_by_category):
        values = np.asarray(values, dtype=np.float64).ravel()
        if values.size == 0:
            thresholds[c] = cfg.P_h
            continue
        thresholds[c] = min(cfg.P_h, nearest_rank_percentile(values, 100.0 - cfg.p))
    return thresholds


def generate_pseudo_labels(
    model: FrozenSegModel,
    target_images: Sequence[RgbImage],
    cfg: ThresholdConfig,
) -> PseudoLabelSet:
    """
    Predict every (non-augmented) target image with the previous model and
    keep the pixels whose confidence reaches their category's threshold.

    Returns:
        a stacked (N, H, W) PseudoLabelSet; thresholds span the whole set
    """
    if not isinstance(model, FrozenSegModel):
        raise TypeError("pseudo labels must come from a frozen snapshot of the previous model")
    if not target_images:
        raise ValueError("generate_pseudo_labels needs at least one target image")

    labels, confidence = [], []
    for image in target_images:
        y, conf = model.predict(image.to_unit())
        labels.append(y)
        confidence.append(conf)
    shapes = {y.shape for y in labels}
    if len(shapes) != 1:
        raise ValueError(f"target images must share one size, found {sorted(shapes)}")

    labels_arr = np.stack(labels)
    conf_arr = np.stack(confidence)
    num_classes = model.config.num_classes
    by_category = [conf_arr[labels_arr == c] for c in range(num_classes)]
    thresholds = compute_thresholds(by_category, cfg)
    valid = conf_arr >= thresholds[labels_arr]

    logger.info(
        f"Pseudo labels for {len(target_images)} images: thresholds="
        f"{[round(float(t), 4) for t in thresholds]}, valid={valid.mean():.3f}"
    )
    return PseudoLabelSet(labels=labels_arr, confidence=conf_arr, thresholds=thresholds, valid=valid)


# ----------------------------------------------------
# Category-oriented triplet loss
# ----------------------------------------------------
def _pairwise_distances(normalized: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = normalized[:, None, :] - centers[None, :, :]
    return np.sqrt(np.einsum("pcf,pcf->pc", diff, diff))


def triplet_loss(
    features: np.ndarray,
    labels: np.ndarray,
    centers: CategoryCenters,
    cfg: TripletConfig,
    ignore_mask: np.ndarray = None,
) -> Tuple[float, np.ndarray, int]:
    """
    Hinge max(d_pos - d_neg + margin, 0) on L2-normalized pixel features.

    d_pos is the distance to the pixel's own category center. In hardest
    mode d_neg is the nearest other present center; in all mode the hinge
    is summed over every other present center. The loss is the mean over
    contributing pixels: labelled, not ignored, non-zero feature, and at
    least one other present center.

    Args:
        features: (..., F) pixel features
        labels: (...) categories
        centers: constants; no gradient flows into them
        ignore_mask: optional (...) bool, True where the pixel is skipped

    Returns:
        (loss, gradient w.r.t. features, contributing pixel count)

    Raises:
        MissingCenterError: a contributing label has no center
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if features.shape[:-1] != labels.shape:
        raise ShapeMismatchError("triplet labels", features.shape[:-1], labels.shape)
    if features.shape[-1] != centers.centers.shape[1]:
        raise ShapeMismatchError("triplet features", (centers.centers.shape[1],), (features.shape[-1],))

    flat_f = features.reshape(-1, features.shape[-1])
    flat_y = labels.reshape(-1)
    grad = np.zeros_like(flat_f)

    eligible = (flat_y >= 0) & (flat_y < centers.num_categories)
    if ignore_mask is not None:
        eligible &= ~np.asarray(ignore_mask, dtype=bool).reshape(-1)
    missing = np.unique(flat_y[eligible][~centers.present[flat_y[eligible]]])
    if missing.size:
        raise MissingCenterError(int(missing[0]))
    # a pixel needs a negative to compare against
    if centers.present.sum() < 2:
        eligible &= False
    # all-zero (dead ReLU) features have no direction
    eligible &= np.any(flat_f != 0.0, axis=1)

    rows = np.flatnonzero(eligible)
    if rows.size == 0:
        return 0.0, grad.reshape(features.shape), 0

    normalized, norms = l2_normalize_rows(flat_f[rows])
    y = flat_y[rows]
    dist = _pairwise_distances(normalized, centers.centers)
    d_pos = dist[np.arange(rows.size), y]

    negative = centers.present[None, :].repeat(rows.size, axis=0)
    negative[np.arange(rows.size), y] = False
    margin = cfg.margin

    # coefficient of each center's unit direction (g - f_c)/|g - f_c| in dL/dg
    coeff = np.zeros_like(dist)
    if cfg.negative_mode == NegativeMode.HARDEST:
        neg_dist = np.where(negative, dist, np.inf)
        hardest = np.argmin(neg_dist, axis=1)
        hinge = d_pos - neg_dist[np.arange(rows.size), hardest] + margin
        active = hinge > 0.0
        per_pixel = np.where(active, hinge, 0.0)
        coeff[np.arange(rows.size), y] += active
        coeff[np.arange(rows.size), hardest] -= active
    else:
        hinge = d_pos[:, None] - dist + margin
        active = (hinge > 0.0) & negative
        per_pixel = np.where(active, hinge, 0.0).sum(axis=1)
        coeff -= active
        coeff[np.arange(rows.size), y] += active.sum(axis=1)

    count = rows.size
    loss = float(per_pixel.sum() / count)

    diff = normalized[:, None, :] - centers.centers[None, :, :]
    safe = np.where(dist > 0.0, dist, 1.0)
    directions = diff / safe[..., None] * (dist > 0.0)[..., None]
    grad_normalized = np.einsum("pc,pcf->pf", coeff, directions) / count
    grad[rows] = l2_normalize_rows_backward(grad_normalized, normalized, norms)
    return loss, grad.reshape(features.shape), count


def hinge_margins(features: np.ndarray, labels: np.ndarray, centers: CategoryCenters, cfg: TripletConfig) -> np.ndarray:
    """Per-pixel hinge arguments d_pos - d_neg + margin (all negatives), for gradient-check exclusion bands."""
    flat_f = np.asarray(features, dtype=np.float64).reshape(-1, features.shape[-1])
    flat_y = np.asarray(labels).reshape(-1)
    normalized, _ = l2_normalize_rows(flat_f)
    dist = _pairwise_distances(normalized, centers.centers)
    d_pos = dist[np.arange(flat_y.size), flat_y]
    return d_pos[:, None] - dist + cfg.margin


# ----------------------------------------------------
# Target consistency loss
# ----------------------------------------------------
def consistency_loss(pseudo: PseudoLabelSet, logits_on_jittered: np.ndarray) -> Tuple[float, np.ndarray, int]:
    """
    Cross-entropy between the hard pseudo labels (from the previous model on
    the clean image) and the current model's prediction on the jittered
    image, restricted to valid pixels.

    Returns:
        (loss, gradient w.r.t. logits, valid pixel count); zero loss and
        gradient when no pixel is valid
    """
    if pseudo.labels.ndim != 2:
        raise ValueError("consistency_loss takes the pseudo labels of a single image")
    if logits_on_jittered.shape[:-1] != pseudo.labels.shape:
        raise ShapeMismatchError("consistency logits", pseudo.labels.shape, logits_on_jittered.shape[:-1])
    result = cross_entropy_forward(logits_on_jittered, pseudo.labels, ignore_mask=~pseudo.valid)
    return result.loss, cross_entropy_backward(result), result.count


def center_distance_matrix(centers: CategoryCenters) -> List[List[float]]:
    """Pairwise distances between present centers (NaN rows for absent ones); logged per step."""
    dist = np.linalg.norm(centers.centers[:, None, :] - centers.centers[None, :, :], axis=-1)
    absent = ~centers.present
    dist[absent, :] = np.nan
    dist[:, absent] = np.nan
    return dist.tolist()
