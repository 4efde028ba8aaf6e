"""
Evaluation Service

Confusion-matrix IoU for segmentation predictions.
"""

import logging
from typing import List, Optional, Sequence

import numpy as np

from app.core.exceptions import ShapeMismatchError
from app.models.segmodel import AnyModel
from app.schemas.dataset import LoadedSplit
from app.schemas.training import EvalResult

logger = logging.getLogger(__name__)


class SegMetric:
    """
    Accumulates an (n_class x n_class) confusion matrix; rows are labels,
    columns predictions.
    """

    def __init__(self, n_class: int):
        self.n_class = n_class
        self.confusion_matrix = np.zeros((n_class, n_class), dtype=np.int64)

    def generate_confusion_matrix(self, preds: np.ndarray, labels: np.ndarray) -> np.ndarray:
        index = (labels >= 0) & (labels < self.n_class)
        mask = self.n_class * labels[index].astype(np.int64) + preds[index].astype(np.int64)
        count = np.bincount(mask, minlength=self.n_class ** 2)
        return count.reshape(self.n_class, self.n_class)

    def add_batch(self, preds: np.ndarray, labels: np.ndarray) -> None:
        if preds.shape != labels.shape:
            raise ShapeMismatchError("prediction", labels.shape, preds.shape)
        self.confusion_matrix += self.generate_confusion_matrix(preds, labels)

    def pixel_accuracy(self) -> float:
        total = self.confusion_matrix.sum()
        return float(np.diag(self.confusion_matrix).sum() / total) if total else 0.0

    def iou(self) -> List[Optional[float]]:
        """Per-class IoU; None for classes absent from both labels and predictions."""
        intersection = np.diag(self.confusion_matrix)
        union = self.confusion_matrix.sum(axis=1) + self.confusion_matrix.sum(axis=0) - intersection
        return [float(i / u) if u > 0 else None for i, u in zip(intersection, union)]

    def result(self, num_images: int) -> EvalResult:
        per_class = self.iou()
        present = [v for v in per_class if v is not None]
        miou = float(np.mean(present)) if present else 0.0
        return EvalResult(
            per_class_iou=per_class,
            miou=miou,
            pixel_accuracy=self.pixel_accuracy(),
            num_images=num_images,
        )


def score_predictions(
    predictions: Sequence[np.ndarray],
    labels: Sequence[np.ndarray],
    num_classes: int,
) -> EvalResult:
    if len(predictions) != len(labels):
        raise ValueError(f"{len(predictions)} predictions for {len(labels)} label maps")
    metric = SegMetric(num_classes)
    for pred, label in zip(predictions, labels):
        metric.add_batch(np.asarray(pred), np.asarray(label))
    return metric.result(len(labels))


def evaluate(model: AnyModel, split: LoadedSplit) -> EvalResult:
    """Predict every image of a labelled split and score it."""
    if split.labels is None:
        raise ValueError(f"split '{split.manifest.split.value}' carries no labels to evaluate against")
    predictions = [model.predict(image.to_unit())[0] for image in split.images]
    result = score_predictions(predictions, split.labels, model.config.num_classes)
    logger.info(f"Evaluated {result.num_images} images: mIoU={result.miou:.4f}, acc={result.pixel_accuracy:.4f}")
    return result
