#!/usr/bin/env python3
"""
Tests for the confusion-matrix IoU.

Usage:
    python scripts/test_evaluation.py
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np

from app.core.exceptions import ShapeMismatchError
from app.services.evaluation import SegMetric, score_predictions


def _iou_oracle(preds, labels, num_classes):
    ious = []
    for c in range(num_classes):
        inter = sum(int(np.sum((p == c) & (y == c))) for p, y in zip(preds, labels))
        union = sum(int(np.sum((p == c) | (y == c))) for p, y in zip(preds, labels))
        ious.append(inter / union if union else None)
    return ious


def test_perfect_prediction():
    labels = [np.array([[0, 1], [2, 2]]), np.array([[1, 1], [0, 2]])]
    result = score_predictions(labels, labels, num_classes=3)
    assert result.miou == 1.0 and result.pixel_accuracy == 1.0
    assert result.num_images == 2


def test_constant_prediction_on_two_balanced_classes():
    labels = [np.array([[0, 0], [1, 1]])]
    preds = [np.zeros((2, 2), dtype=int)]
    result = score_predictions(preds, labels, num_classes=2)
    assert result.per_class_iou == [0.5, 0.0]
    assert result.miou == 0.25
    assert result.pixel_accuracy == 0.5


def test_absent_class_is_left_out_of_the_mean():
    labels = [np.array([[0, 1]])]
    result = score_predictions(labels, labels, num_classes=4)
    assert result.per_class_iou == [1.0, 1.0, None, None]
    assert result.miou == 1.0


def test_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(50):
        num_classes = int(rng.integers(2, 6))
        labels = [rng.integers(0, num_classes, size=(5, 4)) for _ in range(3)]
        preds = [rng.integers(0, num_classes, size=(5, 4)) for _ in range(3)]
        result = score_predictions(preds, labels, num_classes)
        expected = _iou_oracle(preds, labels, num_classes)
        for got, want in zip(result.per_class_iou, expected):
            assert (got is None and want is None) or abs(got - want) < 1e-12
        present = [v for v in expected if v is not None]
        assert abs(result.miou - sum(present) / len(present)) < 1e-12


def test_shape_mismatch():
    metric = SegMetric(2)
    try:
        metric.add_batch(np.zeros((2, 2), dtype=int), np.zeros((2, 3), dtype=int))
    except ShapeMismatchError:
        pass
    else:
        raise AssertionError("expected ShapeMismatchError")


if __name__ == "__main__":
    from testkit import run_tests

    run_tests(dict(globals()))
