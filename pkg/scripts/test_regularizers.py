#!/usr/bin/env python3
"""
Tests for category centers, pseudo-label thresholds, the triplet loss, and
the consistency loss.

Usage:
    python scripts/test_regularizers.py
"""

import math
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np

from app.core.exceptions import DegenerateCategoryError, MissingCenterError
from app.models.segmodel import SegModel
from app.repositories.pseudo_labels import PseudoLabelRepository
from app.schemas.image import RgbImage
from app.schemas.model import ModelConfig
from app.schemas.regularizers import CategoryCenters, PseudoLabelSet, ThresholdConfig, TripletConfig
from app.services.regularizers import (
    center_distance_matrix,
    compute_centers,
    compute_thresholds,
    consistency_loss,
    generate_pseudo_labels,
    triplet_loss,
)
from app.tensorcore.kernels import cross_entropy_backward, cross_entropy_forward
from app.utils.enums import NegativeMode


def _unit_centers(rng, num_categories: int, dim: int, counts=None) -> CategoryCenters:
    raw = rng.normal(size=(num_categories, dim))
    counts = np.ones(num_categories, dtype=np.int64) if counts is None else np.asarray(counts)
    raw /= np.linalg.norm(raw, axis=1, keepdims=True)
    raw[counts == 0] = 0.0
    return CategoryCenters(centers=raw, pixel_counts=counts)


def _triplet_oracle(features, labels, centers, margin, mode):
    total, count = 0.0, 0
    present = [c for c in range(centers.shape[0]) if np.any(centers[c])]
    for g, y in zip(features, labels):
        g = g / np.linalg.norm(g)
        d_pos = np.linalg.norm(g - centers[y])
        negatives = [np.linalg.norm(g - centers[c]) for c in present if c != y]
        if mode == NegativeMode.HARDEST:
            total += max(d_pos - min(negatives) + margin, 0.0)
        else:
            total += sum(max(d_pos - d + margin, 0.0) for d in negatives)
        count += 1
    return total / count


# ----------------------------------------------------
# Centers
# ----------------------------------------------------
def test_centers_have_unit_norm_and_flag_absent_categories():
    rng = np.random.default_rng(0)
    features = rng.random((5, 5, 4)) + 0.1
    labels = rng.integers(0, 3, size=(5, 5))
    centers = compute_centers([(features, labels)], num_categories=4)
    assert np.allclose(np.linalg.norm(centers.centers[:3], axis=1), 1.0)
    assert list(centers.present) == [True, True, True, False]
    assert np.all(centers.centers[3] == 0.0)

    mean0 = features[labels == 0].mean(axis=0)
    assert np.allclose(centers.centers[0], mean0 / np.linalg.norm(mean0))


def test_centers_pool_over_batches():
    rng = np.random.default_rng(1)
    a, b = rng.random((3, 3, 2)), rng.random((2, 4, 2))
    la, lb = np.zeros((3, 3), dtype=int), np.zeros((2, 4), dtype=int)
    pooled = compute_centers([(a, la), (b, lb)], num_categories=1)
    mean = np.concatenate([a.reshape(-1, 2), b.reshape(-1, 2)]).mean(axis=0)
    assert np.allclose(pooled.centers[0], mean / np.linalg.norm(mean))
    assert pooled.pixel_counts[0] == 17


def test_centers_ignore_feature_scale():
    rng = np.random.default_rng(11)
    features = rng.normal(size=(6, 6, 5))
    labels = rng.integers(0, 4, size=(6, 6))
    base = compute_centers([(features, labels)], num_categories=4)
    for scale in (1e-3, 0.5, 7.0, 1e4):
        scaled = compute_centers([(features * scale, labels)], num_categories=4)
        assert np.allclose(scaled.centers, base.centers, atol=1e-12)
        assert np.array_equal(scaled.pixel_counts, base.pixel_counts)


def test_zero_mean_category_is_degenerate():
    features = np.zeros((2, 2, 3))
    features[0, 0] = [1.0, 0.0, 0.0]
    labels = np.array([[0, 1], [1, 1]])
    try:
        compute_centers([(features, labels)], num_categories=2)
    except DegenerateCategoryError as e:
        assert e.category == 1
    else:
        raise AssertionError("expected DegenerateCategoryError")


def test_center_distance_matrix_marks_absent_rows():
    rng = np.random.default_rng(2)
    centers = _unit_centers(rng, 3, 4, counts=[2, 0, 5])
    dist = center_distance_matrix(centers)
    assert dist[0][0] == 0.0
    assert math.isnan(dist[1][0]) and math.isnan(dist[2][1])


# ----------------------------------------------------
# Thresholds and pseudo labels
# ----------------------------------------------------
def test_thresholds_match_nearest_rank_oracle():
    rng = np.random.default_rng(3)
    for _ in range(100):
        p = float(rng.choice([5, 10, 20, 25, 50]))
        cfg = ThresholdConfig(P_h=float(rng.uniform(0.5, 1.0)), p=p)
        sets = [rng.random(int(rng.integers(1, 60))) for _ in range(3)]
        thresholds = compute_thresholds(sets, cfg)
        for values, t in zip(sets, thresholds):
            n = values.size
            rank = min(max(-(-(100 - int(p)) * n // 100), 1), n)
            assert t == min(cfg.P_h, np.sort(values)[rank - 1])


def test_empty_category_threshold_is_the_cap():
    cfg = ThresholdConfig(P_h=0.8, p=10)
    thresholds = compute_thresholds([np.array([0.5, 0.6]), np.array([])], cfg)
    assert thresholds[1] == 0.8


def test_threshold_of_ten_evenly_spaced_confidences():
    values = np.arange(1, 11) / 10.0
    assert compute_thresholds([values], ThresholdConfig(P_h=1.0, p=10))[0] == 0.9
    assert compute_thresholds([values], ThresholdConfig(P_h=0.9, p=10))[0] == 0.9
    assert compute_thresholds([np.ones(10)], ThresholdConfig(P_h=0.9, p=10))[0] == 0.9


def test_larger_p_never_raises_a_threshold():
    rng = np.random.default_rng(12)
    for _ in range(200):
        sets = [rng.random(int(rng.integers(1, 80))) for _ in range(3)]
        P_h = float(rng.uniform(0.5, 1.0))
        ps = np.sort(rng.uniform(0.5, 100.0, size=6))
        rows = [compute_thresholds(sets, ThresholdConfig(P_h=P_h, p=float(p))) for p in ps]
        for smaller_p, larger_p in zip(rows, rows[1:]):
            assert np.all(larger_p <= smaller_p)


def test_uniform_predictions_threshold_at_one_over_c():
    config = ModelConfig(hidden_channels=3, feature_channels=3, num_classes=4)
    model = SegModel.initialize(config, seed=2, zero_head=True).freeze()
    rng = np.random.default_rng(13)
    images = [RgbImage(data=rng.integers(0, 256, size=(6, 6, 3), dtype=np.uint8)) for _ in range(2)]
    pseudo = generate_pseudo_labels(model, images, ThresholdConfig(P_h=0.9, p=10))
    assert np.all(pseudo.labels == 0)
    assert np.allclose(pseudo.confidence, 0.25, atol=1e-15)
    assert abs(pseudo.thresholds[0] - 0.25) < 1e-15
    assert np.array_equal(pseudo.thresholds[1:], [0.9, 0.9, 0.9])
    assert pseudo.valid.all()


def test_pseudo_labels_are_a_pure_function_of_model_and_images():
    config = ModelConfig(hidden_channels=4, feature_channels=4, num_classes=3)
    model = SegModel.initialize(config, seed=5).freeze()
    rng = np.random.default_rng(14)
    images = [RgbImage(data=rng.integers(0, 256, size=(7, 7, 3), dtype=np.uint8)) for _ in range(3)]
    pixels_before = [image.data.copy() for image in images]
    weights_before = [v.copy() for v in model.values()]
    first = generate_pseudo_labels(model, images, ThresholdConfig(P_h=0.95, p=15))
    second = generate_pseudo_labels(model, images, ThresholdConfig(P_h=0.95, p=15))
    for field in ("labels", "confidence", "thresholds", "valid"):
        a, b = getattr(first, field), getattr(second, field)
        assert a.dtype == b.dtype and a.tobytes() == b.tobytes(), field
    for image, pixels in zip(images, pixels_before):
        assert np.array_equal(image.data, pixels)
    for value, before in zip(model.values(), weights_before):
        assert np.array_equal(value, before)


def test_pseudo_labels_keep_at_least_p_percent_per_category():
    config = ModelConfig(hidden_channels=4, feature_channels=4, num_classes=3)
    model = SegModel.initialize(config, seed=0).freeze()
    rng = np.random.default_rng(4)
    images = [RgbImage(data=rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)) for _ in range(3)]
    cfg = ThresholdConfig(P_h=0.99, p=20)
    pseudo = generate_pseudo_labels(model, images, cfg)
    assert pseudo.labels.shape == (3, 8, 8)
    assert np.array_equal(pseudo.valid, pseudo.confidence >= pseudo.thresholds[pseudo.labels])
    for c in range(3):
        in_category = pseudo.labels == c
        if in_category.any():
            assert pseudo.valid[in_category].mean() >= 0.2
    assert np.all(pseudo.thresholds <= 0.99)


def test_pseudo_labels_need_a_frozen_model():
    model = SegModel.initialize(ModelConfig(hidden_channels=2, feature_channels=2), seed=0)
    image = RgbImage(data=np.zeros((4, 4, 3), dtype=np.uint8))
    try:
        generate_pseudo_labels(model, [image], ThresholdConfig())
    except TypeError:
        pass
    else:
        raise AssertionError("expected TypeError")


def test_pseudo_label_repository_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    confidence = rng.uniform(0.3, 1.0, size=(2, 5, 4))
    labels = rng.integers(0, 3, size=(2, 5, 4))
    thresholds = np.array([0.5, 0.7, 0.9])
    pseudo = PseudoLabelSet(
        labels=labels, confidence=confidence, thresholds=thresholds,
        valid=confidence >= thresholds[labels],
    )
    repo = PseudoLabelRepository()
    written = repo.save(pseudo, tmp_path, "target")
    assert len(written) == 6
    loaded = repo.load(tmp_path, "target_0001")
    assert np.array_equal(loaded.labels, labels[1])
    assert np.allclose(loaded.confidence, confidence[1], atol=1e-7)
    assert np.array_equal(loaded.thresholds, thresholds)


# ----------------------------------------------------
# Triplet loss
# ----------------------------------------------------
def test_triplet_matches_brute_force():
    rng = np.random.default_rng(6)
    for mode in (NegativeMode.HARDEST, NegativeMode.ALL):
        cfg = TripletConfig(margin=0.3, negative_mode=mode)
        for _ in range(25):
            centers = _unit_centers(rng, 4, 5, counts=[3, 1, 0, 2])
            features = rng.normal(size=(3, 4, 5))
            labels = rng.choice([0, 1, 3], size=(3, 4))
            loss, grad, count = triplet_loss(features, labels, centers, cfg)
            expected = _triplet_oracle(features.reshape(-1, 5), labels.ravel(), centers.centers, 0.3, mode)
            assert abs(loss - expected) < 1e-10
            assert count == 12 and grad.shape == features.shape


def test_triplet_equidistant_centers_give_the_margin():
    centers = CategoryCenters(centers=np.eye(2), pixel_counts=[1, 1])
    feature = np.array([[[1.0, 1.0]]])
    for mode in NegativeMode:
        loss, _, _ = triplet_loss(feature, np.array([[0]]), centers, TripletConfig(margin=0.2, negative_mode=mode))
        assert abs(loss - 0.2) < 1e-12


def test_triplet_pixel_at_its_center_costs_nothing():
    centers = CategoryCenters(centers=np.eye(3), pixel_counts=[1, 1, 1])
    features = np.array([[[2.0, 0.0, 0.0], [0.0, 0.5, 0.0]]])
    loss, grad, count = triplet_loss(features, np.array([[0, 1]]), centers, TripletConfig())
    assert loss == 0.0 and count == 2
    assert np.all(grad == 0.0)


def test_triplet_ignores_masked_and_dead_pixels():
    centers = CategoryCenters(centers=np.eye(2), pixel_counts=[1, 1])
    features = np.array([[[1.0, 1.0], [0.0, 0.0], [0.3, 0.9]]])
    labels = np.array([[0, 0, 0]])
    ignore = np.array([[False, False, True]])
    loss, grad, count = triplet_loss(features, labels, centers, TripletConfig(margin=0.2), ignore_mask=ignore)
    assert count == 1
    assert abs(loss - 0.2) < 1e-12
    assert np.all(grad[0, 1:] == 0.0)


def test_triplet_missing_center():
    centers = CategoryCenters(centers=np.array([[1.0, 0.0], [0.0, 0.0]]), pixel_counts=[4, 0])
    try:
        triplet_loss(np.ones((1, 2, 2)), np.array([[0, 1]]), centers, TripletConfig())
    except MissingCenterError as e:
        assert e.category == 1
    else:
        raise AssertionError("expected MissingCenterError")


# ----------------------------------------------------
# Consistency loss
# ----------------------------------------------------
def test_consistency_is_zero_without_valid_pixels():
    labels = np.zeros((3, 3), dtype=int)
    confidence = np.full((3, 3), 0.4)
    pseudo = PseudoLabelSet(labels=labels, confidence=confidence, thresholds=[0.9, 0.9], valid=np.zeros((3, 3), bool))
    logits = np.random.default_rng(7).normal(size=(3, 3, 2))
    loss, grad, count = consistency_loss(pseudo, logits)
    assert loss == 0.0 and count == 0
    assert np.all(grad == 0.0)


def test_consistency_only_counts_valid_pixels():
    labels = np.array([[0, 1], [1, 0]])
    confidence = np.array([[0.95, 0.2], [0.99, 0.1]])
    pseudo = PseudoLabelSet(labels=labels, confidence=confidence, thresholds=[0.9, 0.9],
                            valid=confidence >= 0.9)
    logits = np.zeros((2, 2, 2))
    loss, grad, count = consistency_loss(pseudo, logits)
    assert count == 2
    assert abs(loss - math.log(2)) < 1e-12
    assert np.all(grad[0, 1] == 0.0) and np.all(grad[1, 1] == 0.0)


def test_consistency_with_every_pixel_valid_is_plain_cross_entropy():
    rng = np.random.default_rng(15)
    for _ in range(20):
        labels = rng.integers(0, 4, size=(5, 6))
        confidence = rng.uniform(0.5, 1.0, size=(5, 6))
        pseudo = PseudoLabelSet(labels=labels, confidence=confidence, thresholds=np.full(4, 0.5),
                                valid=np.ones((5, 6), dtype=bool))
        logits = rng.normal(scale=3.0, size=(5, 6, 4))
        loss, grad, count = consistency_loss(pseudo, logits)
        plain = cross_entropy_forward(logits, labels)
        assert count == plain.count == 30
        assert abs(loss - plain.loss) < 1e-12
        assert np.allclose(grad, cross_entropy_backward(plain), atol=1e-15)


if __name__ == "__main__":
    from testkit import run_tests

    run_tests(dict(globals()))
