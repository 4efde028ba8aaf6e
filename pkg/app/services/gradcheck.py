"""
Gradient Check Service

Compares every analytic backward pass (kernels, losses, the gamma
objective, and the full model) against central finite differences on
random small instances. Instances that land within a narrow band of a
non-differentiable point (ReLU kink, hinge boundary, hardest-negative
tie) are redrawn.
"""

import logging
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from app.models.segmodel import SegModel, forward_values
from app.schemas.gradcheck import GradcheckReport, GradcheckResult
from app.schemas.image import UNIT_RANGE
from app.schemas.model import ModelConfig
from app.schemas.regularizers import CategoryCenters, PseudoLabelSet, TripletConfig
from app.services.imgproc import channel_histogram, gamma_gradient, gamma_objective
from app.services.regularizers import consistency_loss, hinge_margins, triplet_loss
from app.tensorcore.kernels import (
    conv1x1_backward,
    conv1x1_forward,
    conv2d_backward,
    conv2d_forward,
    cross_entropy_backward,
    cross_entropy_forward,
    l2_normalize_rows,
    l2_normalize_rows_backward,
    relu_backward,
    relu_forward,
)
from app.utils.enums import NegativeMode
from app.utils.helpers import derive_rng

logger = logging.getLogger(__name__)

STEP = 1e-6
TOLERANCE = 1e-4
KINK_BAND = 1e-4
MAX_REDRAWS = 20

# an instance yields (analytic, numeric) gradients, or None to be redrawn
Instance = Optional[Tuple[np.ndarray, np.ndarray]]


def numerical_gradient(f: Callable[[], float], x: np.ndarray, indices: Optional[np.ndarray] = None) -> np.ndarray:
    """Central differences of f() w.r.t. entries of x, which is perturbed in place and restored."""
    flat = x.reshape(-1)
    indices = np.arange(flat.size) if indices is None else indices
    grad = np.empty(len(indices), dtype=np.float64)
    for out, i in enumerate(indices):
        old = flat[i]
        flat[i] = old + STEP
        f_plus = f()
        flat[i] = old - STEP
        f_minus = f()
        flat[i] = old
        grad[out] = (f_plus - f_minus) / (2.0 * STEP)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    analytic, numeric = np.ravel(analytic), np.ravel(numeric)
    scale = max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-8)
    return float(np.linalg.norm(analytic - numeric) / scale)


# ----------------------------------------------------
# Suites
# ----------------------------------------------------
def _conv2d(rng: np.random.Generator) -> Instance:
    x = rng.normal(size=(5, 4, 2))
    w = rng.normal(size=(3, 3, 2, 3))
    b = rng.normal(size=3)
    r = rng.normal(size=(5, 4, 3))
    out, cache = conv2d_forward(x, w, b)
    gx, gw, gb = conv2d_backward(r, cache)

    def f() -> float:
        return float(np.sum(r * conv2d_forward(x, w, b)[0]))

    analytic = np.concatenate([gx.ravel(), gw.ravel(), gb.ravel()])
    numeric = np.concatenate([numerical_gradient(f, x), numerical_gradient(f, w), numerical_gradient(f, b)])
    return analytic, numeric


def _conv1x1(rng: np.random.Generator) -> Instance:
    x = rng.normal(size=(4, 3, 3))
    w = rng.normal(size=(3, 2))
    b = rng.normal(size=2)
    r = rng.normal(size=(4, 3, 2))
    gx, gw, gb = conv1x1_backward(r, x, w)

    def f() -> float:
        return float(np.sum(r * conv1x1_forward(x, w, b)))

    analytic = np.concatenate([gx.ravel(), gw.ravel(), gb.ravel()])
    numeric = np.concatenate([numerical_gradient(f, x), numerical_gradient(f, w), numerical_gradient(f, b)])
    return analytic, numeric


def _relu(rng: np.random.Generator) -> Instance:
    x = rng.normal(size=(4, 4, 2))
    if np.min(np.abs(x)) < KINK_BAND:
        return None
    r = rng.normal(size=x.shape)

    def f() -> float:
        return float(np.sum(r * relu_forward(x)))

    return relu_backward(r, x).ravel(), numerical_gradient(f, x)


def _cross_entropy(rng: np.random.Generator) -> Instance:
    logits = rng.normal(size=(4, 4, 3))
    labels = rng.integers(0, 3, size=(4, 4))
    ignore = rng.random((4, 4)) < 0.3
    if ignore.all():
        return None
    analytic = cross_entropy_backward(cross_entropy_forward(logits, labels, ignore))

    def f() -> float:
        return cross_entropy_forward(logits, labels, ignore).loss

    return analytic.ravel(), numerical_gradient(f, logits)


def _l2_normalize(rng: np.random.Generator) -> Instance:
    m = rng.normal(size=(6, 4))
    r = rng.normal(size=m.shape)
    normalized, norms = l2_normalize_rows(m)

    def f() -> float:
        return float(np.sum(r * l2_normalize_rows(m)[0]))

    return l2_normalize_rows_backward(r, normalized, norms).ravel(), numerical_gradient(f, m)


def _random_centers(rng: np.random.Generator, num_categories: int, dim: int) -> CategoryCenters:
    raw = rng.normal(size=(num_categories, dim))
    return CategoryCenters(
        centers=raw / np.linalg.norm(raw, axis=1, keepdims=True),
        pixel_counts=np.ones(num_categories, dtype=np.int64),
    )


def _triplet(mode: NegativeMode) -> Callable[[np.random.Generator], Instance]:
    def suite(rng: np.random.Generator) -> Instance:
        cfg = TripletConfig(margin=0.5, negative_mode=mode)
        centers = _random_centers(rng, 3, 4)
        features = rng.normal(size=(3, 3, 4))
        labels = rng.integers(0, 3, size=(3, 3))

        margins = hinge_margins(features, labels, centers, cfg)
        own = np.zeros_like(margins, dtype=bool)
        own[np.arange(labels.size), labels.ravel()] = True
        negatives = margins[~own].reshape(labels.size, -1)
        if np.min(np.abs(negatives)) < KINK_BAND:
            return None
        if mode == NegativeMode.HARDEST and np.min(np.diff(np.sort(negatives, axis=1), axis=1)) < KINK_BAND:
            return None

        loss, grad, _ = triplet_loss(features, labels, centers, cfg)
        if loss == 0.0:
            return None

        def f() -> float:
            return triplet_loss(features, labels, centers, cfg)[0]

        return grad.ravel(), numerical_gradient(f, features)

    return suite


def _consistency(rng: np.random.Generator) -> Instance:
    logits = rng.normal(size=(4, 4, 3))
    labels = rng.integers(0, 3, size=(4, 4))
    confidence = rng.random((4, 4))
    thresholds = rng.uniform(0.2, 0.8, size=3)
    valid = confidence >= thresholds[labels]
    if not valid.any():
        return None
    pseudo = PseudoLabelSet(labels=labels, confidence=confidence, thresholds=thresholds, valid=valid)
    _, grad, _ = consistency_loss(pseudo, logits)

    def f() -> float:
        return consistency_loss(pseudo, logits)[0]

    return grad.ravel(), numerical_gradient(f, logits)


def _gamma(rng: np.random.Generator) -> Instance:
    src = channel_histogram(rng.beta(rng.uniform(0.5, 3), rng.uniform(0.5, 3), size=400), UNIT_RANGE)
    ref = channel_histogram(rng.beta(rng.uniform(0.5, 3), rng.uniform(0.5, 3), size=400), UNIT_RANGE)
    beta = rng.uniform(0.0, 0.1)
    gamma = np.array([rng.uniform(0.3, 3.0)])

    def f() -> float:
        return gamma_objective(float(gamma[0]), src, ref, beta)

    analytic = np.array([gamma_gradient(float(gamma[0]), src, ref, beta)])
    return analytic, numerical_gradient(f, gamma)


def _segmodel(rng: np.random.Generator) -> Instance:
    config = ModelConfig(hidden_channels=3, feature_channels=3, num_classes=3)
    model = SegModel.initialize(config, seed=int(rng.integers(2**31 - 1)))
    for p in model.parameters:
        if p.name.endswith("bias"):
            p.value = rng.normal(0.0, 0.1, size=p.shape).astype(np.float32)
    image = rng.random((5, 5, 3))
    labels = rng.integers(0, 3, size=(5, 5))
    r = rng.normal(size=(5, 5, 3))

    fwd = model.forward(image)
    if min(np.min(np.abs(z)) for z in fwd.pre_activations) < KINK_BAND:
        return None
    ce = cross_entropy_forward(fwd.logits, labels)
    model.zero_grad()
    model.backward(fwd, cross_entropy_backward(ce), r)

    values = [p.value.astype(np.float64) for p in model.parameters]

    def f() -> float:
        out = forward_values(values, config, image)
        return cross_entropy_forward(out.logits, labels).loss + float(np.sum(r * out.features))

    analytic, numeric = [], []
    for param, value in zip(model.parameters, values):
        picks = rng.choice(value.size, size=min(6, value.size), replace=False)
        analytic.append(param.grad.reshape(-1)[picks])
        numeric.append(numerical_gradient(f, value, picks))
    return np.concatenate(analytic), np.concatenate(numeric)


SUITES: Dict[str, Callable[[np.random.Generator], Instance]] = {
    "conv2d": _conv2d,
    "conv1x1": _conv1x1,
    "relu": _relu,
    "cross_entropy": _cross_entropy,
    "l2_normalize": _l2_normalize,
    "triplet_hardest": _triplet(NegativeMode.HARDEST),
    "triplet_all": _triplet(NegativeMode.ALL),
    "consistency": _consistency,
    "gamma_objective": _gamma,
    "segmodel": _segmodel,
}


def run_suite(name: str, instances: int = 20, seed: int = 0, tolerance: float = TOLERANCE) -> GradcheckResult:
    suite = SUITES[name]
    rng = derive_rng(seed, list(SUITES).index(name))
    accepted, worst, draws = 0, 0.0, 0
    while accepted < instances and draws < instances * MAX_REDRAWS:
        draws += 1
        pair = suite(rng)
        if pair is None:
            continue
        worst = max(worst, relative_error(*pair))
        accepted += 1
    passed = accepted == instances and worst <= tolerance
    log = logger.info if passed else logger.error
    log(f"gradcheck {name}: {accepted} instances, max rel error {worst:.2e} ({'ok' if passed else 'FAILED'})")
    return GradcheckResult(name=name, instances=accepted, max_rel_error=worst, tolerance=tolerance, passed=passed)


def run_gradchecks(instances: int = 20, seed: int = 0, tolerance: float = TOLERANCE) -> GradcheckReport:
    return GradcheckReport(results=[run_suite(name, instances, seed, tolerance) for name in SUITES])
