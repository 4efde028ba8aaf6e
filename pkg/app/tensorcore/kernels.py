"""
Tensor Kernels

Forward and analytic backward passes for the handful of operations the
segmentation model and the losses need. Spatial tensors are channels-last,
(height, width, channels), one image at a time. All arithmetic runs in
float64 regardless of the parameter storage type.
"""

from typing import NamedTuple, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from app.core.exceptions import DegenerateFeatureError, ShapeMismatchError

Tensor = np.ndarray


def _ensure_finite(name: str, arr: Tensor) -> Tensor:
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"{name} produced non-finite values")
    return arr


# ----------------------------------------------------
# 3x3 convolution (stride 1, zero padding 1)
# ----------------------------------------------------
class ConvCache(NamedTuple):
    cols: Tensor  # (H*W, 9*Ci)
    weight_matrix: Tensor  # (9*Ci, Co)
    input_shape: Tuple[int, int, int]


def conv2d_forward(x: Tensor, weights: Tensor, bias: Tensor) -> Tuple[Tensor, ConvCache]:
    """
    3x3 cross-correlation with zero padding 1.

    Args:
        x: input (H, W, Ci)
        weights: kernel (3, 3, Ci, Co)
        bias: (Co,)

    Returns:
        output (H, W, Co) and the cache needed by conv2d_backward
    """
    if x.ndim != 3:
        raise ShapeMismatchError("conv2d input", ("H", "W", "C"), x.shape)
    if weights.ndim != 4 or weights.shape[:2] != (3, 3) or weights.shape[2] != x.shape[2]:
        raise ShapeMismatchError("conv2d weights", (3, 3, x.shape[2], "Co"), weights.shape)
    if bias.shape != (weights.shape[3],):
        raise ShapeMismatchError("conv2d bias", (weights.shape[3],), bias.shape)

    height, width, c_in = x.shape
    c_out = weights.shape[3]
    padded = np.pad(np.asarray(x, dtype=np.float64), ((1, 1), (1, 1), (0, 0)))
    # (H, W, Ci, 3, 3) -> (H, W, 3, 3, Ci) so columns match the (kh, kw, ci) weight order
    windows = sliding_window_view(padded, (3, 3), axis=(0, 1)).transpose(0, 1, 3, 4, 2)
    cols = np.ascontiguousarray(windows).reshape(height * width, 9 * c_in)
    weight_matrix = np.asarray(weights, dtype=np.float64).reshape(9 * c_in, c_out)

    out = cols @ weight_matrix + np.asarray(bias, dtype=np.float64)
    out = _ensure_finite("conv2d", out.reshape(height, width, c_out))
    return out, ConvCache(cols, weight_matrix, (height, width, c_in))


def conv2d_backward(grad_out: Tensor, cache: ConvCache) -> Tuple[Tensor, Tensor, Tensor]:
    """
    Returns:
        (grad_input (H, W, Ci), grad_weights (3, 3, Ci, Co), grad_bias (Co,))
    """
    height, width, c_in = cache.input_shape
    c_out = cache.weight_matrix.shape[1]
    if grad_out.shape != (height, width, c_out):
        raise ShapeMismatchError("conv2d grad", (height, width, c_out), grad_out.shape)

    g = grad_out.reshape(height * width, c_out)
    grad_weights = (cache.cols.T @ g).reshape(3, 3, c_in, c_out)
    grad_bias = g.sum(axis=0)

    grad_cols = (g @ cache.weight_matrix.T).reshape(height, width, 3, 3, c_in)
    grad_padded = np.zeros((height + 2, width + 2, c_in), dtype=np.float64)
    for kh in range(3):
        for kw in range(3):
            grad_padded[kh:kh + height, kw:kw + width] += grad_cols[:, :, kh, kw, :]
    return grad_padded[1:-1, 1:-1], grad_weights, grad_bias


# ----------------------------------------------------
# 1x1 convolution (per-pixel matmul)
# ----------------------------------------------------
def conv1x1_forward(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    if x.ndim != 3 or weights.ndim != 2 or weights.shape[0] != x.shape[2]:
        raise ShapeMismatchError("conv1x1 weights", (x.shape[-1], "Co"), weights.shape)
    if bias.shape != (weights.shape[1],):
        raise ShapeMismatchError("conv1x1 bias", (weights.shape[1],), bias.shape)
    out = np.asarray(x, dtype=np.float64) @ np.asarray(weights, dtype=np.float64) + bias
    return _ensure_finite("conv1x1", out)


def conv1x1_backward(grad_out: Tensor, x: Tensor, weights: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
    c_in = x.shape[2]
    flat_x = np.asarray(x, dtype=np.float64).reshape(-1, c_in)
    flat_g = grad_out.reshape(-1, grad_out.shape[2])
    grad_weights = flat_x.T @ flat_g
    grad_bias = flat_g.sum(axis=0)
    grad_input = grad_out @ np.asarray(weights, dtype=np.float64).T
    return grad_input, grad_weights, grad_bias


# ----------------------------------------------------
# ReLU
# ----------------------------------------------------
def relu_forward(x: Tensor) -> Tensor:
    return np.maximum(x, 0.0)


def relu_backward(grad_out: Tensor, x: Tensor) -> Tensor:
    return grad_out * (x > 0.0)


# ----------------------------------------------------
# Softmax / cross-entropy
# ----------------------------------------------------
def softmax_forward(logits: Tensor) -> Tensor:
    """Softmax over the last (channel) axis."""
    shifted = np.asarray(logits, dtype=np.float64) - np.max(logits, axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def log_softmax(logits: Tensor) -> Tensor:
    shifted = np.asarray(logits, dtype=np.float64) - np.max(logits, axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


class CrossEntropyResult(NamedTuple):
    loss: float
    count: int  # pixels that contributed
    probs: Tensor
    labels: Tensor
    active: Tensor  # bool mask of contributing pixels


def cross_entropy_forward(
    logits: Tensor,
    labels: Tensor,
    ignore_mask: Optional[Tensor] = None,
) -> CrossEntropyResult:
    """
    Mean cross-entropy over the pixels that are not ignored.

    Args:
        logits: (H, W, C)
        labels: (H, W) integer categories
        ignore_mask: (H, W) bool, True where the pixel is left out

    Returns:
        CrossEntropyResult; loss is 0 and count 0 when every pixel is ignored
    """
    if logits.ndim != labels.ndim + 1 or logits.shape[:-1] != labels.shape:
        raise ShapeMismatchError("cross-entropy labels", logits.shape[:-1], labels.shape)
    num_classes = logits.shape[-1]
    active = np.ones(labels.shape, dtype=bool) if ignore_mask is None else ~np.asarray(ignore_mask, dtype=bool)
    if ignore_mask is not None and np.shape(ignore_mask) != labels.shape:
        raise ShapeMismatchError("cross-entropy ignore mask", labels.shape, np.shape(ignore_mask))

    labels = np.asarray(labels, dtype=np.int64)
    if np.any((labels[active] < 0) | (labels[active] >= num_classes)):
        raise ValueError(f"labels must lie in [0, {num_classes - 1}] on non-ignored pixels")

    probs = softmax_forward(logits)
    count = int(active.sum())
    if count == 0:
        return CrossEntropyResult(0.0, 0, probs, labels, active)

    log_probs = log_softmax(logits)
    safe_labels = np.where(active, labels, 0)
    picked = np.take_along_axis(log_probs, safe_labels[..., None], axis=-1)[..., 0]
    loss = float(-picked[active].sum() / count)
    return CrossEntropyResult(loss, count, probs, safe_labels, active)


def cross_entropy_backward(result: CrossEntropyResult) -> Tensor:
    """Gradient of the mean loss w.r.t. logits; zero on ignored pixels."""
    grad = np.zeros_like(result.probs)
    if result.count == 0:
        return grad
    grad[...] = result.probs
    np.put_along_axis(
        grad,
        result.labels[..., None],
        np.take_along_axis(grad, result.labels[..., None], axis=-1) - 1.0,
        axis=-1,
    )
    grad *= result.active[..., None]
    return grad / result.count


# ----------------------------------------------------
# Row-wise L2 normalization
# ----------------------------------------------------
def l2_normalize_rows(m: Tensor) -> Tuple[Tensor, Tensor]:
    """
    Normalize each row of an (N, F) matrix to unit L2 norm.

    Returns:
        (normalized rows, row norms)

    Raises:
        DegenerateFeatureError: a row has zero norm
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeMismatchError("l2 normalize input", ("N", "F"), m.shape)
    norms = np.sqrt(np.einsum("ij,ij->i", m, m))
    if np.any(norms == 0.0):
        raise DegenerateFeatureError()
    return m / norms[:, None], norms


def l2_normalize_rows_backward(grad_out: Tensor, normalized: Tensor, norms: Tensor) -> Tensor:
    """d(x/|x|) applied to grad_out: (g - y (y . g)) / |x|."""
    dot = np.einsum("ij,ij->i", normalized, grad_out)
    return (grad_out - normalized * dot[:, None]) / norms[:, None]
