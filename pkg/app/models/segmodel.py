"""
Segmentation Model

A small fully-convolutional network: three 3x3 conv + ReLU blocks followed
by a 1x1 classifier head. The activation of the third block is the pixel
feature map used for category centers and the triplet loss.

Two classes share one forward implementation:
- SegModel: trainable, owns Parameters with gradient/momentum buffers
- FrozenSegModel: read-only snapshot used to produce pseudo labels and
  centers for the next step
"""

import logging
from pathlib import Path
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.exceptions import CheckpointFormatError, ShapeMismatchError
from app.schemas.model import ModelConfig
from app.tensorcore.kernels import (
    ConvCache,
    conv1x1_backward,
    conv1x1_forward,
    conv2d_backward,
    conv2d_forward,
    relu_backward,
    relu_forward,
    softmax_forward,
)
from app.tensorcore.optim import Parameter

logger = logging.getLogger(__name__)

PARAMETER_NAMES = (
    "conv1.weight", "conv1.bias",
    "conv2.weight", "conv2.bias",
    "conv3.weight", "conv3.bias",
    "head.weight", "head.bias",
)


def expected_shapes(config: ModelConfig) -> List[Tuple[int, ...]]:
    h, f, c = config.hidden_channels, config.feature_channels, config.num_classes
    return [
        (3, 3, config.in_channels, h), (h,),
        (3, 3, h, h), (h,),
        (3, 3, h, f), (f,),
        (f, c), (c,),
    ]


def config_from_shapes(shapes: Sequence[Tuple[int, ...]]) -> ModelConfig:
    """
    Recover the ModelConfig a parameter list was built for.

    Raises:
        CheckpointFormatError: wrong tensor count or tensor rank
        ShapeMismatchError: tensors of the right rank that disagree with each other
    """
    if len(shapes) != len(PARAMETER_NAMES):
        raise CheckpointFormatError(f"expected {len(PARAMETER_NAMES)} tensors, found {len(shapes)}")
    for name, want, got in zip(PARAMETER_NAMES, expected_shapes(ModelConfig()), shapes):
        if len(got) != len(want):
            raise CheckpointFormatError(f"{name}: expected a rank-{len(want)} tensor, found rank {len(got)}")
    config = ModelConfig(
        in_channels=shapes[0][2],
        hidden_channels=shapes[0][3],
        feature_channels=shapes[4][3],
        num_classes=shapes[6][1],
    )
    for name, want, got in zip(PARAMETER_NAMES, expected_shapes(config), shapes):
        if tuple(want) != tuple(got):
            raise ShapeMismatchError(name, want, got)
    return config


class ForwardPass(NamedTuple):
    features: np.ndarray  # (H, W, F), post-ReLU input of the head
    logits: np.ndarray  # (H, W, C)
    image: np.ndarray
    pre_activations: Tuple[np.ndarray, np.ndarray, np.ndarray]
    conv_caches: Tuple[ConvCache, ConvCache, ConvCache]
    hidden: Tuple[np.ndarray, np.ndarray]


def _validate_image(image: np.ndarray, config: ModelConfig) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != config.in_channels:
        raise ShapeMismatchError("model input", ("H", "W", config.in_channels), image.shape)
    if image.size and (image.min() < 0.0 or image.max() > 1.0):
        raise ValueError("model input must be normalized RGB in [0, 1]")
    return image


def forward_values(values: Sequence[np.ndarray], config: ModelConfig, image: np.ndarray) -> ForwardPass:
    """Forward pass over an explicit parameter list, in PARAMETER_NAMES order."""
    image = _validate_image(image, config)
    w1, b1, w2, b2, w3, b3, wh, bh = values

    z1, cache1 = conv2d_forward(image, w1, b1)
    a1 = relu_forward(z1)
    z2, cache2 = conv2d_forward(a1, w2, b2)
    a2 = relu_forward(z2)
    z3, cache3 = conv2d_forward(a2, w3, b3)
    features = relu_forward(z3)
    logits = conv1x1_forward(features, wh, bh)

    return ForwardPass(features, logits, image, (z1, z2, z3), (cache1, cache2, cache3), (a1, a2))


def _predict(values: Sequence[np.ndarray], config: ModelConfig, image: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    probs = softmax_forward(forward_values(values, config, image).logits)
    # argmax picks the lowest index on ties
    labels = np.argmax(probs, axis=-1)
    confidence = np.take_along_axis(probs, labels[..., None], axis=-1)[..., 0]
    return labels.astype(np.int64), confidence


class SegModel:
    """
    Trainable segmentation network.

    Usage:
        model = SegModel.initialize(ModelConfig(num_classes=5), seed=0)
        fwd = model.forward(image)
        model.backward(fwd, grad_logits, grad_features)
    """

    def __init__(self, config: ModelConfig, parameters: List[Parameter]):
        shapes = [p.shape for p in parameters]
        for name, want, got in zip(PARAMETER_NAMES, expected_shapes(config), shapes):
            if tuple(want) != tuple(got):
                raise ShapeMismatchError(name, want, got)
        if len(parameters) != len(PARAMETER_NAMES):
            raise ValueError(f"expected {len(PARAMETER_NAMES)} parameters, got {len(parameters)}")
        self.config = config
        self.parameters = parameters

    @classmethod
    def initialize(cls, config: ModelConfig, seed: int, zero_head: bool = False) -> "SegModel":
        """He-style fan-in scaled Gaussian init; biases start at zero."""
        rng = np.random.default_rng(seed)
        params = []
        for name, shape in zip(PARAMETER_NAMES, expected_shapes(config)):
            if name.endswith("bias") or (zero_head and name.startswith("head")):
                value = np.zeros(shape)
            else:
                fan_in = int(np.prod(shape[:-1]))
                value = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
            params.append(Parameter(name, value))
        logger.debug(f"Initialized model {config.model_dump()} with seed {seed}")
        return cls(config, params)

    @classmethod
    def from_tensors(cls, tensors: Sequence[np.ndarray]) -> "SegModel":
        config = config_from_shapes([t.shape for t in tensors])
        return cls(config, [Parameter(n, t) for n, t in zip(PARAMETER_NAMES, tensors)])

    def values(self) -> List[np.ndarray]:
        return [p.value for p in self.parameters]

    def forward(self, image: np.ndarray) -> ForwardPass:
        return forward_values(self.values(), self.config, image)

    def predict(self, image: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return _predict(self.values(), self.config, image)

    def backward(
        self,
        fwd: ForwardPass,
        grad_logits: np.ndarray,
        grad_features: Optional[np.ndarray] = None,
    ) -> np.ndarray:
        """
        Accumulate parameter gradients for the given upstream gradients.

        Returns:
            gradient w.r.t. the input image
        """
        w1, b1, w2, b2, w3, b3, wh, bh = self.parameters
        z1, z2, z3 = fwd.pre_activations
        cache1, cache2, cache3 = fwd.conv_caches

        g_feat, g_wh, g_bh = conv1x1_backward(grad_logits, fwd.features, wh.value)
        wh.grad += g_wh
        bh.grad += g_bh
        if grad_features is not None:
            g_feat = g_feat + grad_features

        g, g_w, g_b = conv2d_backward(relu_backward(g_feat, z3), cache3)
        w3.grad += g_w
        b3.grad += g_b
        g, g_w, g_b = conv2d_backward(relu_backward(g, z2), cache2)
        w2.grad += g_w
        b2.grad += g_b
        g, g_w, g_b = conv2d_backward(relu_backward(g, z1), cache1)
        w1.grad += g_w
        b1.grad += g_b
        return g

    def zero_grad(self) -> None:
        for p in self.parameters:
            p.zero_grad()

    def freeze(self) -> "FrozenSegModel":
        return FrozenSegModel(self.config, self.values())

    def __repr__(self):
        return f"<SegModel(config={self.config.model_dump()})>"


class FrozenSegModel:
    """Immutable snapshot of a SegModel: forward and predict only."""

    def __init__(self, config: ModelConfig, values: Sequence[np.ndarray]):
        self.config = config
        frozen = []
        for v in values:
            arr = np.array(v, dtype=np.float32, copy=True)
            arr.flags.writeable = False
            frozen.append(arr)
        self._values = tuple(frozen)

    def values(self) -> Tuple[np.ndarray, ...]:
        return self._values

    def forward(self, image: np.ndarray) -> ForwardPass:
        return forward_values(self._values, self.config, image)

    def predict(self, image: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return _predict(self._values, self.config, image)

    def thaw(self) -> SegModel:
        """Trainable copy with fresh gradient and momentum buffers."""
        return SegModel(self.config, [Parameter(n, v) for n, v in zip(PARAMETER_NAMES, self._values)])

    def __repr__(self):
        return f"<FrozenSegModel(config={self.config.model_dump()})>"


AnyModel = Union[SegModel, FrozenSegModel]


def save_checkpoint(model: AnyModel, path: Union[str, Path]) -> Path:
    from app.repositories.checkpoint import CheckpointRepository

    return CheckpointRepository().save(list(model.values()), path)


def load_checkpoint(path: Union[str, Path]) -> SegModel:
    from app.repositories.checkpoint import CheckpointRepository

    tensors = CheckpointRepository().load(path)
    try:
        return SegModel.from_tensors(tensors)
    except ShapeMismatchError as e:
        raise CheckpointFormatError(f"{path}: {e.detail}")
