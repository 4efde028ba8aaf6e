"""
Parameters and SGD

Parameters store their value in float32 (what a checkpoint holds) and their
gradient and momentum buffers in float64.
"""

import logging
from typing import Iterable

import numpy as np

from app.schemas.model import OptimizerConfig

logger = logging.getLogger(__name__)


class Parameter:
    """A trainable tensor with its gradient and momentum buffer."""

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.array(value, dtype=np.float32, copy=True)
        self.grad = np.zeros(self.value.shape, dtype=np.float64)
        self.momentum_buf = np.zeros(self.value.shape, dtype=np.float64)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad.fill(0.0)

    def __repr__(self):
        return f"<Parameter(name={self.name}, shape={self.value.shape})>"


def poly_lr(config: OptimizerConfig, iteration: int) -> float:
    """base_lr * (1 - iter/total)^power, floored at 0 once iter >= total."""
    remaining = max(0.0, 1.0 - iteration / config.total_iters)
    return config.base_lr * remaining ** config.poly_power


def sgd_step(params: Iterable[Parameter], config: OptimizerConfig, iteration: int) -> float:
    """
    One momentum-SGD update with L2 weight decay; zeroes the gradients.

    Returns:
        learning rate used
    """
    lr = poly_lr(config, iteration)
    for param in params:
        grad = param.grad
        if config.weight_decay:
            grad = grad + config.weight_decay * param.value.astype(np.float64)
        param.momentum_buf *= config.momentum
        param.momentum_buf += grad
        if lr > 0.0:
            updated = param.value.astype(np.float64) - lr * param.momentum_buf
            param.value = updated.astype(np.float32)
        param.zero_grad()
    return lr
