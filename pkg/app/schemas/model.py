"""
Model Schemas

Pydantic models configuring the segmentation network and its optimizer.
"""

from pydantic import BaseModel, ConfigDict, Field


class ModelConfig(BaseModel):
    """Shape of the toy segmentation network."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    in_channels: int = Field(3, ge=1, le=3)
    hidden_channels: int = Field(16, ge=1)
    feature_channels: int = Field(16, ge=1)
    num_classes: int = Field(5, ge=1)


class OptimizerConfig(BaseModel):
    """SGD with momentum, weight decay, and a polynomial learning-rate decay."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    base_lr: float = Field(5e-4, gt=0.0)
    momentum: float = Field(0.9, ge=0.0, lt=1.0)
    weight_decay: float = Field(1e-4, ge=0.0)
    poly_power: float = Field(0.9, gt=0.0)
    total_iters: int = Field(2000, ge=1)
