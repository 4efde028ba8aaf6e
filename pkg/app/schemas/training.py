"""
Training Schemas

Pipeline configuration and the reports it produces.
"""

from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.schemas.image import JitterParams
from app.schemas.model import ModelConfig, OptimizerConfig
from app.schemas.regularizers import ThresholdConfig, TripletConfig
from app.utils.enums import AlignScheme


class LossWeights(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    seg: float = Field(1.0, ge=0.0)
    triplet: float = Field(1.0, ge=0.0)
    consistency: float = Field(1.0, ge=0.0)


class Toggles(BaseModel):
    """Ablation switches: photometric alignment, triplet loss, consistency."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    use_gpa: bool = True
    use_ctl: bool = True
    use_tcr: bool = True


class TrainingConfig(BaseModel):
    """
    Every scalar of the pipeline.

    K counts all stages including the coarse-alignment stage: K=1 trains
    only T_0, K=3 trains T_0, T_1, T_2.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    K: int = Field(3, ge=1, description="Outer steps, stage 0 included")
    U: int = Field(2000, ge=1, description="SGD iterations per outer step")
    seed: int = Field(0, description="Master seed; every random stream derives from it")
    beta: float = Field(0.01, ge=0.0, description="Gamma regularization weight")
    align_scheme: AlignScheme = AlignScheme.HYBRID
    thresholds: ThresholdConfig = Field(default_factory=ThresholdConfig)
    triplet: TripletConfig = Field(default_factory=TripletConfig)
    jitter: JitterParams = Field(default_factory=JitterParams)
    model: ModelConfig = Field(default_factory=ModelConfig)
    step0_optimizer: OptimizerConfig = Field(default_factory=lambda: OptimizerConfig(base_lr=5e-4))
    finetune_optimizer: OptimizerConfig = Field(default_factory=lambda: OptimizerConfig(base_lr=2.5e-4))
    toggles: Toggles = Field(default_factory=Toggles)
    loss_weights: LossWeights = Field(default_factory=LossWeights)
    triplet_on_pseudo: bool = Field(False, description="Also apply the triplet loss to valid target pseudo labels")
    log_interval: int = Field(200, ge=1)
    threads: int = Field(1, ge=1)

    @model_validator(mode="before")
    @classmethod
    def sync_schedule_length(cls, data):
        # poly schedule restarts every step and spans exactly U iterations
        if not isinstance(data, dict):
            return data
        data = dict(data)
        U = data.get("U", 2000)
        for key, base_lr in (("step0_optimizer", 5e-4), ("finetune_optimizer", 2.5e-4)):
            opt = data.get(key)
            if opt is None:
                data[key] = {"base_lr": base_lr, "total_iters": U}
            elif isinstance(opt, OptimizerConfig):
                data[key] = opt.model_copy(update={"total_iters": U})
            elif isinstance(opt, dict):
                data[key] = {"base_lr": base_lr, **opt, "total_iters": U}
        return data


class EvalResult(BaseModel):
    """Per-class IoU (None where the class is absent from labels and predictions) and mIoU."""
    model_config = ConfigDict(frozen=True)

    per_class_iou: List[Optional[float]]
    miou: float = Field(..., ge=0.0, le=1.0)
    pixel_accuracy: float = Field(..., ge=0.0, le=1.0)
    num_images: int = Field(..., ge=0)


class StepReport(BaseModel):
    """Summary of one outer step, written as one JSON line."""
    model_config = ConfigDict(frozen=True)

    step: int = Field(..., ge=0)
    iterations: int = Field(..., ge=0)
    mean_loss_seg: float
    mean_loss_triplet: Optional[float] = None
    mean_loss_consistency: Optional[float] = None
    mean_loss_target_seg: Optional[float] = None
    thresholds: Optional[List[float]] = None
    valid_fraction_by_category: Optional[List[float]] = None
    eval: Optional[EvalResult] = None


class AblationVariant(BaseModel):
    """
    One row of an ablation suite. align_scheme and triplet_on_pseudo, when
    set, override the base config for this variant only.
    """
    model_config = ConfigDict(frozen=True)

    name: str
    toggles: Toggles
    self_training: bool = Field(..., description="Run steps 1..K-1 after stage 0")
    align_scheme: Optional[AlignScheme] = None
    triplet_on_pseudo: Optional[bool] = None


class AblationRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    variant: str
    seed: int
    use_gpa: bool
    use_ctl: bool
    use_tcr: bool
    miou: float
    align_scheme: AlignScheme = AlignScheme.HYBRID
    triplet_on_pseudo: bool = False


class AblationTable(BaseModel):
    rows: List[AblationRow]

    def mean_by_variant(self) -> Dict[str, float]:
        sums: Dict[str, List[float]] = {}
        for row in self.rows:
            sums.setdefault(row.variant, []).append(row.miou)
        return {name: sum(v) / len(v) for name, v in sums.items()}
