"""
Ablation Service

Re-runs the pipeline once per variant and seed and scores each final model
on the evaluation split. Three suites are available:
- components: the six GPA / CTL / TCR rows (the default)
- schemes: the coarse stage under each alignment scheme
- pseudo_labels: the full pipeline with the triplet loss on source labels
  only, and on source labels plus valid target pseudo labels
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from app.middleware.logging import log_duration
from app.models.segmodel import FrozenSegModel
from app.repositories.reports import ReportRepository
from app.schemas.dataset import DomainData
from app.schemas.training import AblationRow, AblationTable, AblationVariant, StepReport, Toggles, TrainingConfig
from app.services.training import TrainingService
from app.utils.enums import AlignScheme

logger = logging.getLogger(__name__)

_FULL = Toggles(use_gpa=True, use_ctl=True, use_tcr=True)
_GPA_ONLY = Toggles(use_gpa=True, use_ctl=False, use_tcr=False)

# the two variants without self-training only run the coarse-alignment stage
ABLATION_VARIANTS: List[AblationVariant] = [
    AblationVariant(name="source_only", toggles=Toggles(use_gpa=False, use_ctl=False, use_tcr=False), self_training=False),
    AblationVariant(name="gpa_only", toggles=_GPA_ONLY, self_training=False),
    AblationVariant(name="gpa_tcr", toggles=Toggles(use_gpa=True, use_ctl=False, use_tcr=True), self_training=True),
    AblationVariant(name="gpa_ctl", toggles=Toggles(use_gpa=True, use_ctl=True, use_tcr=False), self_training=True),
    AblationVariant(name="full", toggles=_FULL, self_training=True),
    AblationVariant(name="ctl_tcr", toggles=Toggles(use_gpa=False, use_ctl=True, use_tcr=True), self_training=True),
]

SCHEME_VARIANTS: List[AblationVariant] = [
    AblationVariant(name=f"coarse_{scheme.value}", toggles=_GPA_ONLY, self_training=False, align_scheme=scheme)
    for scheme in (AlignScheme.GAMMA, AlignScheme.HISTOGRAM, AlignScheme.HYBRID)
]

PSEUDO_LABEL_VARIANTS: List[AblationVariant] = [
    AblationVariant(name="triplet_with_pseudo", toggles=_FULL, self_training=True, triplet_on_pseudo=True),
    AblationVariant(name="triplet_source_only", toggles=_FULL, self_training=True, triplet_on_pseudo=False),
]

ABLATION_SUITES: Dict[str, List[AblationVariant]] = {
    "components": ABLATION_VARIANTS,
    "schemes": SCHEME_VARIANTS,
    "pseudo_labels": PSEUDO_LABEL_VARIANTS,
}


def variant_config(config: TrainingConfig, variant: AblationVariant, seed: int) -> TrainingConfig:
    """The base config with the variant's overrides, the given seed, and K=1 without self-training."""
    update = {
        "toggles": variant.toggles,
        "seed": seed,
        "K": config.K if variant.self_training else 1,
    }
    if variant.align_scheme is not None:
        update["align_scheme"] = variant.align_scheme
    if variant.triplet_on_pseudo is not None:
        update["triplet_on_pseudo"] = variant.triplet_on_pseudo
    return config.model_copy(update=update)


def _coarse_key(config: TrainingConfig) -> Tuple:
    # step 0 reads nothing but these fields (CTL/TCR only act from step 1 on)
    scheme = config.align_scheme if config.toggles.use_gpa else None
    return config.seed, config.toggles.use_gpa, scheme


def ablate(
    config: TrainingConfig,
    data: DomainData,
    seeds: Sequence[int],
    output_dir: Optional[Path] = None,
    variants: Optional[Sequence[AblationVariant]] = None,
) -> AblationTable:
    """
    Run every variant for every seed; rows come out variant-major in the
    order of `variants`, seeds ascending within a variant.

    Variants whose stage 0 is identical (same seed, GPA switch and scheme)
    share one trained T_0, and every row is scored by the evaluation its
    pipeline already ran on the last step.
    """
    if data.target_eval is None:
        raise ValueError("ablation needs a labelled evaluation split")
    coarse: Dict[Tuple, Tuple[FrozenSegModel, StepReport]] = {}
    rows: List[AblationRow] = []
    for variant in variants or ABLATION_VARIANTS:
        for seed in sorted(seeds):
            run_config = variant_config(config, variant, seed)
            service = TrainingService(run_config, data)
            key = _coarse_key(service.config)
            with log_duration(f"ablation {variant.name} seed={seed}", logger):
                if key not in coarse:
                    coarse[key] = service.step0_coarse()
                _, reports = service.run(coarse=coarse[key])
            rows.append(AblationRow(
                variant=variant.name,
                seed=seed,
                use_gpa=variant.toggles.use_gpa,
                use_ctl=variant.toggles.use_ctl,
                use_tcr=variant.toggles.use_tcr,
                miou=reports[-1].eval.miou,
                align_scheme=service.config.align_scheme,
                triplet_on_pseudo=service.config.triplet_on_pseudo,
            ))

    table = AblationTable(rows=rows)
    for name, miou in table.mean_by_variant().items():
        logger.info(f"ablation {name}: mean mIoU {miou:.4f}")
    if output_dir is not None:
        ReportRepository().write_ablation(table, output_dir)
    return table


def ordering_holds(means: Dict[str, float]) -> bool:
    """
    The component ordering the pipeline is expected to reproduce on
    seed-averaged mIoU: full above both two-component GPA variants, and
    GPA+TCR above GPA only above source only.
    """
    return (
        means["full"] > means["gpa_ctl"]
        and means["full"] > means["gpa_tcr"] > means["gpa_only"] > means["source_only"]
    )
