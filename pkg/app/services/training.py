"""
Training Service

The coarse-to-fine adaptation pipeline:
- step 0 trains T_0 on source images aligned to random target references
  and color-jittered
- step k (k = 1..K-1) fine-tunes a copy of T_{k-1} with source
  segmentation, target segmentation on thresholded pseudo labels, the
  category triplet loss, and target consistency; pseudo labels and centers
  come from the frozen T_{k-1}
- run_pipeline chains the steps, writing a checkpoint and a step report
  after each one

Every random draw comes from a stream keyed by (seed, step, iteration,
purpose), so switching one component off does not shift another's draws.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from app.core.exceptions import AppError, ConfigError, DataIOError, EmptyInputError
from app.middleware.logging import log_duration
from app.models.segmodel import FrozenSegModel, SegModel, load_checkpoint, save_checkpoint
from app.repositories.manifest import ManifestRepository
from app.repositories.pseudo_labels import PseudoLabelRepository
from app.repositories.reports import ReportRepository
from app.schemas.dataset import DomainData
from app.schemas.image import RgbImage
from app.schemas.regularizers import CategoryCenters, PseudoLabelSet
from app.schemas.training import StepReport, TrainingConfig
from app.services.evaluation import evaluate
from app.services.imgproc import align_many, color_jitter, photometric_align
from app.services.regularizers import (
    center_distance_matrix,
    compute_centers,
    consistency_loss,
    generate_pseudo_labels,
    triplet_loss,
)
from app.tensorcore.kernels import cross_entropy_backward, cross_entropy_forward
from app.tensorcore.optim import sgd_step
from app.utils.enums import RngStream
from app.utils.helpers import derive_seed, stream_rng

logger = logging.getLogger(__name__)

REPORTS_FILE = "reports.jsonl"


def checkpoint_name(step_index: int) -> str:
    return f"step_{step_index}.ckpt"


def load_domain_data(
    source_manifest: Path,
    target_manifest: Path,
    eval_manifest: Optional[Path] = None,
) -> DomainData:
    repo = ManifestRepository()
    return DomainData(
        source=repo.load_split(source_manifest),
        target_train=repo.load_split(target_manifest),
        target_eval=repo.load_split(eval_manifest) if eval_manifest is not None else None,
    )


class LossMeter:
    """Running means of named loss terms; a term only counts iterations where it contributed."""

    def __init__(self):
        self.sums: Dict[str, float] = {}
        self.counts: Dict[str, int] = {}

    def update(self, name: str, value: float) -> None:
        self.sums[name] = self.sums.get(name, 0.0) + value
        self.counts[name] = self.counts.get(name, 0) + 1

    def mean(self, name: str) -> Optional[float]:
        count = self.counts.get(name, 0)
        return self.sums[name] / count if count else None

    def summary(self) -> str:
        return ", ".join(f"{k}={self.mean(k):.4f}" for k in self.sums)


class TrainingService:
    """
    Runs the pipeline for one TrainingConfig over one DomainData.

    Usage:
        service = TrainingService(config, data)
        model, reports = service.run(output_dir)
    """

    def __init__(self, config: TrainingConfig, data: DomainData):
        if data.source.count == 0 or data.target_train.count == 0:
            raise EmptyInputError("empty input: source and target manifests must list at least one image")
        if config.model.num_classes != data.num_categories:
            # an unset num_classes follows the data; an explicit one must agree with it
            if "num_classes" in config.model.model_fields_set:
                raise ConfigError(
                    f"model.num_classes={config.model.num_classes} but the dataset has {data.num_categories} categories"
                )
            config = config.model_copy(
                update={"model": config.model.model_copy(update={"num_classes": data.num_categories})}
            )
        self.config = config
        self.data = data

    # -------------------------
    # Sampling
    # -------------------------
    def _pick(self, count: int, step_index: int, iteration: int, stream: RngStream) -> int:
        return int(stream_rng(self.config.seed, step_index, iteration, stream).integers(count))

    def _source_sample(self, step_index: int, iteration: int) -> Tuple[np.ndarray, np.ndarray]:
        """Source image (aligned when GPA is on, then jittered) and its labels."""
        cfg = self.config
        index = self._pick(self.data.source.count, step_index, iteration, RngStream.SOURCE_PICK)
        image = self.data.source.images[index]
        if cfg.toggles.use_gpa:
            ref_index = self._pick(self.data.target_train.count, step_index, iteration, RngStream.REFERENCE_PICK)
            image = photometric_align(image, self.data.target_train.images[ref_index], cfg.beta, cfg.align_scheme)
        jitter_rng = stream_rng(cfg.seed, step_index, iteration, RngStream.SOURCE_JITTER)
        image = color_jitter(image, cfg.jitter, jitter_rng)
        return image.to_unit(), self.data.source.labels[index]

    def _aligned_source_set(self, step_index: int) -> List[RgbImage]:
        cfg = self.config
        images = self.data.source.images
        if not cfg.toggles.use_gpa:
            return list(images)
        rng = stream_rng(cfg.seed, step_index, 0, RngStream.CENTER_REFERENCE)
        refs = [self.data.target_train.images[int(i)] for i in rng.integers(self.data.target_train.count, size=len(images))]
        return align_many(images, refs, cfg.beta, cfg.align_scheme, cfg.threads)

    # -------------------------
    # Step 0
    # -------------------------
    def step0_coarse(self) -> Tuple[FrozenSegModel, StepReport]:
        """Train T_0 on aligned (if enabled) and jittered source images."""
        cfg = self.config
        model = SegModel.initialize(cfg.model, derive_seed(cfg.seed, 0, 0, int(RngStream.INIT)))
        meter = LossMeter()

        for iteration in range(cfg.U):
            image, labels = self._source_sample(0, iteration)
            fwd = model.forward(image)
            ce = cross_entropy_forward(fwd.logits, labels)
            model.backward(fwd, cfg.loss_weights.seg * cross_entropy_backward(ce))
            lr = sgd_step(model.parameters, cfg.step0_optimizer, iteration)
            meter.update("seg", ce.loss)
            if (iteration + 1) % cfg.log_interval == 0:
                logger.info(f"step 0 iter {iteration + 1}/{cfg.U} lr={lr:.2e} {meter.summary()}")

        frozen = model.freeze()
        report = StepReport(step=0, iterations=cfg.U, mean_loss_seg=meter.mean("seg"), eval=self._evaluate(frozen))
        return frozen, report

    # -------------------------
    # Steps 1..K-1
    # -------------------------
    def prepare_step(self, prev: FrozenSegModel, step_index: int) -> Tuple[PseudoLabelSet, Optional[CategoryCenters]]:
        """Pseudo labels and (when the triplet loss is on) centers, both from T_prev only."""
        cfg = self.config
        pseudo = generate_pseudo_labels(prev, self.data.target_train.images, cfg.thresholds)
        centers = None
        if cfg.toggles.use_ctl:
            aligned = self._aligned_source_set(step_index)
            centers = compute_centers(
                ((prev.forward(img.to_unit()).features, lab) for img, lab in zip(aligned, self.data.source.labels)),
                cfg.model.num_classes,
            )
            logger.debug(f"step {step_index} center distances: {center_distance_matrix(centers)}")
        return pseudo, centers

    def step_k(self, prev: FrozenSegModel, step_index: int) -> Tuple[FrozenSegModel, StepReport, PseudoLabelSet]:
        """Fine-tune a copy of T_prev; T_prev itself is never modified."""
        if not isinstance(prev, FrozenSegModel):
            raise TypeError("step_k consumes a frozen snapshot of the previous model")
        cfg = self.config
        weights = cfg.loss_weights
        pseudo, centers = self.prepare_step(prev, step_index)
        thresholds_before = pseudo.thresholds.tobytes()
        centers_before = centers.checksum() if centers is not None else None

        model = prev.thaw()
        meter = LossMeter()
        for iteration in range(cfg.U):
            # source: segmentation (+ triplet on ground truth)
            image, labels = self._source_sample(step_index, iteration)
            fwd = model.forward(image)
            ce = cross_entropy_forward(fwd.logits, labels)
            grad_features = None
            if centers is not None:
                loss, grad_features, count = triplet_loss(fwd.features, labels, centers, cfg.triplet)
                grad_features = weights.triplet * grad_features
                if count:
                    meter.update("triplet", loss)
            model.backward(fwd, weights.seg * cross_entropy_backward(ce), grad_features)
            meter.update("seg", ce.loss)

            # target: segmentation on valid pseudo labels, clean image
            t_index = self._pick(self.data.target_train.count, step_index, iteration, RngStream.TARGET_PICK)
            target = self.data.target_train.images[t_index]
            target_pseudo = pseudo.select(t_index)
            fwd_t = model.forward(target.to_unit())
            ce_t = cross_entropy_forward(fwd_t.logits, target_pseudo.labels, ignore_mask=~target_pseudo.valid)
            grad_features_t = None
            if centers is not None and cfg.triplet_on_pseudo:
                skip = ~target_pseudo.valid | ~centers.present[target_pseudo.labels]
                loss, grad_features_t, count = triplet_loss(
                    fwd_t.features, target_pseudo.labels, centers, cfg.triplet, ignore_mask=skip
                )
                grad_features_t = weights.triplet * grad_features_t
                if count:
                    meter.update("triplet_target", loss)
            if ce_t.count or grad_features_t is not None:
                model.backward(fwd_t, weights.seg * cross_entropy_backward(ce_t), grad_features_t)
            if ce_t.count:
                meter.update("target_seg", ce_t.loss)

            # target: consistency between clean pseudo labels and the jittered view
            if cfg.toggles.use_tcr:
                jitter_rng = stream_rng(cfg.seed, step_index, iteration, RngStream.TARGET_JITTER)
                jittered = color_jitter(target, cfg.jitter, jitter_rng)
                fwd_j = model.forward(jittered.to_unit())
                loss, grad_logits, count = consistency_loss(target_pseudo, fwd_j.logits)
                if count:
                    model.backward(fwd_j, weights.consistency * grad_logits)
                    meter.update("consistency", loss)

            lr = sgd_step(model.parameters, cfg.finetune_optimizer, iteration)
            if (iteration + 1) % cfg.log_interval == 0:
                logger.info(f"step {step_index} iter {iteration + 1}/{cfg.U} lr={lr:.2e} {meter.summary()}")

        if pseudo.thresholds.tobytes() != thresholds_before or (
            centers is not None and centers.checksum() != centers_before
        ):
            raise AppError(f"step {step_index}: centers or thresholds changed during the step")

        frozen = model.freeze()
        report = StepReport(
            step=step_index,
            iterations=cfg.U,
            mean_loss_seg=meter.mean("seg"),
            mean_loss_triplet=meter.mean("triplet"),
            mean_loss_consistency=meter.mean("consistency"),
            mean_loss_target_seg=meter.mean("target_seg"),
            thresholds=[float(t) for t in pseudo.thresholds],
            valid_fraction_by_category=pseudo.valid_fraction_by_category(),
            eval=self._evaluate(frozen),
        )
        return frozen, report, pseudo

    def _evaluate(self, model: FrozenSegModel):
        if self.data.target_eval is None:
            return None
        return evaluate(model, self.data.target_eval)

    # -------------------------
    # Whole pipeline
    # -------------------------
    def run(
        self,
        output_dir: Optional[Path] = None,
        resume: bool = False,
        export_pseudo: bool = False,
        coarse: Optional[Tuple[FrozenSegModel, StepReport]] = None,
    ) -> Tuple[FrozenSegModel, List[StepReport]]:
        """
        Step 0 then K-1 fine-tuning steps. With an output directory, each
        step's checkpoint and the report list are written as soon as the
        step ends; with resume, steps whose checkpoint and report already
        exist are loaded instead of retrained. `coarse` supplies an already
        trained T_0 and its report (it must come from the same step-0 config).
        """
        cfg = self.config
        reports_repo = ReportRepository(output_dir) if output_dir is not None else None
        previous: List[StepReport] = []
        if resume and output_dir is not None and (Path(output_dir) / REPORTS_FILE).is_file():
            previous = reports_repo.read_step_reports(REPORTS_FILE)

        reports: List[StepReport] = []
        model: Optional[FrozenSegModel] = None
        for step_index in range(cfg.K):
            ckpt = Path(output_dir) / checkpoint_name(step_index) if output_dir is not None else None
            if resume and ckpt is not None and ckpt.is_file() and step_index < len(previous):
                try:
                    model = load_checkpoint(ckpt).freeze()
                except DataIOError as e:
                    raise DataIOError(f"step {step_index}: {e.detail}")
                reports.append(previous[step_index])
                logger.info(f"step {step_index}: resumed from {ckpt}")
                continue

            with log_duration(f"step {step_index}", logger):
                if step_index == 0:
                    model, report = coarse if coarse is not None else self.step0_coarse()
                else:
                    model, report, pseudo = self.step_k(model, step_index)
                    if export_pseudo and output_dir is not None:
                        PseudoLabelRepository(output_dir).save(pseudo, f"pseudo/step_{step_index}", "target")
            reports.append(report)

            if output_dir is not None:
                try:
                    save_checkpoint(model, ckpt)
                    reports_repo.write_step_reports(reports, REPORTS_FILE)
                except (DataIOError, OSError) as e:
                    raise DataIOError(f"step {step_index}: could not write outputs to {output_dir}: {e}")
        return model, reports


# ----------------------------------------------------
# Functional entry points
# ----------------------------------------------------
def step0_coarse(config: TrainingConfig, data: DomainData) -> FrozenSegModel:
    return TrainingService(config, data).step0_coarse()[0]


def step_k(prev: FrozenSegModel, config: TrainingConfig, data: DomainData, step_index: int) -> FrozenSegModel:
    return TrainingService(config, data).step_k(prev, step_index)[0]


def run_pipeline(
    config: TrainingConfig,
    data: DomainData,
    output_dir: Optional[Path] = None,
    resume: bool = False,
    export_pseudo: bool = False,
) -> Tuple[FrozenSegModel, List[StepReport]]:
    with log_duration(f"pipeline K={config.K} U={config.U} seed={config.seed}", logger):
        return TrainingService(config, data).run(output_dir, resume, export_pseudo)
