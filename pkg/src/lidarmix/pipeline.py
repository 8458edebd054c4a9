"""Two-stage augmentation pipeline over scene collections.

Stage 1 distribution-matches the source scenes once, then trains on a
mix of matched-source, target-labeled, and polar-mixed samples. Stage 2
pseudo-labels the unlabeled target scenes with the stage-1 oracle acting
as a frozen teacher, perturbs them adversarially, and evaluates the
student on mixup pairs with a weighted consistency term.

The reference oracle has no trainable parameters, so "update the model"
steps are realized as loss evaluation plus report accumulation; a real
detector plugs in via the DetectorOracle / GradientProvider contracts.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .adversarial import (
    OneSidedEmpty,
    PerturbationConfig,
    adversarial_perturb_detailed,
    advmix_sample,
    consistency_loss,
)
from .geometry import DomainTag, Scene, apply_rigid_transform
from .oracle import DetectorOracle, GridClusterOracle
from .sector_mix import SectorParams, polar_mix, sample_sectors, targetmix_sample
from .sensor import NUSCENES_32, WAYMO_64, SensorSpec, lidar_distribution_match

logger = logging.getLogger("lidarmix.pipeline")


class EmptyDataset(ValueError):
    """A stage was handed an empty scene collection it cannot run without."""


@dataclass
class DatasetBundle:
    source: list[Scene]
    target_labeled: list[Scene]
    target_unlabeled: list[Scene]


@dataclass(frozen=True)
class PipelineConfig:
    source_spec: SensorSpec = WAYMO_64
    target_spec: SensorSpec = NUSCENES_32
    p_tm: float = 0.4
    p_am: float = 0.6
    lam: float = 1.0
    perturbation: PerturbationConfig = PerturbationConfig()
    sectors: SectorParams = SectorParams()
    epochs_tm: int = 1
    epochs_am: int = 1
    pseudo_score_threshold: float = 0.3
    seed: int = 0
    smooth_l1_knee: float = 1.0
    random_stride: bool = False
    augment_labeled: bool = True

    def __post_init__(self):
        for name in ("p_tm", "p_am", "pseudo_score_threshold"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if self.lam < 0:
            raise ValueError(f"lambda must be non-negative, got {self.lam}")
        if self.epochs_tm < 1 or self.epochs_am < 1:
            raise ValueError("epoch counts must be >= 1")
        if not self.smooth_l1_knee > 0:
            raise ValueError(f"smooth_l1_knee must be > 0, got {self.smooth_l1_knee}")


@dataclass
class EpochStats:
    epoch: int
    scenes_processed: int = 0
    mixed_scenes: int = 0
    mixed_fraction: float = 0.0
    mean_detection_loss: float = 0.0
    mean_consistency_loss: float = 0.0
    mean_total_loss: float = 0.0
    consistency_samples: int = 0
    consistency_skipped: int = 0
    points_total: int = 0
    points_candidates: int = 0
    points_perturbed: int = 0
    points_added: int = 0
    points_removed: int = 0


@dataclass
class StageReport:
    stage: str
    seed: int
    epochs: list[EpochStats] = field(default_factory=list)
    pseudo_boxes_kept: int = 0
    pseudo_boxes_discarded: int = 0
    max_delta_norm_error: float = 0.0

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "seed": self.seed,
            "pseudo_boxes_kept": self.pseudo_boxes_kept,
            "pseudo_boxes_discarded": self.pseudo_boxes_discarded,
            "max_delta_norm_error": self.max_delta_norm_error,
            "epochs": [vars(e).copy() for e in self.epochs],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


@dataclass
class PseudoLabelStats:
    kept: int = 0
    discarded: int = 0


def _stage_rng(seed: int, stage_index: int) -> np.random.Generator:
    # mask so signed 64-bit seeds stay valid SeedSequence entropy
    entropy = seed & 0xFFFFFFFFFFFFFFFF
    return np.random.default_rng(np.random.SeedSequence(entropy, spawn_key=(stage_index,)))


def _detection_loss(oracle: DetectorOracle, scene: Scene) -> float:
    if not scene.boxes:
        return 0.0
    loss, _ = oracle.loss_and_gradient(scene, scene.boxes)
    return float(loss)


def _log_epoch(stage: str, stats: EpochStats) -> None:
    logger.info(
        "stage=%s epoch=%d scenes=%d mixed=%.3f det_loss=%.6f cons_loss=%.6f "
        "perturbed=%d added=%d removed=%d",
        stage,
        stats.epoch,
        stats.scenes_processed,
        stats.mixed_fraction,
        stats.mean_detection_loss,
        stats.mean_consistency_loss,
        stats.points_perturbed,
        stats.points_added,
        stats.points_removed,
    )


def run_targetmix_stage(
    cfg: PipelineConfig,
    source_scenes: Sequence[Scene],
    target_labeled_scenes: Sequence[Scene],
    oracle: DetectorOracle,
) -> StageReport:
    """Stage 1: match all source scenes to the target sensor once, then
    per epoch walk a seeded permutation of the source + target slots,
    drawing a polar-mixed sample with probability p_tm and the slot's own
    scene otherwise, and evaluate the oracle's detection loss on each."""
    if not source_scenes or not target_labeled_scenes:
        raise EmptyDataset("stage 1 needs non-empty source and target-labeled sets")
    rng = _stage_rng(cfg.seed, 1)
    matched = [
        lidar_distribution_match(
            s, cfg.source_spec, cfg.target_spec, rng=rng, random_stride=cfg.random_stride
        )
        for s in source_scenes
    ]
    n_s, n_t = len(matched), len(target_labeled_scenes)
    report = StageReport("targetmix", cfg.seed)
    for epoch in range(1, cfg.epochs_tm + 1):
        stats = EpochStats(epoch=epoch)
        losses = []
        for slot in rng.permutation(n_s + n_t):
            if slot < n_s:
                partner = target_labeled_scenes[int(rng.integers(n_t))]
                scene = targetmix_sample(rng, cfg.p_tm, matched[slot], partner, cfg.sectors)
            else:
                own = target_labeled_scenes[slot - n_s]
                if rng.random() < cfg.p_tm:
                    mask = sample_sectors(
                        rng, cfg.sectors.k, cfg.sectors.min_width, cfg.sectors.max_width
                    )
                    scene = polar_mix(matched[int(rng.integers(n_s))], own, mask)
                else:
                    scene = own
            if scene.domain_tag is DomainTag.MIXED:
                stats.mixed_scenes += 1
            losses.append(_detection_loss(oracle, scene))
            stats.scenes_processed += 1
            stats.points_total += scene.n_points
        stats.mixed_fraction = stats.mixed_scenes / stats.scenes_processed
        stats.mean_detection_loss = float(np.mean(losses))
        stats.mean_total_loss = stats.mean_detection_loss
        report.epochs.append(stats)
        _log_epoch("targetmix", stats)
    return report


def generate_pseudo_labels(
    oracle: DetectorOracle,
    unlabeled_scenes: Sequence[Scene],
    threshold: float,
    stats: PseudoLabelStats | None = None,
) -> list[Scene]:
    """Attach the oracle's predictions with score >= threshold to each
    scene; scenes stay TARGET_UNLABELED with the pseudo flag set."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    annotated = []
    for scene in unlabeled_scenes:
        preds = oracle.predict(scene)
        kept = [b for b in preds if b.score is not None and b.score >= threshold]
        if stats is not None:
            stats.kept += len(kept)
            stats.discarded += len(preds) - len(kept)
        annotated.append(
            Scene(scene.points.copy(), kept, DomainTag.TARGET_UNLABELED, pseudo_labeled=True)
        )
    return annotated


def _random_rigid_params(rng: np.random.Generator) -> tuple[bool, bool, float, float]:
    return (
        bool(rng.random() < 0.5),
        bool(rng.random() < 0.5),
        float(rng.uniform(-math.pi / 4, math.pi / 4)),
        float(rng.uniform(0.95, 1.05)),
    )


def run_advmix_stage(
    cfg: PipelineConfig,
    target_labeled: Sequence[Scene],
    pseudo_labeled: Sequence[Scene],
    teacher: DetectorOracle,
    student: DetectorOracle,
) -> StageReport:
    """Stage 2: per sample, perturb an unlabeled scene adversarially with
    the frozen teacher as gradient provider, form the (AM, PM) branch pair
    (mixup with a labeled scene with probability p_am), and evaluate the
    student's detection losses plus the weighted consistency term.

    The random rigid-transform augmentation is gated to target-labeled
    scenes only; one-sided-empty consistency samples are skipped.
    """
    if not target_labeled:
        raise EmptyDataset("stage 2 needs a non-empty target-labeled set")
    rng = _stage_rng(cfg.seed, 2)
    n_tl, n_tu = len(target_labeled), len(pseudo_labeled)
    report = StageReport("advmix", cfg.seed)
    report.pseudo_boxes_kept = sum(len(s.boxes) for s in pseudo_labeled)
    for epoch in range(1, cfg.epochs_am + 1):
        stats = EpochStats(epoch=epoch)
        det_losses = []
        total_losses = []
        cons_values = []
        order = rng.permutation(n_tl + n_tu) if n_tu > 0 else np.empty(0, dtype=np.intp)
        for slot in order:
            if slot < n_tl:
                labeled = target_labeled[slot]
                unlabeled = pseudo_labeled[int(rng.integers(n_tu))]
            else:
                unlabeled = pseudo_labeled[slot - n_tl]
                labeled = target_labeled[int(rng.integers(n_tl))]
            if cfg.augment_labeled:
                labeled = apply_rigid_transform(labeled, *_random_rigid_params(rng))
            adv, outcome = adversarial_perturb_detailed(
                unlabeled, unlabeled.boxes, teacher, cfg.perturbation, rng
            )
            stats.points_total += unlabeled.n_points
            stats.points_candidates += outcome.candidates
            stats.points_perturbed += outcome.translated
            stats.points_added += outcome.added
            stats.points_removed += outcome.removed
            report.max_delta_norm_error = max(
                report.max_delta_norm_error, outcome.max_norm_deviation
            )

            scene_am, scene_pm, mixed = advmix_sample(rng, cfg.p_am, labeled, adv, unlabeled)
            if mixed:
                stats.mixed_scenes += 1
            det = _detection_loss(student, scene_am) + _detection_loss(student, scene_pm)
            det_losses.append(det)
            try:
                cons = consistency_loss(student.predict(scene_am), student.predict(scene_pm))
                cons_values.append(cons)
                total_losses.append(det + cfg.lam * cons)
            except OneSidedEmpty:
                stats.consistency_skipped += 1
                total_losses.append(det)
            stats.scenes_processed += 1
        if stats.scenes_processed:
            stats.mixed_fraction = stats.mixed_scenes / stats.scenes_processed
            stats.mean_detection_loss = float(np.mean(det_losses))
            stats.mean_total_loss = float(np.mean(total_losses))
        if cons_values:
            stats.mean_consistency_loss = float(np.mean(cons_values))
            stats.consistency_samples = len(cons_values)
        report.epochs.append(stats)
        _log_epoch("advmix", stats)
    return report


def run_full(
    cfg: PipelineConfig, datasets: DatasetBundle, oracle: DetectorOracle | None = None
) -> tuple[StageReport, StageReport]:
    """Stage 1, pseudo-labeling, then stage 2, with the stage-1 oracle
    serving as the frozen teacher and the student cloned from it."""
    teacher = oracle if oracle is not None else GridClusterOracle(smooth_l1_knee=cfg.smooth_l1_knee)
    report_tm = run_targetmix_stage(cfg, datasets.source, datasets.target_labeled, teacher)
    stats = PseudoLabelStats()
    pseudo = generate_pseudo_labels(
        teacher, datasets.target_unlabeled, cfg.pseudo_score_threshold, stats
    )
    student = teacher.clone() if hasattr(teacher, "clone") else teacher
    report_am = run_advmix_stage(cfg, datasets.target_labeled, pseudo, teacher, student)
    report_am.pseudo_boxes_kept = stats.kept
    report_am.pseudo_boxes_discarded = stats.discarded
    logger.info(
        "pipeline done: pseudo kept=%d discarded=%d", stats.kept, stats.discarded
    )
    return report_tm, report_am
