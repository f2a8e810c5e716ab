"""
Pipeline stages: one function per CLI command.

Stages communicate only through files below the experiment root, so each
command can run in its own process (one fold per process if desired).
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Sequence

import numpy as np

from core.annotations import read_manifest
from core.exceptions import ConfigurationError, DataValidationError
from core.folds import FoldSplit, split_from_manifest
from core.schema import Domain, ImageSample
from engine import config as engine_config
from engine.services.checkpoints import load_detector, load_generator
from engine.services.detector_training import train_detector as train_detector_folds
from engine.services.fusion import fuse_retrain as fuse_retrain_fold
from engine.services.gan_training import train_gan as train_gan_folds
from engine.services.translation_service import translate_dataset
from evaluation.masks import evaluate_mask_pairs
from evaluation.reports import EvaluationReport, build_report, find_reports, write_report, write_table
from evaluation.scoring import evaluate_annotation_files, evaluate_detector
from synthgen import config as synthgen_config
from synthgen.generator import SceneParams, generate_dataset

from . import config
from .loader import to_plain, workspace_path, write_resolved
from .schema import EvalTarget, ExperimentConfig

logger = logging.getLogger(__name__)


@dataclass
class StageResult:
    command: str
    outputs: List[str] = field(default_factory=list)
    summary: Dict[str, object] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"success": True, "command": self.command, "outputs": self.outputs, "summary": self.summary}


class ArtifactLayout:
    """
    Where each stage reads and writes below the experiment root.

    Detectors are shared by every experiment id under one root; generator,
    translation and fusion artifacts are kept per experiment id.
    """

    def __init__(self, cfg: ExperimentConfig):
        self.root = workspace_path(cfg.experiment.root)
        self.experiment_id = cfg.experiment.id

    @staticmethod
    def _fold(fold: int) -> str:
        return config.FOLD_DIR.format(fold=fold)

    def detector_root(self, domain: str) -> Path:
        return self.root / config.DETECTOR_DIR / domain

    def detector_checkpoint(self, domain: str, fold: int) -> Path:
        return self.detector_root(domain) / self._fold(fold) / engine_config.BEST_CHECKPOINT

    def gan_root(self) -> Path:
        return self.root / config.GAN_DIR / self.experiment_id

    def gan_checkpoint(self, fold: int) -> Path:
        return self.gan_root() / self._fold(fold) / engine_config.LAST_CHECKPOINT

    def translated_dir(self, fold: int) -> Path:
        return self.root / config.TRANSLATED_DIR / self.experiment_id / self._fold(fold)

    def fusion_root(self) -> Path:
        return self.root / config.FUSION_DIR / self.experiment_id

    def fusion_dir(self, fold: int) -> Path:
        return self.fusion_root() / self._fold(fold)

    def eval_root(self) -> Path:
        return self.root / config.EVAL_DIR

    def reports_dir(self) -> Path:
        return self.root / config.REPORTS_DIR


def domain_samples(cfg: ExperimentConfig, domain: str) -> List[ImageSample]:
    samples = [s for s in read_manifest(workspace_path(cfg.data.manifest)) if s.domain is Domain(domain)]
    if not samples:
        raise ConfigurationError(f"Manifest {cfg.data.manifest} has no {domain} images")
    return samples


def held_out_samples(cfg: ExperimentConfig) -> List[ImageSample]:
    if not cfg.data.test_manifest:
        raise ConfigurationError("data.test_manifest is required for this stage")
    return read_manifest(workspace_path(cfg.data.test_manifest))


def selected_folds(cfg: ExperimentConfig, split: FoldSplit) -> List[int]:
    folds = list(range(split.k)) if cfg.experiment.folds is None else list(cfg.experiment.folds)
    outside = [f for f in folds if f >= split.k]
    if outside:
        raise ConfigurationError(f"Folds {outside} do not exist (k={split.k})")
    return folds


def translated_samples(layout: ArtifactLayout, fold: int) -> List[ImageSample]:
    return read_manifest(layout.translated_dir(fold) / engine_config.FAKE_MANIFEST)


def _pick(samples: Sequence[ImageSample], indices: Sequence[int]) -> List[ImageSample]:
    return [samples[i] for i in indices]


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def synth_gen(cfg: ExperimentConfig) -> StageResult:
    manifest = workspace_path(cfg.data.manifest)
    if manifest.name != synthgen_config.MANIFEST_NAME:
        raise ConfigurationError(f"synth-gen writes {synthgen_config.MANIFEST_NAME}; data.manifest is {manifest.name}")
    if cfg.synth.n_test and cfg.data.test_manifest:
        expected = manifest.parent / synthgen_config.TEST_MANIFEST_NAME
        if workspace_path(cfg.data.test_manifest) != expected:
            raise ConfigurationError(f"synth-gen writes the test manifest to {expected}")
    dataset = generate_dataset(
        np.random.default_rng(cfg.seed),
        SceneParams(width=cfg.data.width, height=cfg.data.height, n_sutures=cfg.synth.n_sutures),
        n_images=cfg.synth.n_images,
        out_dir=manifest.parent,
        n_groups=cfg.synth.n_groups,
        k=cfg.synth.k,
        n_test=cfg.synth.n_test,
    )
    write_resolved(cfg, manifest.parent)
    outputs = [str(dataset.manifest_path)]
    if dataset.test_manifest_path:
        outputs.append(str(dataset.test_manifest_path))
    return StageResult("synth-gen", outputs, {"images": len(dataset.samples), "test_images": len(dataset.test_samples)})


def train_detector(cfg: ExperimentConfig) -> StageResult:
    layout = ArtifactLayout(cfg)
    outputs, summary = [], {}
    for domain in cfg.data.domains:
        samples = domain_samples(cfg, domain)
        split = split_from_manifest(samples)
        results = train_detector_folds(
            samples, split, cfg.detector, cfg.train.detector, layout.detector_root(domain),
            folds=selected_folds(cfg, split), experiment_id=cfg.experiment.id, domain=domain,
            resume=cfg.experiment.resume,
        )
        write_resolved(cfg, layout.detector_root(domain))
        outputs.extend(str(r.best_path) for r in results)
        summary[domain] = {str(r.fold): r.best_val_loss for r in results}
    return StageResult("train-detector", outputs, summary)


def train_gan(cfg: ExperimentConfig) -> StageResult:
    layout = ArtifactLayout(cfg)
    sim, real = domain_samples(cfg, Domain.SIM.value), domain_samples(cfg, Domain.OR.value)
    sim_split, or_split = split_from_manifest(sim), split_from_manifest(real)
    folds = selected_folds(cfg, sim_split)
    detector_paths = {
        fold: {domain: layout.detector_checkpoint(domain, fold) for domain in (Domain.SIM.value, Domain.OR.value)}
        for fold in folds
    }
    results = train_gan_folds(
        sim, real, sim_split, or_split, cfg.gan, cfg.gan_weights, cfg.det_weights.build(), cfg.train.gan,
        layout.gan_root(), detector_paths=detector_paths, folds=folds, experiment_id=cfg.experiment.id,
        resume=cfg.experiment.resume, descriptor=to_plain(cfg),
    )
    write_resolved(cfg, layout.gan_root())
    return StageResult(
        "train-gan", [str(r.last_path) for r in results], {str(r.fold): r.epochs_completed for r in results}
    )


def translate(cfg: ExperimentConfig) -> StageResult:
    layout = ArtifactLayout(cfg)
    sim = domain_samples(cfg, Domain.SIM.value)
    outputs = []
    for fold in selected_folds(cfg, split_from_manifest(sim)):
        generator = load_generator(layout.gan_checkpoint(fold), "sim2or", device=cfg.device)
        out_dir = layout.translated_dir(fold)
        translate_dataset(generator, sim, out_dir, device=cfg.device)
        write_resolved(cfg, out_dir)
        outputs.append(str(out_dir / engine_config.FAKE_MANIFEST))
    return StageResult("translate", outputs, {"images_per_fold": len(sim)})


def _detector_evaluations(cfg: ExperimentConfig, folds, checkpoint_for: Callable, samples_for: Callable, overlay_root):
    evaluations = []
    for fold in folds:
        model = load_detector(checkpoint_for(fold), device=cfg.device)
        evaluations.extend(evaluate_detector(
            model, samples_for(fold), fold=fold, threshold=cfg.eval.threshold, radius=cfg.eval.radius,
            batch_size=cfg.eval.batch_size, device=cfg.device,
            overlay_dir=(overlay_root / config.FOLD_DIR.format(fold=fold)) if cfg.eval.overlays else None,
        ))
    return evaluations


def evaluate(cfg: ExperimentConfig) -> StageResult:
    layout = ArtifactLayout(cfg)
    target = cfg.eval.target
    name = cfg.eval.name or f"{cfg.experiment.id}-{target.value}"
    out_dir = layout.eval_root() / name
    overlay_root = out_dir / "overlays"
    protocol = {"radius": cfg.eval.radius, "threshold": cfg.eval.threshold, "seed": cfg.seed}

    if target is EvalTarget.REAL:
        domain = cfg.eval.domain
        samples = domain_samples(cfg, domain)
        split = split_from_manifest(samples)
        evaluations = _detector_evaluations(
            cfg, selected_folds(cfg, split),
            lambda fold: layout.detector_checkpoint(domain, fold),
            lambda fold: _pick(samples, split.val(fold)),
            overlay_root,
        )
        report = build_report(name, target.value, evaluations, domain=domain, **protocol)
    elif target is EvalTarget.TRANSLATED:
        folds = selected_folds(cfg, split_from_manifest(domain_samples(cfg, Domain.SIM.value)))

        def fake_validation(fold):
            fakes = translated_samples(layout, fold)
            return _pick(fakes, split_from_manifest(fakes).val(fold))

        evaluations = _detector_evaluations(
            cfg, folds, lambda fold: layout.detector_checkpoint(Domain.OR.value, fold), fake_validation, overlay_root,
        )
        report = build_report(name, target.value, evaluations, variant=cfg.det_weights.build().to_dict(), **protocol)
    elif target in (EvalTarget.HELD_OUT, EvalTarget.FUSED):
        test = held_out_samples(cfg)
        folds = selected_folds(cfg, split_from_manifest(domain_samples(cfg, Domain.OR.value)))
        def checkpoint_for(fold):
            if target is EvalTarget.FUSED:
                return layout.fusion_dir(fold) / engine_config.BEST_CHECKPOINT
            return layout.detector_checkpoint(Domain.OR.value, fold)

        evaluations = _detector_evaluations(cfg, folds, checkpoint_for, lambda fold: test, overlay_root)
        report = build_report(name, target.value, evaluations, **protocol)
    else:
        samples = domain_samples(cfg, cfg.eval.domain)
        if cfg.experiment.folds is not None:
            samples = [s for s in samples if s.fold_id in cfg.experiment.folds]
        predictions_dir = workspace_path(cfg.eval.predictions)
        predicted = [predictions_dir / Path(s.annotation_path or s.path).with_suffix(".json").name for s in samples]
        if target is EvalTarget.ANNOTATIONS:
            evaluations = evaluate_annotation_files(samples, predicted, radius=cfg.eval.radius)
            report = build_report(name, target.value, evaluations, predictions=str(predictions_dir), **protocol)
        else:
            report = _mask_report(cfg, name, samples, predicted)

    path = write_report(report, out_dir)
    write_resolved(cfg, out_dir)
    return StageResult("evaluate", [str(path)], {"name": name, "mean": report.summary.mean, "std": report.summary.std})


def _mask_report(cfg: ExperimentConfig, name: str, samples: Sequence[ImageSample], predicted) -> EvaluationReport:
    sizes = {s.size for s in samples}
    if len(sizes) != 1:
        raise DataValidationError(f"Mask comparison needs one image size, got {sorted(sizes)}")
    pairs, summary = evaluate_mask_pairs(
        predicted, [s.annotation_path for s in samples], sizes.pop(), fold_ids=[s.fold_id for s in samples]
    )
    return EvaluationReport(
        name=name, target=EvalTarget.MASKS.value, summary=summary,
        mask_pairs=[p.to_dict() for p in pairs], settings={"seed": cfg.seed},
    )


def fuse_retrain(cfg: ExperimentConfig) -> StageResult:
    layout = ArtifactLayout(cfg)
    real = domain_samples(cfg, Domain.OR.value)
    split = split_from_manifest(real)
    test = held_out_samples(cfg)
    outputs, summary = [], {}
    for fold in selected_folds(cfg, split):
        fakes = translated_samples(layout, fold)
        result = fuse_retrain_fold(
            _pick(real, split.train(fold)),
            _pick(fakes, split_from_manifest(fakes).train(fold)),
            test, cfg.detector, cfg.train.detector, layout.fusion_dir(fold),
            val=_pick(real, split.val(fold)), fold=fold, experiment_id=cfg.experiment.id,
        )
        outputs.append(str(result.best_path))
        summary[str(fold)] = {"n_train": result.n_train, "best_val_loss": result.best_val_loss}
    write_resolved(cfg, layout.fusion_root())
    return StageResult("fuse-retrain", outputs, summary)


def report(cfg: ExperimentConfig) -> StageResult:
    layout = ArtifactLayout(cfg)
    reports = find_reports(layout.eval_root())
    path = write_table(reports, layout.reports_dir() / config.TABLE_FILE)
    write_resolved(cfg, layout.reports_dir())
    return StageResult("report", [str(path)], {"experiments": [r.name for r in reports]})


STAGES: Dict[str, Callable[[ExperimentConfig], StageResult]] = {
    "synth-gen": synth_gen,
    "train-detector": train_detector,
    "train-gan": train_gan,
    "translate": translate,
    "evaluate": evaluate,
    "fuse-retrain": fuse_retrain,
    "report": report,
}


def run_stage(command: str, cfg: ExperimentConfig) -> StageResult:
    if command not in STAGES:
        raise ConfigurationError(f"Unknown command {command!r}; choose from {list(config.COMMANDS)}")
    logger.info(f"[{command.upper()}] experiment {cfg.experiment.id!r}, seed {cfg.seed}")
    result = STAGES[command](cfg)
    logger.info(f"[{command.upper()}] done: {len(result.outputs)} output(s)")
    return result
