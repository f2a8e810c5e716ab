import tempfile
from pathlib import Path

import numpy as np
import torch
from django.test import SimpleTestCase, TestCase

from core.annotations import read_manifest
from core.augmentation import AugmentationConfig
from core.exceptions import CheckpointError, ConfigurationError, DataValidationError, LeakageError, MissingArtifactError
from core.folds import split_from_manifest
from core.schema import Domain
from core.utils import parameter_checksum
from detcyclegan.losses import DetLossWeights
from detector.network import DetectorConfig, build_detector
from synthgen.generator import SceneParams, generate_dataset
from translation.losses import GanLossWeights
from translation.buffer import ReplayBuffer
from translation.networks import DiscriminatorConfig, GanConfig, GeneratorConfig, build_gan_models

from .models import TrainRun
from .schema import DetectorTrainingConfig, GanTrainingConfig
from .services.checkpoints import load_checkpoint, load_detector, load_generator, save_checkpoint
from .services.detector_training import build_optimizer, build_scheduler, fit_detector, train_detector
from .services.fusion import fuse_retrain
from .services.gan_training import fit_gan, train_gan
from .services.translation_service import translate_dataset


class PickledPayload:
    """Arbitrary object that must never be unpickled from a checkpoint."""


def _detector_cfg():
    return DetectorConfig(depth=2, base_channels=2, dropout=(0.3, 0.4, 0.5))


def _gan_cfg():
    return GanConfig(
        generator=GeneratorConfig(residual_filters=8, residual_blocks=1),
        discriminator=DiscriminatorConfig(base_filters=4),
    )


class SyntheticDataMixin:
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)
        dataset = generate_dataset(
            np.random.default_rng(0), SceneParams(width=32, height=32, n_sutures=(1, 3)),
            n_images=8, out_dir=self.root / "data", n_groups=2, n_test=2,
        )
        self.sim = [s for s in dataset.samples if s.domain is Domain.SIM]
        self.real = [s for s in dataset.samples if s.domain is Domain.OR]
        self.test = dataset.test_samples

    def tearDown(self):
        self.tmp.cleanup()


class CheckpointTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = Path(self.tmp.name) / "ckpt" / "best.pt"

    def tearDown(self):
        self.tmp.cleanup()

    def test_detector_round_trip(self):
        model = build_detector(_detector_cfg(), seed=4)
        save_checkpoint(self.path, "detector", {"detector": model.state_dict()}, _detector_cfg().to_dict(), epoch=3, seed=1)
        loaded = load_detector(self.path)
        self.assertEqual(parameter_checksum(loaded), parameter_checksum(model))
        self.assertFalse(loaded.trainable)
        self.assertEqual(load_checkpoint(self.path)["epoch"], 3)

    def test_generator_round_trip(self):
        models = build_gan_models(_gan_cfg(), seed=2)
        save_checkpoint(
            self.path, "gan", {name: m.state_dict() for name, m in models.modules().items()},
            _gan_cfg().to_dict(), epoch=0, seed=0,
        )
        generator = load_generator(self.path, "or2sim")
        self.assertEqual(parameter_checksum(generator), parameter_checksum(models.g_or2sim))

    def test_version_and_kind_are_checked(self):
        self.path.parent.mkdir(parents=True)
        torch.save({"format": "suture-lab-checkpoint", "version": 99}, self.path)
        with self.assertRaises(CheckpointError):
            load_checkpoint(self.path)
        save_checkpoint(self.path, "gan", {}, {}, epoch=0, seed=0)
        with self.assertRaises(CheckpointError):
            load_checkpoint(self.path, kind="detector")
        with self.assertRaises(MissingArtifactError):
            load_checkpoint(self.path.parent / "absent.pt")

    def test_training_state_is_stored_as_plain_data(self):
        pool = ReplayBuffer(capacity=2, swap_probability=0.5, seed=5)
        pool.push_and_pop(torch.rand(3, 3, 4, 4))
        extra = {
            "best_val_loss": np.float64(0.25),
            "domain": Domain.OR,
            "root": self.path.parent,
            "counts": np.array([1, 2]),
            "pool": pool.state_dict(),
        }
        save_checkpoint(self.path, "gan", {}, {"betas": (0.5, 0.999)}, epoch=0, seed=0, extra=extra)
        container = load_checkpoint(self.path, kind="gan")
        loaded = container["extra"]
        self.assertIs(type(loaded["best_val_loss"]), float)
        self.assertEqual(loaded["domain"], "or")
        self.assertEqual(loaded["root"], str(self.path.parent))
        self.assertTrue(torch.equal(loaded["counts"], torch.tensor([1, 2])))
        self.assertEqual(container["config"]["betas"], (0.5, 0.999))

        restored = ReplayBuffer(capacity=2, swap_probability=0.5, seed=0)
        restored.load_state_dict(loaded["pool"])
        batch = torch.rand(4, 3, 4, 4)
        self.assertTrue(torch.equal(restored.push_and_pop(batch), pool.push_and_pop(batch)))

    def test_arbitrary_objects_are_refused(self):
        self.path.parent.mkdir(parents=True)
        torch.save(
            {"format": "suture-lab-checkpoint", "version": 1, "kind": "gan", "extra": {"payload": PickledPayload()}},
            self.path,
        )
        with self.assertRaises(CheckpointError):
            load_checkpoint(self.path)

    def test_foreign_file(self):
        self.path.parent.mkdir(parents=True)
        self.path.write_bytes(b"not a checkpoint")
        with self.assertRaises(CheckpointError):
            load_checkpoint(self.path)


class ScheduleTests(SimpleTestCase):
    def test_two_plateaus_divide_the_rate_by_a_hundred(self):
        model = torch.nn.Linear(2, 1)
        train_cfg = DetectorTrainingConfig()
        optimizer = build_optimizer(model, train_cfg)
        scheduler = build_scheduler(optimizer, train_cfg)
        rates = []
        for _ in range(1 + 2 * (train_cfg.plateau_patience + 1)):
            scheduler.step(1.0)
            rates.append(optimizer.param_groups[0]["lr"])
        self.assertAlmostEqual(rates[train_cfg.plateau_patience], 1e-3, places=15)
        self.assertAlmostEqual(rates[train_cfg.plateau_patience + 1], 1e-4, places=15)
        self.assertAlmostEqual(rates[-1], 1e-5, places=15)

    def test_invalid_training_config(self):
        with self.assertRaises(DataValidationError):
            DetectorTrainingConfig(batch_size=0)
        with self.assertRaises(DataValidationError):
            GanTrainingConfig(adam_betas=(0.9, 1.0))


class DetectorTrainingTests(SyntheticDataMixin, TestCase):
    def _train_cfg(self, epochs=2):
        return DetectorTrainingConfig(epochs=epochs, batch_size=4, seed=5)

    def test_folds_write_checkpoints_history_and_registry(self):
        split = split_from_manifest(self.real)
        results = train_detector(
            self.real, split, _detector_cfg(), self._train_cfg(), self.root / "det", experiment_id="exp", domain="or",
        )
        self.assertEqual(len(results), 2)
        for result in results:
            self.assertTrue(result.best_path.exists())
            self.assertTrue(result.last_path.exists())
            records = [line for line in result.history_path.read_text().splitlines() if line]
            self.assertEqual(len(records), 2)
        runs = TrainRun.objects.filter(experiment_id="exp", stage="detector", status="completed")
        self.assertEqual(runs.count(), 2)
        self.assertEqual({run.epochs_completed for run in runs}, {2})

    def test_equal_seeds_write_identical_histories(self):
        first = fit_detector(self.real[:4], self.real[4:], _detector_cfg(), self._train_cfg(), self.root / "a")
        second = fit_detector(self.real[:4], self.real[4:], _detector_cfg(), self._train_cfg(), self.root / "b")
        self.assertEqual(first.history_path.read_bytes(), second.history_path.read_bytes())
        self.assertEqual(parameter_checksum(first.model), parameter_checksum(second.model))

    def test_resume_reproduces_the_next_epoch(self):
        full = fit_detector(self.real[:4], self.real[4:], _detector_cfg(), self._train_cfg(2), self.root / "full")
        fit_detector(self.real[:4], self.real[4:], _detector_cfg(), self._train_cfg(1), self.root / "resumed")
        resumed = fit_detector(
            self.real[:4], self.real[4:], _detector_cfg(), self._train_cfg(2), self.root / "resumed", resume=True,
        )
        self.assertEqual(full.history_path.read_bytes(), resumed.history_path.read_bytes())

    def test_empty_fold(self):
        with self.assertRaises(ConfigurationError):
            fit_detector([], self.real, _detector_cfg(), self._train_cfg(), self.root / "empty")


class GanTrainingTests(SyntheticDataMixin, TestCase):
    def _train_cfg(self, epochs=2):
        return GanTrainingConfig(epochs=epochs, batch_size=2, seed=3, max_steps_per_epoch=2, buffer_capacity=2)

    def _fit(self, out, epochs=2, det_weights=None, detector_paths=None, resume=False):
        return fit_gan(
            self.sim[:4], self.real[:4], _gan_cfg(), GanLossWeights(), det_weights or DetLossWeights(),
            self._train_cfg(epochs), self.root / out, detector_paths=detector_paths, resume=resume,
        )

    def test_resume_reproduces_the_next_epoch(self):
        full = self._fit("full")
        self._fit("resumed", epochs=1)
        resumed = self._fit("resumed", resume=True)
        self.assertEqual(full.history_path.read_bytes(), resumed.history_path.read_bytes())
        for name, module in full.models.modules().items():
            self.assertEqual(parameter_checksum(module), parameter_checksum(resumed.models.modules()[name]))

    def test_detector_variant_needs_checkpoints(self):
        with self.assertRaises(ConfigurationError):
            self._fit("var1", det_weights=DetLossWeights.from_grid("var1"))
        split_sim, split_or = split_from_manifest(self.sim), split_from_manifest(self.real)
        with self.assertRaises(ConfigurationError):
            train_gan(
                self.sim, self.real, split_sim, split_or, _gan_cfg(), GanLossWeights(),
                DetLossWeights.from_grid("var2"), self._train_cfg(1), self.root / "var2",
                detector_paths={0: {"sim": self.root / "absent.pt"}},
            )

    def test_frozen_detectors_are_unchanged(self):
        paths = {}
        checksums = {}
        for domain, seed in (("sim", 1), ("or", 2)):
            model = build_detector(_detector_cfg(), seed=seed)
            paths[domain] = save_checkpoint(
                self.root / f"det_{domain}.pt", "detector", {"detector": model.state_dict()},
                _detector_cfg().to_dict(), epoch=0, seed=0,
            )
            checksums[domain] = parameter_checksum(load_detector(paths[domain]))
        result = self._fit("var1", epochs=1, det_weights=DetLossWeights.from_grid("var1"), detector_paths=paths)
        container = load_checkpoint(result.last_path, kind="gan")
        self.assertEqual(container["extra"]["detector_checksums"], {"det_sim": checksums["sim"], "det_or": checksums["or"]})
        record = [line for line in result.history_path.read_text().splitlines() if line]
        self.assertIn("det_fake", record[0])
        self.assertIn("det_recovered", record[0])


class TranslationAndFusionTests(SyntheticDataMixin, TestCase):
    def setUp(self):
        super().setUp()
        self.generator = build_gan_models(_gan_cfg(), seed=1).g_sim2or

    def test_translation_keeps_labels_and_folds(self):
        fakes = translate_dataset(self.generator, self.sim, self.root / "fake")
        self.assertEqual(len(fakes), len(self.sim))
        for fake, source in zip(fakes, self.sim):
            self.assertIs(fake.domain, Domain.OR)
            self.assertEqual(fake.fold_id, source.fold_id)
            self.assertEqual(Path(fake.annotation_path).read_text(), Path(source.annotation_path).read_text())
            self.assertGreaterEqual(float(fake.pixels.min()), 0.0)
            self.assertLessEqual(float(fake.pixels.max()), 1.0)
        self.assertEqual(len(read_manifest(self.root / "fake" / "manifest.jsonl")), len(self.sim))

    def test_translation_is_deterministic(self):
        first = translate_dataset(self.generator, self.sim, self.root / "a")
        second = translate_dataset(self.generator, self.sim, self.root / "b")
        for a, b in zip(first, second):
            self.assertEqual(Path(a.path).read_bytes(), Path(b.path).read_bytes())

    def test_translation_rejects_the_wrong_domain(self):
        with self.assertRaises(DataValidationError):
            translate_dataset(self.generator, self.real, self.root / "wrong")

    def test_fusion_trains_on_real_and_fake(self):
        fakes = translate_dataset(self.generator, self.sim[:4], self.root / "fake")
        train_cfg = DetectorTrainingConfig(epochs=1, batch_size=4, augmentation=AugmentationConfig.disabled())
        result = fuse_retrain(self.real[:4], fakes, self.test, _detector_cfg(), train_cfg, self.root / "fused")
        self.assertEqual(result.n_train, 8)
        self.assertTrue(result.best_path.exists())
        self.assertEqual(TrainRun.objects.filter(stage="fusion").count(), 1)

    def test_injected_test_image_aborts_fusion(self):
        train_cfg = DetectorTrainingConfig(epochs=1, batch_size=4)
        with self.assertRaises(LeakageError):
            fuse_retrain(self.real[:4], [self.test[0]], self.test, _detector_cfg(), train_cfg, self.root / "leak")
        self.assertFalse((self.root / "leak" / "best.pt").exists())
