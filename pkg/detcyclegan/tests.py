import torch
import torch.nn as nn
from django.test import SimpleTestCase

from core.exceptions import ConfigurationError, ContractViolationError, DataValidationError
from core.utils import parameter_checksum
from detector.network import DetectorConfig, build_detector
from translation.losses import GanLossWeights
from translation.networks import DiscriminatorConfig, GanConfig, GeneratorConfig, build_gan_models, set_requires_grad
from translation.objective import cyclegan_objective, discriminator_losses

from .config import WEIGHT_GRID
from .losses import (
    DetLossWeights,
    FrozenDetectors,
    Variant,
    cross_domain_consistency_loss,
    detection_consistency_loss,
    recovered_detection_loss,
    semantic_loss,
)
from .objective import detcyclegan_objective


class StubDetector(nn.Module):
    trainable = False

    def __init__(self):
        super().__init__()
        self.unused = nn.Parameter(torch.zeros(1, dtype=torch.float64), requires_grad=False)

    def forward(self, x):
        maps = self.maps(x)
        return maps, maps


class FixedDetector(StubDetector):
    def __init__(self, values):
        super().__init__()
        self.values = values

    def maps(self, x):
        return self.values


class ConstantDetector(StubDetector):
    def __init__(self, value):
        super().__init__()
        self.value = value

    def maps(self, x):
        return torch.full((x.shape[0], 1, *x.shape[-2:]), self.value, dtype=x.dtype)


class SmoothDetector(StubDetector):
    def __init__(self, scale):
        super().__init__()
        self.scale = scale

    def maps(self, x):
        return torch.sigmoid(self.scale * (x.mean(dim=1, keepdim=True) - 0.5))


class ThresholdDetector(StubDetector):
    def maps(self, x):
        return (x.mean(dim=1, keepdim=True) > 0.5).to(x.dtype)


def _small_gan(seed=0):
    cfg = GanConfig(
        generator=GeneratorConfig(residual_filters=8, residual_blocks=1),
        discriminator=DiscriminatorConfig(base_filters=4),
    )
    models = build_gan_models(cfg, seed=seed)
    for module in models.modules().values():
        module.double()
    return models


def _frozen_detectors(seed=0):
    cfg = DetectorConfig(depth=2, base_channels=2, dropout=(0.3, 0.4, 0.5))
    return FrozenDetectors(
        det_sim=build_detector(cfg, seed=seed).double().freeze(),
        det_or=build_detector(cfg, seed=seed + 1).double().freeze(),
    )


def _batch(seed=0, size=32):
    generator = torch.Generator().manual_seed(seed)
    sim = torch.rand(2, 3, size, size, dtype=torch.float64, generator=generator) * 2 - 1
    real = torch.rand(2, 3, size, size, dtype=torch.float64, generator=generator) * 2 - 1
    target_sim = (torch.rand(2, 1, size, size, dtype=torch.float64, generator=generator) > 0.9).double()
    target_or = (torch.rand(2, 1, size, size, dtype=torch.float64, generator=generator) > 0.9).double()
    return sim, real, target_sim, target_or


class DetLossWeightsTests(SimpleTestCase):
    def test_grid_entries(self):
        self.assertEqual(WEIGHT_GRID["var1"], (1.0, 1.0))
        self.assertEqual(WEIGHT_GRID["var2"], (1.0, 0.0))
        self.assertEqual({WEIGHT_GRID[name] for name in WEIGHT_GRID},
                         {(0.0, 0.0), (1.0, 1.0), (1.0, 0.5), (0.5, 1.0), (1.0, 0.0)})
        self.assertIs(DetLossWeights.from_grid("var1-recovered-half").variant, Variant.VAR1)
        self.assertIs(DetLossWeights.from_grid("var2").variant, Variant.VAR2)
        self.assertFalse(DetLossWeights.from_grid("baseline").uses_detectors)

    def test_inconsistent_or_negative_weights(self):
        with self.assertRaises(DataValidationError):
            DetLossWeights(1.0, 1.0, Variant.BASELINE)
        with self.assertRaises(DataValidationError):
            DetLossWeights(-1.0, 0.0, Variant.VAR2)
        with self.assertRaises(DataValidationError):
            DetLossWeights.from_grid("var3")


class DetectionConsistencyTests(SimpleTestCase):
    def test_exact_detectors_give_zero(self):
        _, _, target_sim, target_or = _batch()
        detectors = FrozenDetectors(det_sim=FixedDetector(target_or), det_or=FixedDetector(target_sim))
        images = torch.zeros(2, 3, 32, 32, dtype=torch.float64)
        self.assertEqual(detection_consistency_loss(detectors, images, images, target_sim, target_or).item(), 0.0)

    def test_empty_targets_and_silent_detectors_give_zero(self):
        zeros = torch.zeros(2, 1, 32, 32, dtype=torch.float64)
        detectors = FrozenDetectors(det_sim=ConstantDetector(0.0), det_or=ConstantDetector(0.0))
        images = torch.zeros(2, 3, 32, 32, dtype=torch.float64)
        self.assertEqual(detection_consistency_loss(detectors, images, images, zeros, zeros).item(), 0.0)
        self.assertEqual(recovered_detection_loss(detectors, images, images, zeros, zeros).item(), 0.0)

    def test_gradients_reach_generators_only(self):
        models = _small_gan()
        detectors = _frozen_detectors()
        sim, real, target_sim, target_or = _batch()
        outputs = cyclegan_objective(sim, real, models, GanLossWeights(), include_discriminators=False)
        loss = detection_consistency_loss(detectors, outputs.fake_or, outputs.fake_sim, target_sim, target_or)
        loss = loss + recovered_detection_loss(detectors, outputs.rec_sim, outputs.rec_or, target_sim, target_or)
        loss.backward()
        for detector in (detectors.det_sim, detectors.det_or):
            self.assertTrue(all(p.grad is None for p in detector.parameters()))
        for generator in (models.g_sim2or, models.g_or2sim):
            norm = sum(float(p.grad.norm()) for p in generator.parameters() if p.grad is not None)
            self.assertGreater(norm, 0.0)

    def test_trainable_detector_is_a_contract_violation(self):
        cfg = DetectorConfig(depth=2, base_channels=2, dropout=(0.3, 0.4, 0.5))
        detectors = FrozenDetectors(det_sim=build_detector(cfg), det_or=build_detector(cfg).freeze())
        images = torch.zeros(1, 3, 16, 16)
        target = torch.zeros(1, 1, 16, 16)
        with self.assertRaises(ContractViolationError):
            detection_consistency_loss(detectors, images, images, target, target)
        with self.assertRaises(ContractViolationError):
            semantic_loss(detectors, images, images, images, images)

    def test_recovered_loss_matches_consistency_with_swapped_detectors(self):
        det_sim, det_or = SmoothDetector(3.0), SmoothDetector(-2.0)
        sim, real, target_sim, target_or = _batch(seed=4)
        recovered = recovered_detection_loss(FrozenDetectors(det_sim, det_or), sim, real, target_sim, target_or)
        swapped = detection_consistency_loss(FrozenDetectors(det_or, det_sim), sim, real, target_sim, target_or)
        self.assertEqual(recovered.item(), swapped.item())
        self.assertGreaterEqual(recovered.item(), 0.0)


class AblationLossTests(SimpleTestCase):
    def test_cross_domain_constant_maps(self):
        detectors = FrozenDetectors(det_sim=ConstantDetector(0.3), det_or=ConstantDetector(0.5))
        images = torch.zeros(2, 3, 8, 8, dtype=torch.float64)
        loss = cross_domain_consistency_loss(detectors, images, images, images, images)
        self.assertAlmostEqual(loss.item(), 2 * 0.04, places=12)

    def test_cross_domain_identical_maps(self):
        detectors = FrozenDetectors(det_sim=SmoothDetector(2.0), det_or=SmoothDetector(2.0))
        sim, real, _, _ = _batch()
        self.assertEqual(cross_domain_consistency_loss(detectors, sim, sim, real, real).item(), 0.0)

    def test_semantic_loss_with_identity_translation(self):
        detectors = FrozenDetectors(det_sim=ThresholdDetector(), det_or=ThresholdDetector())
        sim, real, _, _ = _batch(seed=2)
        self.assertEqual(semantic_loss(detectors, real, real, sim, sim).item(), 0.0)

    def test_detaching_labels_keeps_the_value(self):
        detectors = FrozenDetectors(det_sim=SmoothDetector(3.0), det_or=SmoothDetector(-1.5))
        sim, real, _, _ = _batch(seed=3)
        values, grads = [], []
        for detach in (True, False):
            source = real.clone().requires_grad_()
            loss = semantic_loss(detectors, source, source * 0.5, sim, sim * 0.5, detach_labels=detach)
            loss.backward()
            values.append(loss.item())
            grads.append(source.grad.clone())
            self.assertGreaterEqual(loss.item(), 0.0)
        self.assertEqual(values[0], values[1])
        self.assertFalse(torch.equal(grads[0], grads[1]))


class DetCycleGanObjectiveTests(SimpleTestCase):
    def test_baseline_equals_cyclegan(self):
        models = _small_gan()
        sim, real, target_sim, target_or = _batch()
        plain = cyclegan_objective(sim, real, models, GanLossWeights())
        extended = detcyclegan_objective(
            sim, real, target_sim, target_or, models, None, GanLossWeights(), DetLossWeights()
        )
        self.assertEqual(extended.generator_loss.item(), plain.generator_loss.item())
        self.assertEqual(extended.extra_terms, {})

    def test_recovered_term_is_skipped_for_var2(self):
        models = _small_gan()
        detectors = FrozenDetectors(det_sim=SmoothDetector(3.0), det_or=SmoothDetector(-2.0))
        sim, real, target_sim, target_or = _batch()
        outputs = detcyclegan_objective(
            sim, real, target_sim, target_or, models, detectors, GanLossWeights(), DetLossWeights.from_grid("var2")
        )
        self.assertNotIn("det_recovered", outputs.extra_terms)
        plain = cyclegan_objective(sim, real, models, GanLossWeights())
        consistency = detection_consistency_loss(detectors, plain.fake_or, plain.fake_sim, target_sim, target_or)
        self.assertAlmostEqual(
            outputs.generator_loss.item(), (plain.generator_loss + consistency).item(), places=12
        )

    def test_var1_adds_both_terms(self):
        models = _small_gan()
        detectors = FrozenDetectors(det_sim=SmoothDetector(3.0), det_or=SmoothDetector(-2.0))
        sim, real, target_sim, target_or = _batch()
        outputs = detcyclegan_objective(
            sim, real, target_sim, target_or, models, detectors, GanLossWeights(),
            DetLossWeights.from_grid("var1-recovered-half"),
        )
        base = cyclegan_objective(sim, real, models, GanLossWeights()).generator_loss
        expected = base + outputs.extra_terms["det_fake"] + 0.5 * outputs.extra_terms["det_recovered"]
        self.assertAlmostEqual(outputs.generator_loss.item(), expected.item(), places=12)

    def test_missing_detectors(self):
        models = _small_gan()
        sim, real, target_sim, target_or = _batch()
        with self.assertRaises(ConfigurationError):
            detcyclegan_objective(
                sim, real, target_sim, target_or, models, None, GanLossWeights(), DetLossWeights.from_grid("var1")
            )

    def _train(self, det_weights, detectors, steps):
        torch.manual_seed(0)
        models = _small_gan(seed=7)
        gan_weights = GanLossWeights()
        g_optimizer = torch.optim.Adam(models.generators(), lr=2e-4)
        d_optimizer = torch.optim.Adam(
            list(models.d_sim.parameters()) + list(models.d_or.parameters()), lr=2e-4
        )
        for step in range(steps):
            sim, real, target_sim, target_or = _batch(seed=step)
            set_requires_grad([models.d_sim, models.d_or], False)
            outputs = detcyclegan_objective(
                sim, real, target_sim, target_or, models, detectors, gan_weights, det_weights,
                include_discriminators=False,
            )
            g_optimizer.zero_grad()
            outputs.generator_loss.backward()
            g_optimizer.step()
            set_requires_grad([models.d_sim, models.d_or], True)
            loss_d_sim, loss_d_or = discriminator_losses(
                models, sim, real, outputs.fake_sim, outputs.fake_or, gan_weights
            )
            d_optimizer.zero_grad()
            (loss_d_sim + loss_d_or).backward()
            d_optimizer.step()
        return models

    def test_detectors_survive_ten_steps(self):
        detectors = _frozen_detectors()
        before = parameter_checksum(detectors.det_sim), parameter_checksum(detectors.det_or)
        self._train(DetLossWeights.from_grid("var1"), detectors, steps=10)
        self.assertEqual((parameter_checksum(detectors.det_sim), parameter_checksum(detectors.det_or)), before)

    def test_zero_weights_follow_the_baseline_trajectory(self):
        baseline = self._train(DetLossWeights(), None, steps=3)
        zero_weighted = self._train(DetLossWeights(0.0, 0.0, Variant.BASELINE), _frozen_detectors(), steps=3)
        for name, module in baseline.modules().items():
            self.assertEqual(parameter_checksum(module), parameter_checksum(zero_weighted.modules()[name]))
