import math

import torch
import torch.nn as nn
from django.test import SimpleTestCase

from core.exceptions import DataValidationError, ShapeError
from core.utils import parameter_checksum

from .buffer import ReplayBuffer
from .losses import AdversarialForm, GanLossWeights, adversarial_loss, cycle_loss, identity_loss
from .networks import (
    DiscriminatorConfig,
    GanConfig,
    GeneratorConfig,
    build_gan_models,
    set_requires_grad,
)
from .objective import ReplayPools, cyclegan_objective, discriminator_losses


class ConstantCritic(nn.Module):
    def __init__(self, real_value, fake_value=None):
        super().__init__()
        self.real_value = real_value
        self.fake_value = real_value if fake_value is None else fake_value

    def forward(self, x):
        # the first channel of a fake batch is marked with -1
        value = self.fake_value if float(x[0, 0, 0, 0]) < 0 else self.real_value
        return torch.full((x.shape[0], 1, 2, 2), value, dtype=torch.float64)


class Shift(nn.Module):
    def __init__(self, delta):
        super().__init__()
        self.delta = delta

    def forward(self, x):
        return x + self.delta


def _small_gan(seed=0):
    cfg = GanConfig(
        generator=GeneratorConfig(residual_filters=8, residual_blocks=1),
        discriminator=DiscriminatorConfig(base_filters=4),
    )
    models = build_gan_models(cfg, seed=seed)
    for module in models.modules().values():
        module.double()
    return models


def _layer_plan(discriminator):
    """(has instance norm, has LeakyReLU) for each convolution, in order."""
    plan = []
    for layer in discriminator.model:
        if isinstance(layer, nn.Conv2d):
            plan.append([False, False])
        elif isinstance(layer, nn.InstanceNorm2d):
            plan[-1][0] = True
        elif isinstance(layer, nn.LeakyReLU):
            plan[-1][1] = True
    return [tuple(entry) for entry in plan]


def _batches(seed=0, size=32):
    generator = torch.Generator().manual_seed(seed)
    sim = torch.rand(2, 3, size, size, dtype=torch.float64, generator=generator) * 2 - 1
    real = torch.rand(2, 3, size, size, dtype=torch.float64, generator=generator) * 2 - 1
    return sim, real


class NetworkTests(SimpleTestCase):
    def test_generator_keeps_size_and_range(self):
        models = build_gan_models(GanConfig(), seed=0)
        with torch.no_grad():
            out = models.g_sim2or(torch.rand(1, 3, 288, 512) * 2 - 1)
        self.assertEqual(tuple(out.shape), (1, 3, 288, 512))
        self.assertGreaterEqual(float(out.min()), -1.0)
        self.assertLessEqual(float(out.max()), 1.0)

    def test_discriminator_patch_map_size(self):
        models = build_gan_models(GanConfig(), seed=0)
        with torch.no_grad():
            scores = models.d_or(torch.rand(1, 3, 288, 512))
        self.assertEqual(tuple(scores.shape), (1, 1, 34, 62))

    def test_discriminator_default_layers(self):
        models = build_gan_models(GanConfig(), seed=0)
        for discriminator in (models.d_sim, models.d_or):
            self.assertEqual(
                _layer_plan(discriminator),
                [(False, True), (True, True), (True, True), (False, True), (True, True)],
            )

    def test_discriminator_layout_override(self):
        cfg = GanConfig(discriminator=DiscriminatorConfig(base_filters=4, norm_layers=[2, 3, 4], final_activation=False))
        models = build_gan_models(cfg, seed=0)
        self.assertEqual(
            _layer_plan(models.d_or),
            [(False, True), (True, True), (True, True), (True, True), (False, False)],
        )
        with torch.no_grad():
            scores = models.d_or(torch.rand(1, 3, 64, 64))
        self.assertEqual(tuple(scores.shape), (1, 1, 6, 6))

    def test_equal_seeds_give_equal_models(self):
        first, second, other = _small_gan(1), _small_gan(1), _small_gan(2)
        for name, module in first.modules().items():
            self.assertEqual(parameter_checksum(module), parameter_checksum(second.modules()[name]))
        self.assertNotEqual(parameter_checksum(first.g_sim2or), parameter_checksum(other.g_sim2or))

    def test_generators_share_shape(self):
        models = _small_gan()
        shapes = [tuple(p.shape) for p in models.g_sim2or.parameters()]
        self.assertEqual(shapes, [tuple(p.shape) for p in models.g_or2sim.parameters()])

    def test_invalid_config(self):
        with self.assertRaises(DataValidationError):
            GeneratorConfig(residual_filters=30)
        with self.assertRaises(DataValidationError):
            DiscriminatorConfig(norm_layers=(0, 2))

    def test_indivisible_input(self):
        models = _small_gan()
        sim, real = _batches(size=32)
        with self.assertRaises(ShapeError):
            cyclegan_objective(sim[..., :30], real, models, GanLossWeights())


class AdversarialLossTests(SimpleTestCase):
    def setUp(self):
        self.real = torch.ones(2, 3, 4, 4, dtype=torch.float64)
        self.fake = -torch.ones(2, 3, 4, 4, dtype=torch.float64)

    def test_perfect_discriminator(self):
        loss_d, loss_g = adversarial_loss(ConstantCritic(1.0, 0.0), self.real, self.fake)
        self.assertEqual(loss_d.item(), 0.0)
        self.assertEqual(loss_g.item(), 1.0)

    def test_constant_half_least_squares(self):
        loss_d, loss_g = adversarial_loss(ConstantCritic(0.5), self.real, self.fake)
        self.assertEqual(loss_d.item(), 0.5)
        self.assertEqual(loss_g.item(), 0.25)

    def test_cross_entropy_at_even_odds(self):
        loss_d, loss_g = adversarial_loss(ConstantCritic(0.0), self.real, self.fake, AdversarialForm.CROSS_ENTROPY)
        self.assertAlmostEqual(loss_d.item(), 2 * math.log(2), places=12)
        self.assertAlmostEqual(loss_g.item(), math.log(2), places=12)

    def test_empty_batch(self):
        with self.assertRaises(DataValidationError):
            adversarial_loss(ConstantCritic(0.5), self.real, self.fake[:0])

    def test_negative_weights_rejected(self):
        with self.assertRaises(DataValidationError):
            GanLossWeights(lambda_cycle=-1.0)


class CycleAndIdentityLossTests(SimpleTestCase):
    def setUp(self):
        generator = torch.Generator().manual_seed(5)
        self.x = torch.rand(2, 3, 8, 8, dtype=torch.float64, generator=generator) * 1.6 - 0.8

    def test_perfect_reconstruction(self):
        self.assertEqual(cycle_loss(self.x, self.x.clone()).item(), 0.0)

    def test_constant_offset(self):
        self.assertAlmostEqual(cycle_loss(self.x, self.x + 0.1).item(), 0.1, places=12)

    def test_symmetry(self):
        other = torch.rand_like(self.x)
        self.assertEqual(cycle_loss(self.x, other).item(), cycle_loss(other, self.x).item())

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeError):
            cycle_loss(self.x, self.x[..., :4])

    def test_identity_generators(self):
        self.assertEqual(identity_loss(nn.Identity(), nn.Identity(), self.x, self.x).item(), 0.0)

    def test_identity_scales_with_deviation(self):
        small = identity_loss(Shift(0.05), Shift(0.05), self.x, self.x).item()
        large = identity_loss(Shift(0.10), Shift(0.10), self.x, self.x).item()
        self.assertAlmostEqual(small, 0.1, places=12)
        self.assertAlmostEqual(large, 2 * small, places=12)


class ReplayBufferTests(SimpleTestCase):
    def test_fills_then_stays_bounded(self):
        buffer = ReplayBuffer(capacity=3, seed=0)
        batch = torch.arange(5, dtype=torch.float64).reshape(5, 1)
        first = buffer.push_and_pop(batch[:3])
        self.assertTrue(torch.equal(first, batch[:3]))
        buffer.push_and_pop(batch)
        self.assertEqual(len(buffer), 3)

    def test_zero_swap_probability_passes_through(self):
        buffer = ReplayBuffer(capacity=1, swap_probability=0.0)
        buffer.push_and_pop(torch.zeros(1, 2))
        out = buffer.push_and_pop(torch.ones(4, 2))
        self.assertTrue(torch.equal(out, torch.ones(4, 2)))

    def test_state_restores_the_draw_sequence(self):
        buffer = ReplayBuffer(capacity=2, seed=3)
        buffer.push_and_pop(torch.zeros(2, 1))
        state = buffer.state_dict()
        batch = torch.arange(6, dtype=torch.float64).reshape(6, 1)
        expected = buffer.push_and_pop(batch)
        restored = ReplayBuffer()
        restored.load_state_dict(state)
        self.assertTrue(torch.equal(restored.push_and_pop(batch), expected))

    def test_invalid_arguments(self):
        with self.assertRaises(DataValidationError):
            ReplayBuffer(swap_probability=1.5)


class CycleGanObjectiveTests(SimpleTestCase):
    def test_intermediates_are_wired_through_both_generators(self):
        models = _small_gan()
        sim, real = _batches()
        outputs = cyclegan_objective(sim, real, models, GanLossWeights())
        with torch.no_grad():
            self.assertTrue(torch.equal(outputs.rec_sim, models.g_or2sim(models.g_sim2or(sim))))
            self.assertTrue(torch.equal(outputs.rec_or, models.g_sim2or(models.g_or2sim(real))))
            self.assertTrue(torch.equal(outputs.fake_or, models.g_sim2or(sim)))

    def test_value_recomposes_from_terms(self):
        models = _small_gan()
        sim, real = _batches()
        weights = GanLossWeights()
        outputs = cyclegan_objective(sim, real, models, weights)
        terms = outputs.terms
        expected = terms["adversarial"] + 10.0 * terms["cycle"] + 5.0 * terms["identity"]
        self.assertEqual(outputs.generator_loss.item(), expected.item())
        for value in list(terms.values()) + list(outputs.discriminator_losses):
            self.assertGreaterEqual(value.item(), 0.0)
            self.assertTrue(math.isfinite(value.item()))
        again = cyclegan_objective(sim, real, models, weights)
        self.assertEqual(again.generator_loss.item(), outputs.generator_loss.item())

    def test_zero_weights_reduce_to_adversarial_terms(self):
        models = _small_gan()
        sim, real = _batches()
        outputs = cyclegan_objective(sim, real, models, GanLossWeights(lambda_cycle=0.0, lambda_identity=0.0))
        self.assertEqual(outputs.generator_loss.item(), outputs.terms["adversarial"].item())
        self.assertEqual(outputs.terms["identity"].item(), 0.0)

    def test_generator_step_leaves_discriminators_untouched(self):
        models = _small_gan()
        sim, real = _batches()
        weights = GanLossWeights()
        g_optimizer = torch.optim.Adam(models.generators(), lr=1e-3)
        d_optimizer = torch.optim.Adam(models.d_or.parameters(), lr=1e-3)
        d_before = parameter_checksum(models.d_or), parameter_checksum(models.d_sim)
        g_before = parameter_checksum(models.g_sim2or)

        set_requires_grad([models.d_sim, models.d_or], False)
        outputs = cyclegan_objective(sim, real, models, weights, include_discriminators=False)
        g_optimizer.zero_grad()
        outputs.generator_loss.backward()
        g_optimizer.step()
        self.assertEqual((parameter_checksum(models.d_or), parameter_checksum(models.d_sim)), d_before)
        self.assertNotEqual(parameter_checksum(models.g_sim2or), g_before)

        set_requires_grad([models.d_sim, models.d_or], True)
        g_after = parameter_checksum(models.g_sim2or)
        loss_d_sim, loss_d_or = discriminator_losses(
            models, sim, real, outputs.fake_sim, outputs.fake_or, weights, ReplayPools.create(seed=0)
        )
        d_optimizer.zero_grad()
        loss_d_or.backward()
        d_optimizer.step()
        self.assertEqual(parameter_checksum(models.g_sim2or), g_after)
        self.assertNotEqual(parameter_checksum(models.d_or), d_before[0])
