import math

import numpy as np
import torch
from django.test import SimpleTestCase

from core.exceptions import DataValidationError, ShapeError
from core.schema import Domain, HeatmapTensor, ImageSample
from core.utils import parameter_checksum

from .inference import predict_heatmaps
from .layers import gaussian_filter, gaussian_kernel, soft_argmax_layer
from .losses import detection_loss, soft_dice
from .network import DetectorConfig, build_detector, count_parameters, detector_forward


def _small_config(**changes):
    values = dict(depth=4, base_channels=2)
    values.update(changes)
    return DetectorConfig(**values)


def _block_parameters(c_in, c_out):
    # two 3x3 convs with bias plus two batch norms (weight + bias)
    return 9 * c_in * c_out + c_out + 9 * c_out * c_out + c_out + 4 * c_out


def _expected_parameters(cfg):
    widths = [cfg.base_channels * 2 ** level for level in range(cfg.depth + 1)]
    total = 0
    c_in = cfg.in_channels
    for level in range(cfg.depth):
        total += _block_parameters(c_in, widths[level])
        c_in = widths[level]
    total += _block_parameters(widths[cfg.depth - 1], widths[cfg.depth])
    for level in range(cfg.depth):
        total += _block_parameters(widths[level + 1] + widths[level], widths[level])
    return total + widths[0] + 1


class DetectorModelTests(SimpleTestCase):
    def test_output_resolution_matches_input(self):
        model = build_detector(_small_config(), seed=0).eval()
        with torch.no_grad():
            sigmoid_map, refined_map = detector_forward(model, torch.rand(1, 3, 288, 512))
        self.assertEqual(tuple(sigmoid_map.shape), (1, 1, 288, 512))
        self.assertEqual(tuple(refined_map.shape), (1, 1, 288, 512))
        for values in (sigmoid_map, refined_map):
            self.assertGreaterEqual(float(values.min()), 0.0)
            self.assertLessEqual(float(values.max()), 1.0)

    def test_equal_seeds_build_identical_models(self):
        first = build_detector(_small_config(), seed=3)
        second = build_detector(_small_config(), seed=3)
        other = build_detector(_small_config(), seed=4)
        self.assertEqual(parameter_checksum(first), parameter_checksum(second))
        self.assertNotEqual(parameter_checksum(first), parameter_checksum(other))

    def test_parameter_count_is_a_function_of_config(self):
        for cfg in (_small_config(), DetectorConfig(depth=2, base_channels=5, dropout=(0.3, 0.4, 0.5))):
            self.assertEqual(count_parameters(build_detector(cfg)), _expected_parameters(cfg))
        self.assertEqual(count_parameters(build_detector(DetectorConfig())), _expected_parameters(DetectorConfig()))

    def test_indivisible_input_is_rejected(self):
        model = build_detector(_small_config())
        with self.assertRaises(ShapeError):
            detector_forward(model, torch.rand(1, 3, 30, 64))

    def test_saturated_head_bias(self):
        model = build_detector(_small_config()).eval()
        with torch.no_grad():
            model.head.weight.zero_()
            model.head.bias.fill_(-50.0)
            sigmoid_map, _ = detector_forward(model, torch.rand(2, 3, 32, 32))
        self.assertLess(float(sigmoid_map.max()), 1e-3)

    def test_refined_map_gradient_matches_finite_differences(self):
        torch.manual_seed(0)
        model = build_detector(_small_config(), seed=1).double().eval()
        image = torch.rand(1, 3, 16, 16, dtype=torch.float64, requires_grad=True)
        _, refined = detector_forward(model, image)
        refined.sum().backward()
        analytic = image.grad[0, 1, 7, 9].item()

        eps = 1e-6
        with torch.no_grad():
            plus, minus = image.detach().clone(), image.detach().clone()
            plus[0, 1, 7, 9] += eps
            minus[0, 1, 7, 9] -= eps
            numeric = (model(plus)[1].sum() - model(minus)[1].sum()).item() / (2 * eps)
        self.assertLess(abs(analytic - numeric) / max(abs(numeric), 1e-12), 1e-3)

    def test_invalid_config(self):
        with self.assertRaises(DataValidationError):
            DetectorConfig(gaussian_kernel=4)
        with self.assertRaises(DataValidationError):
            DetectorConfig(dropout=(0.3, 0.4))
        with self.assertRaises(DataValidationError):
            DetectorConfig(smoothing=0.0)

    def test_frozen_detector_survives_enclosing_training(self):
        detector = build_detector(_small_config(depth=2, dropout=(0.3, 0.4, 0.5)), seed=2).freeze()
        before = parameter_checksum(detector)
        pre = torch.nn.Conv2d(3, 3, kernel_size=1)
        optimizer = torch.optim.Adam(pre.parameters(), lr=1e-2)
        enclosing = torch.nn.Sequential(pre, detector)
        enclosing.train()
        self.assertFalse(detector.training)
        for _ in range(10):
            optimizer.zero_grad()
            _, refined = enclosing(torch.rand(2, 3, 16, 16))
            refined.mean().backward()
            optimizer.step()
        self.assertEqual(parameter_checksum(detector), before)
        self.assertTrue(all(p.grad is None for p in detector.parameters()))

    def test_predict_heatmaps(self):
        model = build_detector(_small_config(depth=2, dropout=(0.3, 0.4, 0.5)))
        samples = [
            ImageSample(path=f"{i}.png", domain=Domain.OR, source_id="a", width=32, height=16,
                        pixels=np.full((16, 32, 3), 0.1 * i, dtype=np.float32))
            for i in range(3)
        ]
        heatmaps = predict_heatmaps(model, samples, batch_size=2)
        self.assertEqual(len(heatmaps), 3)
        self.assertEqual(heatmaps[0].shape, (16, 32))
        self.assertTrue(model.training)


class GaussianFilterTests(SimpleTestCase):
    def test_constant_map_is_preserved(self):
        out = gaussian_filter(torch.full((12, 10), 0.37, dtype=torch.float64))
        self.assertLess(float((out - 0.37).abs().max()), 1e-9)

    def test_impulse_response_is_the_kernel_centre(self):
        impulse = torch.zeros(5, 5, dtype=torch.float64)
        impulse[2, 2] = 1.0
        out = gaussian_filter(impulse)
        expected = 1.0 / (1.0 + 2.0 * math.exp(-0.5)) ** 2
        self.assertAlmostEqual(out[2, 2].item(), expected, places=12)
        self.assertAlmostEqual(out[2, 2].item(), 0.2042, places=4)
        self.assertAlmostEqual(gaussian_kernel().sum().item(), 1.0, places=12)

    def test_zero_map(self):
        out = gaussian_filter(HeatmapTensor(values=np.zeros((6, 6))))
        self.assertIsInstance(out, HeatmapTensor)
        self.assertEqual(float(out.values.max()), 0.0)


class SoftArgmaxTests(SimpleTestCase):
    def _peak_map(self):
        values = torch.full((9, 9), 0.2, dtype=torch.float64)
        values[4, 4] = 0.9
        values[4, 5] = 0.6
        values[3, 4] = 0.5
        return values

    def test_uniform_map_stays_uniform(self):
        out = soft_argmax_layer(torch.full((7, 7), 0.4, dtype=torch.float64))
        self.assertTrue(torch.allclose(out, torch.full((7, 7), 0.4, dtype=torch.float64)))

    def test_strict_peak_remains_argmax(self):
        values = self._peak_map()
        out = soft_argmax_layer(values)
        self.assertEqual(int(out.argmax()), int(values.argmax()))
        self.assertEqual(out[4, 4].item(), 0.9)
        self.assertGreaterEqual(float(out.min()), 0.0)
        self.assertLessEqual(float(out.max()), 1.0)

    def test_concentration_grows_as_temperature_drops(self):
        values = self._peak_map()
        ratios = []
        for temperature in (1.0, 0.5, 0.1):
            out = soft_argmax_layer(values, temperature=temperature)
            ratios.append(out[4, 4].item() / out[4, 5].item())
        self.assertLess(ratios[0], ratios[1])
        self.assertLess(ratios[1], ratios[2])

    def test_non_positive_temperature(self):
        with self.assertRaises(DataValidationError):
            soft_argmax_layer(self._peak_map(), temperature=0.0)


class DetectionLossTests(SimpleTestCase):
    def test_perfect_prediction_is_zero(self):
        generator = torch.Generator().manual_seed(2)
        target = (torch.rand(2, 1, 8, 8, generator=generator) > 0.7).double()
        self.assertEqual(detection_loss(target, target.clone(), target).item(), 0.0)

    def test_soft_target_keeps_a_dice_floor(self):
        # linear soft-Dice reaches 1 only for binary maps
        target = torch.full((1, 1, 4, 4), 0.5, dtype=torch.float64)
        loss = detection_loss(target, target.clone(), target, smoothing=1.0)
        self.assertAlmostEqual(loss.item(), 2 * (1.0 - 9.0 / 17.0), places=12)

    def test_all_zero_is_zero(self):
        zeros = torch.zeros(1, 1, 8, 8, dtype=torch.float64)
        self.assertEqual(detection_loss(zeros, zeros, zeros).item(), 0.0)

    def test_constant_half_against_empty_target(self):
        maps = torch.full((1, 1, 4, 4), 0.5, dtype=torch.float64)
        target = torch.zeros_like(maps)
        loss = detection_loss(maps, maps.clone(), target, smoothing=1.0)
        self.assertAlmostEqual(loss.item(), 2 * (0.25 + 8.0 / 9.0), places=12)
        self.assertAlmostEqual(loss.item(), 2.2777777777, places=9)

    def test_sum_reduction(self):
        maps = torch.full((1, 1, 4, 4), 0.5, dtype=torch.float64)
        target = torch.zeros_like(maps)
        loss = detection_loss(maps, maps.clone(), target, reduction="sum")
        self.assertAlmostEqual(loss.item(), 2 * (16 * 0.25 + 8.0 / 9.0), places=12)

    def test_gradient_matches_finite_differences(self):
        generator = torch.Generator().manual_seed(0)
        for _ in range(20):
            sigmoid_map = torch.rand(1, 1, 8, 8, dtype=torch.float64, generator=generator).requires_grad_()
            refined_map = torch.rand(1, 1, 8, 8, dtype=torch.float64, generator=generator).requires_grad_()
            target = torch.rand(1, 1, 8, 8, dtype=torch.float64, generator=generator)
            self.assertTrue(torch.autograd.gradcheck(
                lambda a, b: detection_loss(a, b, target),
                (sigmoid_map, refined_map),
                eps=1e-6, atol=1e-8, rtol=1e-3,
            ))

    def test_loss_is_non_negative(self):
        generator = torch.Generator().manual_seed(1)
        for _ in range(10):
            a, b, t = (torch.rand(2, 1, 6, 6, generator=generator) for _ in range(3))
            self.assertGreaterEqual(detection_loss(a, b, t).item(), 0.0)

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeError):
            detection_loss(torch.zeros(1, 1, 4, 4), torch.zeros(1, 1, 4, 4), torch.zeros(1, 1, 4, 5))

    def test_dice_is_per_sample(self):
        prediction = torch.stack([torch.ones(1, 2, 2), torch.zeros(1, 2, 2)]).double()
        dice = soft_dice(prediction, prediction.clone(), smoothing=1.0)
        self.assertEqual(dice.tolist(), [1.0, 1.0])
