import tempfile
from pathlib import Path
from unittest import mock

import numpy as np
from django.test import SimpleTestCase

from core.annotations import load_annotations, load_suture_polylines, read_manifest
from core.exceptions import DataValidationError
from core.folds import make_folds
from core.schema import Domain

from .generator import (
    DOMAIN_STYLES,
    SceneParams,
    _sample_suture,
    generate_dataset,
    generate_scene,
    rasterize_curves,
)


class GenerateSceneTests(SimpleTestCase):
    def test_same_seed_is_bit_identical(self):
        params = SceneParams(width=64, height=64)
        first = generate_scene(np.random.default_rng(42), params)
        second = generate_scene(np.random.default_rng(42), params)
        self.assertEqual(first[0].pixels.tobytes(), second[0].pixels.tobytes())
        self.assertEqual(first[1].pixels.tobytes(), second[1].pixels.tobytes())
        np.testing.assert_array_equal(first[2].points, second[2].points)
        np.testing.assert_array_equal(first[3], second[3])

    def test_zero_sutures(self):
        sim, real, landmarks, mask = generate_scene(np.random.default_rng(0), SceneParams(n_sutures=0))
        self.assertEqual(len(landmarks), 0)
        self.assertEqual(int(mask.sum()), 0)
        self.assertEqual(sim.size, (128, 128))

    def test_every_landmark_lies_on_the_mask(self):
        for seed in range(10):
            _, _, landmarks, mask = generate_scene(np.random.default_rng(seed), SceneParams())
            self.assertEqual(len(landmarks) % 2, 0)
            for x, y in landmarks.points:
                self.assertEqual(mask[int(y), int(x)], 1, f"seed {seed}: ({x}, {y}) off the suture mask")

    def test_domains_share_suture_geometry(self):
        params = SceneParams(occlusion_probability=1.0)
        sim, real, _, mask = generate_scene(np.random.default_rng(7), params)
        suture_colour = np.asarray(DOMAIN_STYLES[Domain.SIM].suture, dtype=np.float32)
        painted = np.all(sim.pixels == suture_colour, axis=-1)
        np.testing.assert_array_equal(painted, mask.astype(bool))
        self.assertEqual(sim.domain, Domain.SIM)
        self.assertEqual(real.domain, Domain.OR)
        self.assertFalse(np.array_equal(sim.pixels, real.pixels))

    def test_pixels_in_unit_range(self):
        sim, real, _, _ = generate_scene(np.random.default_rng(3), SceneParams())
        for image in (sim, real):
            self.assertGreaterEqual(float(image.pixels.min()), 0.0)
            self.assertLessEqual(float(image.pixels.max()), 1.0)

    def test_rasterized_endpoints(self):
        curve = np.array([[2, 3], [10, 3], [12, 9]], dtype=np.int32)
        mask = rasterize_curves([curve], (16, 16), stroke_width=1)
        self.assertEqual(mask[3, 2], 1)
        self.assertEqual(mask[9, 12], 1)

    def test_invalid_params(self):
        with self.assertRaises(DataValidationError):
            SceneParams(stroke_width=0)
        with self.assertRaises(DataValidationError):
            SceneParams(n_sutures=(5, 2))

    def test_small_scenes_keep_entry_and_exit_apart(self):
        params = SceneParams(width=16, height=16)
        rng = np.random.default_rng(0)
        for _ in range(500):
            curve = _sample_suture(rng, params)
            self.assertGreaterEqual(np.abs(curve[0] - curve[-1]).max(), 2)
        for seed in range(20):
            _, _, landmarks, _ = generate_scene(np.random.default_rng(seed), SceneParams(width=16, height=16))
            pairs = landmarks.points.reshape(-1, 2, 2)
            self.assertFalse(np.any(np.all(pairs[:, 0] == pairs[:, 1], axis=1)), f"seed {seed}")

    def test_collapsed_sutures_are_rejected(self):
        point = np.full((24, 2), 8, dtype=np.int32)
        with mock.patch("synthgen.generator._draw_suture", return_value=point):
            with self.assertRaises(DataValidationError):
                _sample_suture(np.random.default_rng(0), SceneParams(width=16, height=16))


class GenerateDatasetTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.out = Path(self.tmp.name) / "synthetic"

    def tearDown(self):
        self.tmp.cleanup()

    def test_dataset_round_trips_and_folds(self):
        params = SceneParams(width=64, height=64, n_sutures=(2, 5))
        dataset = generate_dataset(np.random.default_rng(1), params, n_images=8, out_dir=self.out, n_groups=4, n_test=3)

        samples = read_manifest(dataset.manifest_path)
        self.assertEqual(len(samples), 16)
        for domain in (Domain.SIM, Domain.OR):
            per_domain = [s for s in samples if s.domain == domain]
            split = make_folds(per_domain, 4)
            self.assertEqual(split.k, 4)
            self.assertEqual({s.fold_id for s in per_domain}, {0, 1, 2, 3})

        for sample in samples:
            landmarks = load_annotations(sample.annotation_path, sample.size)
            self.assertGreaterEqual(len(landmarks), 4)
            self.assertLessEqual(len(landmarks), 10)
            self.assertEqual(len(load_suture_polylines(sample.annotation_path, sample.size)), len(landmarks) // 2)
            self.assertTrue(Path(sample.path).exists())

        test_samples = read_manifest(dataset.test_manifest_path)
        self.assertEqual(len(test_samples), 3)
        self.assertFalse({s.source_id for s in test_samples} & {s.source_id for s in samples})

    def test_same_seed_writes_same_files(self):
        params = SceneParams(width=32, height=32, n_sutures=(1, 2))
        first = generate_dataset(np.random.default_rng(9), params, n_images=2, out_dir=self.out / "a", n_groups=2)
        second = generate_dataset(np.random.default_rng(9), params, n_images=2, out_dir=self.out / "b", n_groups=2)
        for a, b in zip(first.samples, second.samples):
            self.assertEqual(Path(a.path).read_bytes(), Path(b.path).read_bytes())
            self.assertEqual(Path(a.annotation_path).read_text(), Path(b.annotation_path).read_text())
