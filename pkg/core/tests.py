import json
import math
import tempfile
from pathlib import Path

import numpy as np
import torch
from django.test import SimpleTestCase

from .annotations import load_annotations, load_suture_polylines, read_manifest, save_annotations, write_manifest
from .augmentation import (
    AugmentationConfig,
    AugmentationParams,
    ColorJitterConfig,
    GeometricConfig,
    apply_augmentation,
    augment_sample,
    sample_augmentation,
)
from .datasets import LandmarkDataset, UnpairedDataset
from .exceptions import (
    AnnotationParseError,
    ConfigurationError,
    DataValidationError,
    LeakageError,
    SutureLabError,
    error_payload,
    exit_code_for,
)
from .folds import apply_folds, make_folds, split_from_manifest
from .heatmaps import render_heatmap
from .imaging import read_pixels, write_pixels
from .normalization import gan_to_unit, normalize_for
from .schema import Domain, ImageSample, LandmarkKind, LandmarkSet
from .utils import derive_seed, parameter_checksum


def _sample(width=16, height=16, value=0.5, source_id="s0", domain=Domain.SIM, path="mem.png"):
    pixels = np.full((height, width, 3), value, dtype=np.float32)
    return ImageSample(path=path, domain=domain, source_id=source_id, width=width, height=height, pixels=pixels)


def _write_annotation(path, shapes, width=1920, height=1080):
    Path(path).write_text(json.dumps({"imageWidth": width, "imageHeight": height, "shapes": shapes}))


def _params(**changes):
    values = dict(
        apply_color=False, brightness=0.0, contrast=1.0, saturation=1.0, hue=0.0,
        hflip=False, vflip=False, apply_affine=False,
        angle=0.0, translate_x=0.0, translate_y=0.0, shear=0.0,
    )
    values.update(changes)
    return AugmentationParams(**values)


class HeatmapTests(SimpleTestCase):
    def test_empty_set_renders_zeros(self):
        heatmap = render_heatmap(LandmarkSet(), 64, 64, 2.0)
        self.assertEqual(heatmap.shape, (64, 64))
        self.assertEqual(float(heatmap.values.max()), 0.0)

    def test_peak_and_gaussian_falloff(self):
        heatmap = render_heatmap(LandmarkSet(points=[[10, 10]]), 32, 32, 2.0)
        self.assertEqual(heatmap.values[10, 10], 1.0)
        # (x=12, y=10) is row 10, column 12
        self.assertAlmostEqual(heatmap.values[10, 12], math.exp(-0.5), delta=1e-6)

    def test_peak_is_one_for_pixel_centred_points(self):
        rng = np.random.default_rng(0)
        points = rng.integers(0, 40, size=(7, 2)).astype(float)
        heatmap = render_heatmap(LandmarkSet(points=points), 40, 40, 2.0)
        self.assertLess(abs(heatmap.values.max() - 1.0), 1e-12)
        for x, y in points:
            self.assertEqual(heatmap.values[int(y), int(x)], 1.0)

    def test_permutation_invariance(self):
        points = np.array([[3.0, 4.0], [5.5, 4.2], [20.0, 11.0]])
        first = render_heatmap(LandmarkSet(points=points), 32, 24, 2.0)
        second = render_heatmap(LandmarkSet(points=points[::-1]), 32, 24, 2.0)
        np.testing.assert_array_equal(first.values, second.values)

    def test_nearby_landmarks_do_not_exceed_one(self):
        heatmap = render_heatmap(LandmarkSet(points=[[10, 10], [11, 10]]), 32, 32, 2.0)
        self.assertLessEqual(heatmap.values.max(), 1.0)

    def test_non_positive_sigma_rejected(self):
        with self.assertRaises(DataValidationError):
            render_heatmap(LandmarkSet(), 8, 8, 0.0)


class AnnotationTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_zero_shapes_gives_empty_set(self):
        path = self.root / "empty.json"
        _write_annotation(path, [])
        self.assertEqual(len(load_annotations(path, (512, 288))), 0)

    def test_native_resolution_is_scaled(self):
        path = self.root / "centre.json"
        _write_annotation(path, [{"label": "entry", "points": [[960, 540]], "shape_type": "point"}])
        landmarks = load_annotations(path, (512, 288))
        np.testing.assert_array_equal(landmarks.points, [[256.0, 144.0]])
        self.assertEqual(landmarks.kinds, (LandmarkKind.ENTRY,))
        self.assertEqual(landmarks.native_size, (1920, 1080))

    def test_round_trip_is_bit_identical(self):
        points = np.array([[10.125, 20.5], [300.0, 17.3333333333], [511.9, 287.0]])
        original = LandmarkSet(points=points, kinds=(LandmarkKind.ENTRY, LandmarkKind.EXIT, LandmarkKind.ENTRY))
        path = save_annotations(original, self.root / "three.json", (512, 288))
        loaded = load_annotations(path, (512, 288))
        np.testing.assert_array_equal(loaded.points, original.points)
        self.assertEqual(loaded.kinds, original.kinds)

    def test_polylines_round_trip(self):
        line = np.array([[1.0, 2.0], [5.0, 6.0], [9.0, 2.0]])
        path = save_annotations(LandmarkSet(), self.root / "lines.json", (64, 64), polylines=[line])
        polylines = load_suture_polylines(path, (64, 64))
        self.assertEqual(len(polylines), 1)
        np.testing.assert_array_equal(polylines[0], line)

    def test_malformed_record_names_the_shape(self):
        path = self.root / "bad.json"
        _write_annotation(path, [
            {"label": "entry", "points": [[1, 1]], "shape_type": "point"},
            {"label": "entry", "points": [["a", 1]], "shape_type": "point"},
        ])
        with self.assertRaises(AnnotationParseError) as ctx:
            load_annotations(path, (1920, 1080))
        self.assertIn("shapes[1]", ctx.exception.message)

    def test_invalid_json_is_a_parse_error(self):
        path = self.root / "broken.json"
        path.write_text("{not json")
        with self.assertRaises(AnnotationParseError):
            load_annotations(path, (512, 288))

    def test_out_of_bounds_point_is_listed(self):
        path = self.root / "outside.json"
        _write_annotation(path, [{"label": "exit", "points": [[1920, 10]], "shape_type": "point"}])
        with self.assertRaises(DataValidationError) as ctx:
            load_annotations(path, (512, 288))
        self.assertEqual(ctx.exception.errors["points"], [(512.0, 10 * 288 / 1080)])

    def test_manifest_round_trip_keeps_relative_paths(self):
        samples = [
            ImageSample(path=str(self.root / "img" / f"{i}.png"), domain="sim", source_id=f"g{i % 2}",
                        width=64, height=32, fold_id=i % 2, annotation_path=str(self.root / "ann" / f"{i}.json"))
            for i in range(4)
        ]
        path = write_manifest(samples, self.root / "manifest.jsonl")
        first_line = json.loads(path.read_text().splitlines()[0])
        self.assertEqual(first_line["path"], "img/0.png")
        loaded = read_manifest(path)
        self.assertEqual([s.to_record() for s in loaded], [s.to_record() for s in samples])

    def test_csv_manifest(self):
        samples = [ImageSample(path=str(self.root / "a.png"), domain="or", source_id="x", fold_id=0)]
        path = write_manifest(samples, self.root / "manifest.csv")
        loaded = read_manifest(path)
        self.assertEqual(loaded[0].domain, Domain.OR)
        self.assertIsNone(loaded[0].annotation_path)
        self.assertEqual(loaded[0].size, (512, 288))

    def test_image_file_round_trip(self):
        pixels = np.random.default_rng(1).integers(0, 256, size=(8, 12, 3)).astype(np.float32) / 255.0
        path = write_pixels(pixels, self.root / "x.png")
        np.testing.assert_allclose(read_pixels(path), pixels, atol=1e-7)


class NormalizationTests(SimpleTestCase):
    def test_gan_range(self):
        sample = _sample(width=3, height=1)
        sample.pixels[0, 0] = 0.0
        sample.pixels[0, 2] = 1.0
        out = normalize_for(sample, "gan")
        self.assertEqual(out[0, 0, 0], -1.0)
        self.assertEqual(out[0, 1, 0], 0.0)
        self.assertEqual(out[0, 2, 0], 1.0)
        np.testing.assert_array_equal(gan_to_unit(out), sample.pixels)

    def test_detector_is_identity(self):
        sample = _sample(value=0.3)
        out = normalize_for(sample, "detector")
        self.assertEqual(out.tobytes(), sample.pixels.tobytes())

    def test_out_of_range_rejected(self):
        sample = _sample()
        sample.pixels = sample.pixels + 1.0
        with self.assertRaises(DataValidationError):
            normalize_for(sample, "gan")


class AugmentationTests(SimpleTestCase):
    def setUp(self):
        rng = np.random.default_rng(5)
        pixels = rng.uniform(0.3, 0.7, size=(32, 48, 3)).astype(np.float32)
        self.image = ImageSample(path="mem.png", domain="sim", source_id="a", width=48, height=32, pixels=pixels)
        self.landmarks = LandmarkSet(points=[[5.0, 6.0], [40.0, 20.0], [24.0, 16.0]])

    def test_zero_probabilities_are_identity(self):
        cfg = AugmentationConfig.disabled()
        image, landmarks = augment_sample(self.image, self.landmarks, cfg, np.random.default_rng(0))
        np.testing.assert_array_equal(image.pixels, self.image.pixels)
        np.testing.assert_array_equal(landmarks.points, self.landmarks.points)

    def test_horizontal_flip_maps_x(self):
        image = _sample(width=512, height=288, value=0.0)
        flipped, landmarks = apply_augmentation(image, LandmarkSet(points=[[100, 50]]), _params(hflip=True))
        np.testing.assert_array_equal(landmarks.points, [[411.0, 50.0]])
        self.assertEqual(flipped.size, (512, 288))

    def test_flip_commutes_with_rendering(self):
        _, flipped = apply_augmentation(self.image, self.landmarks, _params(hflip=True))
        rendered_after = render_heatmap(flipped, 48, 32, 2.0).values
        flipped_render = render_heatmap(self.landmarks, 48, 32, 2.0).values[:, ::-1]
        np.testing.assert_allclose(rendered_after, flipped_render, atol=1e-12)

    def test_brightness_only_shifts_mean_and_keeps_points(self):
        cfg = AugmentationConfig(
            color=ColorJitterConfig(brightness=0.2, contrast=(1.0, 1.0), saturation=(1.0, 1.0), hue=0.0, probability=1.0),
            geometric=GeometricConfig(hflip_probability=0.0, vflip_probability=0.0, affine_probability=0.0),
        )
        params = sample_augmentation(cfg, np.random.default_rng(3))
        image, landmarks = augment_sample(self.image, self.landmarks, cfg, np.random.default_rng(3))
        shift = float(image.pixels.mean()) - float(self.image.pixels.mean())
        self.assertAlmostEqual(shift, params.brightness, delta=1e-5)
        np.testing.assert_array_equal(landmarks.points, self.landmarks.points)

    def test_fixed_seed_is_deterministic(self):
        cfg = AugmentationConfig(
            color=ColorJitterConfig(probability=1.0),
            geometric=GeometricConfig(hflip_probability=1.0, vflip_probability=1.0, affine_probability=1.0),
        )
        first = augment_sample(self.image, self.landmarks, cfg, np.random.default_rng(11))
        second = augment_sample(self.image, self.landmarks, cfg, np.random.default_rng(11))
        self.assertEqual(first[0].pixels.tobytes(), second[0].pixels.tobytes())
        np.testing.assert_array_equal(first[1].points, second[1].points)
        self.assertGreaterEqual(float(first[0].pixels.min()), 0.0)
        self.assertLessEqual(float(first[0].pixels.max()), 1.0)

    def test_points_leaving_frame_are_dropped(self):
        image = _sample(width=512, height=288, value=0.2)
        landmarks = LandmarkSet(points=[[10.0, 100.0], [500.0, 100.0]])
        _, moved = apply_augmentation(image, landmarks, _params(apply_affine=True, translate_x=0.5))
        np.testing.assert_array_equal(moved.points, [[266.0, 100.0]])

    def test_invalid_ranges_rejected(self):
        with self.assertRaises(DataValidationError):
            ColorJitterConfig(probability=1.5)
        with self.assertRaises(DataValidationError):
            ColorJitterConfig(contrast=(1.5, 0.3))
        with self.assertRaises(DataValidationError):
            GeometricConfig(hflip_probability=-0.1)


class FoldTests(SimpleTestCase):
    def _samples(self, groups, per_group=3):
        return [
            ImageSample(path=f"{g}_{i}.png", domain="or", source_id=f"surgery{g}")
            for g in range(groups) for i in range(per_group)
        ]

    def test_one_surgery_per_fold(self):
        samples = self._samples(4)
        split = make_folds(samples, 4)
        for fold in range(4):
            self.assertEqual(len({samples[i].source_id for i in split.val(fold)}), 1)

    def test_single_fold_contains_everything(self):
        samples = self._samples(2)
        split = make_folds(samples, 1)
        self.assertEqual(split.train(0), list(range(len(samples))))
        self.assertEqual(split.val(0), list(range(len(samples))))

    def test_groups_partition_across_folds(self):
        samples = [
            ImageSample(path=f"{g}_{i}.png", domain="sim", source_id=f"rec{g}")
            for g in range(8) for i in range(g + 1)
        ]
        split = make_folds(samples, 4)
        seen = [i for fold in range(4) for i in split.val(fold)]
        self.assertEqual(sorted(seen), list(range(len(samples))))
        for fold in range(4):
            self.assertFalse(set(split.train(fold)) & set(split.val(fold)))
        for group in {s.source_id for s in samples}:
            folds = {split.assignments[group]}
            self.assertEqual(len(folds), 1)

    def test_too_few_groups(self):
        with self.assertRaises(ConfigurationError):
            make_folds(self._samples(3), 4)

    def test_manifest_folds_rebuild_the_split(self):
        samples = self._samples(4)
        split = make_folds(samples, 4)
        rebuilt = split_from_manifest(apply_folds(samples, split))
        self.assertEqual(rebuilt.val_indices, split.val_indices)

    def test_group_straddling_folds_is_leakage(self):
        samples = [
            ImageSample(path="a.png", domain="or", source_id="x", fold_id=0),
            ImageSample(path="b.png", domain="or", source_id="x", fold_id=1),
        ]
        with self.assertRaises(LeakageError):
            split_from_manifest(samples)


class DatasetTests(SimpleTestCase):
    def test_items_are_deterministic_per_epoch(self):
        samples = [_sample(width=32, height=16, value=0.1 * (i + 1)) for i in range(3)]
        cfg = AugmentationConfig(color=ColorJitterConfig(probability=1.0))
        dataset = LandmarkDataset(samples, sigma=2.0, augmentation=cfg, seed=4)
        first = dataset[1]
        again = dataset[1]
        self.assertEqual(tuple(first["image"].shape), (3, 16, 32))
        self.assertEqual(tuple(first["heatmap"].shape), (1, 16, 32))
        self.assertTrue(torch.equal(first["image"], again["image"]))

    def test_unpaired_length_is_the_larger_domain(self):
        sim = LandmarkDataset([_sample() for _ in range(2)], sigma=2.0, target="gan")
        real = LandmarkDataset([_sample(domain=Domain.OR) for _ in range(5)], sigma=2.0, target="gan")
        pairs = UnpairedDataset(sim, real, seed=1)
        self.assertEqual(len(pairs), 5)
        item = pairs[4]
        self.assertEqual(float(item["sim"].max()), 0.0)


class UtilityTests(SimpleTestCase):
    def test_derive_seed_is_stable_and_key_sensitive(self):
        self.assertEqual(derive_seed(7, "epoch", 1), derive_seed(7, "epoch", 1))
        self.assertNotEqual(derive_seed(7, "epoch", 1), derive_seed(7, "epoch", 2))

    def test_checksum_tracks_parameters(self):
        layer = torch.nn.Linear(3, 2)
        before = parameter_checksum(layer)
        self.assertEqual(before, parameter_checksum(layer))
        with torch.no_grad():
            layer.weight[0, 0] += 1.0
        self.assertNotEqual(before, parameter_checksum(layer))

    def test_error_payload_and_exit_codes(self):
        payload = error_payload(LeakageError("overlap", errors={"paths": ["a.png"]}))
        self.assertEqual(payload, {
            "success": False, "category": "leakage", "message": "overlap", "errors": {"paths": ["a.png"]},
        })
        self.assertEqual(exit_code_for(ConfigurationError("x")), 2)
        self.assertEqual(exit_code_for(RuntimeError("x")), 1)
        self.assertTrue(issubclass(AnnotationParseError, SutureLabError))
