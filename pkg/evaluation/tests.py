import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from core.annotations import save_annotations
from core.exceptions import DataValidationError, ShapeError
from core.imaging import write_pixels
from core.schema import Domain, HeatmapTensor, ImageSample, LandmarkSet
from detector.network import DetectorConfig, build_detector

from . import config
from .masks import evaluate_mask_pairs, mask_similarity, rasterize_suture_mask
from .matching import MatchResult, match_points
from .metrics import DetectionMetrics, aggregate_folds, compute_metrics, f1_score
from .overlays import draw_overlay
from .points import extract_points
from .reports import ImageEvaluation, build_report, load_report, table_rows, write_report, write_table
from .scoring import evaluate_annotation_files, evaluate_detector, evaluate_predictions

# (experiment, [(PPV %, TPR %, F1) per fold], mean F1) reference cross-validation results
PUBLISHED_ROWS = [
    ("det_or", [(75.13, 43.34, 0.5497), (60.89, 34.51, 0.4405), (60.28, 53.84, 0.5688), (77.79, 30.94, 0.4427)], 0.5004),
    ("det_sim", [(83.26, 75.09, 0.7896), (83.87, 69.49, 0.7601), (88.36, 62.56, 0.7325), (76.21, 64.59, 0.6992)], 0.7454),
    ("cyclegan", [(14.14, 4.59, 0.0693), (14.51, 4.39, 0.0674), (18.20, 8.27, 0.1138), (8.26, 1.65, 0.0275)], 0.0695),
    ("var1", [(76.02, 42.71, 0.5469), (70.99, 41.97, 0.5275), (79.95, 46.10, 0.5848), (73.42, 39.77, 0.5160)], 0.5438),
    ("var1-recovered-half",
     [(76.70, 38.79, 0.5152), (63.23, 39.24, 0.4842), (84.70, 54.17, 0.6608), (70.30, 34.89, 0.4664)], 0.5317),
    ("var1-fake-half",
     [(69.39, 30.87, 0.4273), (61.95, 37.47, 0.4670), (83.39, 49.67, 0.6226), (64.64, 31.19, 0.4208)], 0.4844),
    ("var2", [(77.39, 39.02, 0.5188), (63.29, 33.80, 0.4407), (77.47, 51.73, 0.6203), (70.69, 44.10, 0.5432)], 0.5308),
    ("contrastive", [(9.20, 2.01, 0.0330), (15.30, 2.28, 0.0397), (36.60, 2.34, 0.0440), (5.94, 0.56, 0.0102)], 0.0317),
    ("fused-real-only",
     [(67.83, 34.12, 0.4540), (78.65, 30.64, 0.4410), (78.09, 29.37, 0.4268), (81.79, 25.38, 0.3874)], 0.4273),
    ("fused-cyclegan",
     [(70.62, 21.07, 0.3246), (74.59, 37.33, 0.4976), (67.36, 31.47, 0.4290), (69.91, 29.63, 0.4162)], 0.4169),
    ("fused-var1", [(83.16, 29.83, 0.4391), (77.33, 33.71, 0.4696), (76.82, 37.87, 0.5073), (75.62, 37.37, 0.5002)], 0.4791),
    ("fused-var2", [(68.46, 37.27, 0.4827), (70.76, 38.80, 0.5012), (72.88, 35.52, 0.4776), (70.96, 36.27, 0.4800)], 0.4854),
]


def _blob(shape, center, peak=1.0):
    """Symmetric 3 x 3 blob with (x, y) center."""
    values = np.zeros(shape)
    x, y = center
    values[y - 1:y + 2, x - 1:x + 2] = 0.6 * peak
    values[y, x] = peak
    return values


def _random_cloud(rng, n):
    return rng.uniform(0.0, 128.0, size=(n, 2))


def _unambiguous(pred, gt, radius):
    if len(pred) == 0 or len(gt) == 0:
        return True
    close = cdist(pred, gt) < radius
    return close.sum(axis=0).max() <= 1 and close.sum(axis=1).max() <= 1


def _assignment_oracle(pred, gt, radius):
    """Minimal-total-distance one-to-one assignment restricted to pairs closer than radius."""
    if len(pred) == 0 or len(gt) == 0:
        return set()
    distances = cdist(pred, gt)
    cost = np.where(distances < radius, distances, 1e6)
    rows, cols = linear_sum_assignment(cost)
    return {(int(i), int(j)) for i, j in zip(rows, cols) if distances[i, j] < radius}


class ExtractPointsTests(SimpleTestCase):
    def test_all_below_threshold_is_empty(self):
        self.assertEqual(len(extract_points(HeatmapTensor(np.full((16, 16), 0.2)), 0.5)), 0)

    def test_symmetric_blob_center(self):
        points = extract_points(HeatmapTensor(_blob((64, 64), (20, 30))), 0.5)
        np.testing.assert_allclose(points.points, [[20.0, 30.0]])

    def test_center_of_mass_uses_map_values(self):
        values = np.zeros((10, 10))
        values[5, 4] = 0.6
        values[5, 5] = 1.0
        points = extract_points(values, 0.5)
        np.testing.assert_allclose(points.points, [[(4 * 0.6 + 5 * 1.0) / 1.6, 5.0]])

    def test_separated_blobs(self):
        values = np.maximum(_blob((64, 64), (10, 10)), _blob((64, 64), (40, 20)))
        points = extract_points(values, 0.5)
        self.assertEqual(len(points), 2)
        np.testing.assert_allclose(sorted(points.points.tolist()), [[10.0, 10.0], [40.0, 20.0]])

    def test_diagonal_neighbours_form_one_component(self):
        values = np.zeros((8, 8))
        values[2, 2] = values[3, 3] = 0.9
        self.assertEqual(len(extract_points(values, 0.5)), 1)

    def test_threshold_range(self):
        for threshold in (0.0, 1.0, -0.1):
            with self.assertRaises(DataValidationError):
                extract_points(np.zeros((4, 4)), threshold)


class MatchPointsTests(SimpleTestCase):
    def test_identical_sets(self):
        points = np.array([[1.0, 2.0], [30.0, 40.0], [60.0, 5.0]])
        result = match_points(points, points)
        self.assertEqual((result.tp, result.fp, result.fn), (3, 0, 0))

    def test_three_four_five(self):
        result = match_points(np.array([[3.0, 4.0]]), np.array([[0.0, 0.0]]))
        self.assertEqual((result.tp, result.fp, result.fn), (1, 0, 0))
        self.assertAlmostEqual(result.pairs[0].distance, 5.0)

    def test_closest_prediction_wins(self):
        result = match_points(np.array([[0.0, 1.0], [3.0, 4.0]]), np.array([[0.0, 0.0]]))
        self.assertEqual((result.tp, result.fp, result.fn), (1, 1, 0))
        self.assertEqual(result.pairs[0].pred_index, 0)
        self.assertEqual(result.unmatched_predictions, [1])

    def test_radius_is_strict(self):
        result = match_points(np.array([[6.0, 0.0]]), np.array([[0.0, 0.0]]), radius=6.0)
        self.assertEqual((result.tp, result.fp, result.fn), (0, 1, 1))

    def test_empty_sides(self):
        self.assertEqual(match_points(LandmarkSet(), np.array([[1.0, 1.0]])).fn, 1)
        self.assertEqual(match_points(np.array([[1.0, 1.0]]), LandmarkSet()).fp, 1)

    def test_radius_must_be_positive(self):
        with self.assertRaises(DataValidationError):
            match_points(LandmarkSet(), LandmarkSet(), radius=0.0)

    def test_count_identities_and_assignment_oracle(self):
        rng = np.random.default_rng(2024)
        unambiguous = 0
        for _ in range(200):
            pred = _random_cloud(rng, int(rng.integers(0, 21)))
            gt = _random_cloud(rng, int(rng.integers(0, 21)))
            result = match_points(pred, gt, config.MATCH_RADIUS)
            self.assertEqual(result.tp + result.fn, len(gt))
            self.assertEqual(result.tp + result.fp, len(pred))
            self.assertTrue(all(p.distance < config.MATCH_RADIUS for p in result.pairs))
            if _unambiguous(pred, gt, config.MATCH_RADIUS):
                unambiguous += 1
                greedy = {(p.pred_index, p.gt_index) for p in result.pairs}
                self.assertEqual(greedy, _assignment_oracle(pred, gt, config.MATCH_RADIUS))
        self.assertGreater(unambiguous, 50)

    def test_larger_radius_never_loses_matches(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            pred, gt = _random_cloud(rng, 15), _random_cloud(rng, 15)
            counts = [match_points(pred, gt, r).tp for r in (2.0, 4.0, 6.0, 10.0, 20.0)]
            self.assertEqual(counts, sorted(counts))


class MetricsTests(SimpleTestCase):
    def test_two_thirds(self):
        metrics = compute_metrics(MatchResult(tp=2, fp=1, fn=1))
        for value in (metrics.ppv, metrics.tpr, metrics.f1):
            self.assertAlmostEqual(value, 2 / 3)

    def test_no_true_positives(self):
        for match in (MatchResult(0, 3, 2), MatchResult(0, 0, 0)):
            metrics = compute_metrics(match)
            self.assertEqual((metrics.ppv, metrics.tpr, metrics.f1), (0.0, 0.0, 0.0))

    def test_published_fold_f1_cells(self):
        for name, folds, _ in PUBLISHED_ROWS:
            for ppv, tpr, f1 in folds:
                with self.subTest(experiment=name, ppv=ppv, tpr=tpr):
                    self.assertAlmostEqual(f1_score(ppv / 100, tpr / 100), f1, delta=1e-4)

    def test_published_mean_f1_from_fold_aggregation(self):
        for name, folds, mean_f1 in PUBLISHED_ROWS:
            report = aggregate_folds([DetectionMetrics.from_rates(p / 100, t / 100) for p, t, _ in folds])
            with self.subTest(experiment=name):
                self.assertAlmostEqual(report.mean["f1"], mean_f1, delta=1e-4)

    def test_published_ppv_mean_and_std(self):
        folds = PUBLISHED_ROWS[0][1]
        report = aggregate_folds([DetectionMetrics.from_rates(p / 100, t / 100) for p, t, _ in folds])
        self.assertAlmostEqual(report.mean["ppv"] * 100, 68.52, delta=0.005)
        self.assertAlmostEqual(report.std["ppv"] * 100, 8.00, delta=0.005)
        self.assertAlmostEqual(report.mean["tpr"] * 100, 40.66, delta=0.005)
        self.assertAlmostEqual(report.std["tpr"] * 100, 8.85, delta=0.005)

    def test_identical_and_single_folds(self):
        metrics = compute_metrics(MatchResult(3, 1, 2))
        report = aggregate_folds([metrics, metrics, metrics])
        self.assertEqual(report.std, {"ppv": 0.0, "tpr": 0.0, "f1": 0.0})
        single = aggregate_folds([metrics], fold_ids=[2])
        self.assertEqual(single.mean["f1"], metrics.f1)
        self.assertEqual(single.std["f1"], 0.0)
        self.assertEqual(single.fold_ids, [2])

    def test_zero_folds(self):
        with self.assertRaises(DataValidationError):
            aggregate_folds([])


class MaskTests(SimpleTestCase):
    def test_identical_masks(self):
        mask = np.zeros((10, 10), dtype=np.uint8)
        mask[2:5, 3:8] = 1
        result = mask_similarity(mask, mask)
        self.assertEqual(result.mse, 0.0)
        self.assertEqual(result.dice, 1.0)

    def test_disjoint_masks(self):
        a = np.zeros((4, 4))
        b = np.zeros((4, 4))
        a[0, :] = 1
        b[3, :] = 1
        result = mask_similarity(a, b, smoothing=0.0)
        self.assertEqual(result.dice, 0.0)
        self.assertAlmostEqual(result.mse, 0.5)

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeError):
            mask_similarity(np.zeros((4, 4)), np.zeros((4, 5)))

    def test_stroke_width(self):
        mask = rasterize_suture_mask([np.array([[2.0, 10.0], [28.0, 10.0]])], width=32, height=24)
        self.assertTrue(mask[9:12, 15].all())
        self.assertFalse(mask[:8, 15].any())
        self.assertFalse(mask[13:, 15].any())

    def test_annotation_pairs_per_fold(self):
        with tempfile.TemporaryDirectory() as tmp:
            line = np.array([[4.0, 4.0], [20.0, 18.0], [28.0, 6.0]])
            other = np.array([[2.0, 28.0], [30.0, 28.0]])
            same = save_annotations(LandmarkSet(), Path(tmp) / "a.json", (32, 32), polylines=[line])
            ref = save_annotations(LandmarkSet(), Path(tmp) / "b.json", (32, 32), polylines=[line])
            moved = save_annotations(LandmarkSet(), Path(tmp) / "c.json", (32, 32), polylines=[other])
            pairs, report = evaluate_mask_pairs([same, moved], [ref, ref], (32, 32), fold_ids=[0, 1], smoothing=0.0)
        self.assertEqual(pairs[0].similarity.dice, 1.0)
        self.assertEqual(pairs[1].similarity.dice, 0.0)
        self.assertEqual(report.fold_ids, [0, 1])
        self.assertAlmostEqual(report.mean["dice"], 0.5)
        self.assertAlmostEqual(report.std["dice"], 0.5)


class ReportTests(SimpleTestCase):
    def _images(self):
        return [
            ImageEvaluation("a.png", "or-rec00", 0, MatchResult(1, 0, 0)),
            ImageEvaluation("b.png", "or-rec00", 0, MatchResult(0, 1, 3)),
            ImageEvaluation("c.png", "or-rec01", 1, MatchResult(2, 0, 0)),
        ]

    def test_counts_are_summed_within_a_fold(self):
        report = build_report("det_or", "real", self._images())
        self.assertEqual(report.summary.fold_ids, [0, 1])
        self.assertEqual(report.summary.per_fold["ppv"], [0.5, 1.0])
        self.assertEqual(report.summary.per_fold["tpr"], [0.25, 1.0])
        self.assertAlmostEqual(report.summary.per_fold["f1"][0], 1 / 3)

    def test_report_file_round_trip(self):
        report = build_report("det_or", "real", self._images(), radius=6.0)
        with tempfile.TemporaryDirectory() as tmp:
            path = write_report(report, tmp)
            loaded = load_report(path)
        self.assertEqual(loaded.to_dict(), report.to_dict())

    def test_table_layout_and_idempotence(self):
        folds = PUBLISHED_ROWS[0][1]
        metrics = [DetectionMetrics.from_rates(p / 100, t / 100) for p, t, _ in folds]
        report = build_report("det_or", "real", self._images())
        report.summary = aggregate_folds(metrics)
        rows = table_rows([report])
        self.assertEqual(rows[0], ["metric", "experiment", "f1", "f2", "f3", "f4", "mean ± std"])
        self.assertEqual(rows[1], ["PPV", "det_or", "75.13", "60.89", "60.28", "77.79", "68.52 ± 8.00"])
        self.assertEqual(rows[3][:3], ["F1", "det_or", "0.5497"])
        with tempfile.TemporaryDirectory() as tmp:
            first = write_table([report], Path(tmp) / "t.csv").read_bytes()
            second = write_table([report], Path(tmp) / "t.csv").read_bytes()
        self.assertEqual(first, second)


class OverlayTests(SimpleTestCase):
    def test_marker_colors(self):
        pred = LandmarkSet(points=np.array([[10.0, 10.0], [40.0, 10.0]]))
        gt = LandmarkSet(points=np.array([[11.0, 10.0], [25.0, 40.0]]))
        match = match_points(pred, gt)
        canvas = draw_overlay(np.zeros((60, 60, 3)), pred, gt, match)

        def color_at(x, y):
            return tuple(int(round(v * 255)) for v in canvas[y, x + config.OVERLAY_MARKER_RADIUS])

        self.assertEqual(color_at(10, 10), config.OVERLAY_TP_COLOR)
        self.assertEqual(color_at(40, 10), config.OVERLAY_FP_COLOR)
        self.assertEqual(color_at(25, 40), config.OVERLAY_FN_COLOR)


class ScoringTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)
        self.samples = []
        for index in range(3):
            landmarks = LandmarkSet(points=np.array([[4.0 + index, 5.0], [20.0, 12.0 + index]]))
            annotation = save_annotations(landmarks, self.root / f"{index}.json", (32, 32))
            image = write_pixels(np.full((32, 32, 3), 0.5), self.root / f"{index}.png")
            self.samples.append(ImageSample(
                path=str(image), domain=Domain.OR, source_id=f"or-rec{index:02d}", width=32, height=32,
                fold_id=index % 2, annotation_path=str(annotation),
            ))

    def tearDown(self):
        self.tmp.cleanup()

    def test_predictions_equal_to_labels_score_one(self):
        files = [s.annotation_path for s in self.samples]
        report = build_report("oracle", "annotations", evaluate_annotation_files(self.samples, files))
        self.assertEqual(report.summary.mean["f1"], 1.0)
        self.assertEqual(report.summary.fold_ids, [0, 1])

    def test_fold_override(self):
        evaluations = evaluate_predictions(self.samples, [LandmarkSet()] * 3, fold=3)
        self.assertEqual({e.fold for e in evaluations}, {3})
        self.assertEqual(sum(e.match.fn for e in evaluations), 6)

    def test_detector_scoring_keeps_count_identities(self):
        model = build_detector(DetectorConfig(depth=2, base_channels=2, dropout=(0.3, 0.4, 0.5)), seed=0)
        evaluations = evaluate_detector(model, self.samples, fold=0, overlay_dir=self.root / "overlays")
        for evaluation in evaluations:
            self.assertEqual(evaluation.match.tp + evaluation.match.fn, 2)
            self.assertEqual(evaluation.match.tp + evaluation.match.fp, evaluation.n_pred)
        self.assertEqual(len(list((self.root / "overlays").glob("*.png"))), 3)

    def test_prediction_count_must_match(self):
        with self.assertRaises(DataValidationError):
            evaluate_predictions(self.samples, [LandmarkSet()])
