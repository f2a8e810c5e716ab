import json
import tempfile
import unittest
from io import StringIO
from pathlib import Path

import yaml
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase, override_settings

from core.exceptions import ConfigurationError, MissingArtifactError
from engine.models import TrainRun
from evaluation.reports import load_report

from .loader import build_section, load_experiment, parse_override, to_plain, write_resolved
from .schema import EvalTarget, ExperimentConfig

TINY = {
    "experiment": {"id": "tiny", "root": "runs/a", "seed": 3},
    "data": {"manifest": "data/manifest.jsonl", "test_manifest": "data/manifest_test.jsonl", "width": 32, "height": 32},
    "synth": {"n_images": 8, "n_groups": 2, "n_test": 2, "n_sutures": [1, 3]},
    "detector": {"depth": 2, "base_channels": 2, "dropout": [0.3, 0.4, 0.5]},
    "gan": {"generator": {"residual_filters": 8, "residual_blocks": 1}, "discriminator": {"base_filters": 4}},
    "train": {
        "detector": {"epochs": 1, "batch_size": 4},
        "gan": {"epochs": 1, "batch_size": 2, "buffer_capacity": 2, "max_steps_per_epoch": 2},
    },
}


def _write_descriptor(path, tree=None):
    path = Path(path)
    path.write_text(yaml.safe_dump(tree or TINY), encoding="utf-8")
    return path


class DescriptorTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.descriptor = _write_descriptor(Path(self.tmp.name) / "tiny.yaml")

    def tearDown(self):
        self.tmp.cleanup()

    def test_defaults(self):
        cfg = load_experiment()
        self.assertEqual(cfg.eval.radius, 6.0)
        self.assertEqual(cfg.eval.threshold, 0.5)
        self.assertEqual(cfg.train.gan.epochs, 60)
        self.assertEqual(cfg.train.detector.learning_rate, 1e-3)
        self.assertEqual(cfg.detector.heatmap_sigma, 2.0)
        self.assertEqual(cfg.det_weights.build().variant.value, "baseline")

    def test_unknown_keys_name_their_dotted_path(self):
        cases = [
            ({"detector": {"depthh": 3}}, "detector.depthh"),
            ({"train": {"gan": {"augmentation": {"color": {"hue_shift": 0.1}}}}}, "train.gan.augmentation.color.hue_shift"),
            ({"evaluation": {}}, "evaluation"),
        ]
        for tree, dotted in cases:
            with self.subTest(key=dotted):
                with self.assertRaises(ConfigurationError) as ctx:
                    build_section(ExperimentConfig, tree)
                self.assertIn(dotted, ctx.exception.message)

    def test_invalid_values(self):
        for tree in (
            {"eval": {"threshold": 1.5}},
            {"eval": {"target": "annotations"}},
            {"det_weights": {"alpha_fake": -1.0}},
            {"det_weights": {"grid": "var3"}},
            {"data": {"domains": ["ct"]}},
            {"train": {"detector": {"batch_size": 0}}},
            {"detector": "deep"},
        ):
            with self.subTest(tree=tree):
                with self.assertRaises(ConfigurationError):
                    build_section(ExperimentConfig, tree)

    def test_overrides_and_universal_flags(self):
        cfg = load_experiment(
            self.descriptor,
            overrides=["det_weights.grid=var2", "train.gan.epochs=5", "eval.target=translated"],
            seed=9, fold=1, device="cpu",
        )
        self.assertEqual(cfg.det_weights.build().variant.value, "var2")
        self.assertEqual(cfg.train.gan.epochs, 5)
        self.assertIs(cfg.eval.target, EvalTarget.TRANSLATED)
        self.assertEqual((cfg.seed, cfg.train.detector.seed, cfg.train.gan.seed), (9, 9, 9))
        self.assertEqual(cfg.experiment.folds, [1])
        self.assertEqual(cfg.device, "cpu")

    def test_discriminator_layout_is_overridable(self):
        default = load_experiment()
        self.assertEqual(default.gan.discriminator.norm_layers, (2, 3, 5))
        self.assertTrue(default.gan.discriminator.final_activation)
        cfg = load_experiment(
            overrides=["gan.discriminator.norm_layers=[2, 3, 4]", "gan.discriminator.final_activation=false"]
        )
        self.assertEqual(cfg.gan.discriminator.norm_layers, (2, 3, 4))
        self.assertFalse(cfg.gan.discriminator.final_activation)

    def test_parse_override(self):
        self.assertEqual(parse_override("eval.radius=4.5"), ("eval.radius", 4.5))
        self.assertEqual(parse_override("experiment.folds=[0, 2]"), ("experiment.folds", [0, 2]))
        with self.assertRaises(ConfigurationError):
            parse_override("eval.radius")

    def test_resolved_config_reloads_to_the_same_tree(self):
        cfg = load_experiment(self.descriptor)
        path = write_resolved(cfg, Path(self.tmp.name) / "out")
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
        self.assertEqual(data["experiment"]["seed"], 3)
        self.assertEqual(data["detector"]["dropout"], [0.3, 0.4, 0.5])
        self.assertEqual(to_plain(build_section(ExperimentConfig, data)), to_plain(cfg))

    def test_missing_descriptor(self):
        with self.assertRaises(MissingArtifactError):
            load_experiment(Path(self.tmp.name) / "absent.yaml")


class RunCommandTests(TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.workspace = Path(self.tmp.name)
        self.descriptor = _write_descriptor(self.workspace / "tiny.yaml")
        self.workspace_override = override_settings(WORKSPACE_ROOT=self.workspace)
        self.workspace_override.enable()

    def tearDown(self):
        self.workspace_override.disable()
        self.tmp.cleanup()

    def _run(self, stage, *overrides, **options):
        out = StringIO()
        call_command(
            "run", stage, descriptor=str(self.descriptor), overrides=list(overrides),
            stdout=out, stderr=StringIO(), no_color=True, **options,
        )
        return json.loads(out.getvalue())

    def _exit_code(self, stage, *overrides, **options):
        with self.assertRaises(CommandError) as ctx:
            self._run(stage, *overrides, **options)
        return ctx.exception.returncode

    def test_identical_annotations_score_one(self):
        self._run("synth-gen")
        labels = self.workspace / "data" / "annotations" / "or"
        result = self._run("evaluate", "eval.target=annotations", f"eval.predictions={labels}")
        report = load_report(result["outputs"][0])
        self.assertEqual(report.summary.mean["f1"], 1.0)
        self.assertEqual(report.summary.fold_ids, [0, 1])
        self.assertTrue((Path(result["outputs"][0]).parent / "resolved_config.yaml").exists())

        masks = load_report(self._run("evaluate", "eval.target=masks", f"eval.predictions={labels}")["outputs"][0])
        self.assertEqual(masks.summary.mean["dice"], 1.0)
        self.assertEqual(masks.summary.mean["mse"], 0.0)

    def test_error_categories_map_to_exit_codes(self):
        self.assertEqual(self._exit_code("report", "detector.depthh=3"), 2)
        self.assertEqual(self._exit_code("report"), 3)
        self._run("synth-gen")
        self.assertEqual(self._exit_code("train-gan", "det_weights.grid=var1"), 2)
        self.assertEqual(self._exit_code("translate"), 3)
        self.assertEqual(self._exit_code("fuse-retrain", "data.test_manifest=null"), 2)
        self.assertEqual(self._exit_code("train-detector", "experiment.folds=[5]"), 2)

    def test_missing_descriptor_file(self):
        with self.assertRaises(CommandError) as ctx:
            call_command("run", "report", descriptor=str(self.workspace / "absent.yaml"), stderr=StringIO())
        self.assertEqual(ctx.exception.returncode, 3)

    def _pipeline(self, root):
        root_override = f"experiment.root={root}"
        self._run("train-detector", root_override)
        self._run("train-gan", root_override, "det_weights.grid=var1")
        self._run("translate", root_override)
        self._run("evaluate", root_override, "eval.target=translated")
        self._run("fuse-retrain", root_override)
        self._run("evaluate", root_override, "eval.target=held_out")
        self._run("evaluate", root_override, "eval.target=fused")
        return self._run("report", root_override)

    def test_full_pipeline_is_deterministic(self):
        self._run("synth-gen")
        first = self._pipeline("runs/a")
        second = self._pipeline("runs/b")

        histories = [
            Path("detector/or/fold_0/history.jsonl"),
            Path("detector/sim/fold_1/history.jsonl"),
            Path("gan/tiny/fold_0/history.jsonl"),
            Path("fusion/tiny/fold_1/history.jsonl"),
        ]
        for relative in histories:
            with self.subTest(history=str(relative)):
                a = (self.workspace / "runs/a" / relative).read_bytes()
                b = (self.workspace / "runs/b" / relative).read_bytes()
                self.assertTrue(a)
                self.assertEqual(a, b)

        table = Path(first["outputs"][0]).read_text(encoding="utf-8")
        for name in ("tiny-translated", "tiny-held_out", "tiny-fused"):
            self.assertIn(name, table)
        self.assertEqual(table, Path(second["outputs"][0]).read_text(encoding="utf-8"))
        self.assertEqual(self._run("report", "experiment.root=runs/a")["outputs"], first["outputs"])
        self.assertEqual(Path(first["outputs"][0]).read_text(encoding="utf-8"), table)
        for stage_dir in ("detector/or", "gan/tiny", "fusion/tiny", "reports"):
            self.assertTrue((self.workspace / "runs/a" / stage_dir / "resolved_config.yaml").exists())
        self.assertEqual(TrainRun.objects.filter(experiment_id="tiny", stage="gan", status="completed").count(), 4)


@unittest.skipUnless(settings.RUN_SLOW_TESTS, "set RUN_SLOW_TESTS=1 for full synthetic training runs")
class AcceptanceTests(TestCase):
    """Desk-scale directional checks; tens of minutes on a GPU, hours on CPU."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.workspace_override = override_settings(WORKSPACE_ROOT=Path(self.tmp.name))
        self.workspace_override.enable()

    def tearDown(self):
        self.workspace_override.disable()
        self.tmp.cleanup()

    def _run(self, descriptor, stage, *overrides, seed=None):
        out = StringIO()
        call_command(
            "run", stage, descriptor=str(Path(settings.BASE_DIR) / "configs" / descriptor),
            overrides=list(overrides), seed=seed, stdout=out, stderr=StringIO(), no_color=True,
        )
        return json.loads(out.getvalue())

    def test_detection_consistency_preserves_sutures(self):
        descriptor = "acceptance-consistency.yaml"
        self._run(descriptor, "synth-gen")
        self._run(descriptor, "train-detector")
        scores = {}
        for name in ("baseline", "var1"):
            overrides = (f"experiment.id={name}", f"det_weights.grid={name}")
            self._run(descriptor, "train-gan", *overrides)
            self._run(descriptor, "translate", *overrides)
            result = self._run(descriptor, "evaluate", *overrides, "eval.target=translated")
            scores[name] = result["summary"]["mean"]["f1"]
        self.assertGreaterEqual(scores["var1"] - scores["baseline"], 0.15)

    def test_fusion_does_not_hurt_held_out_detection(self):
        descriptor = "acceptance-fusion.yaml"
        self._run(descriptor, "synth-gen")
        for seed in (0, 1, 2):
            root = f"experiment.root=runs/acceptance-fusion/seed-{seed}"
            for stage in ("train-detector", "train-gan", "translate", "fuse-retrain"):
                self._run(descriptor, stage, root, seed=seed)
            real_only = self._run(descriptor, "evaluate", root, "eval.target=held_out", seed=seed)
            fused = self._run(descriptor, "evaluate", root, "eval.target=fused", seed=seed)
            with self.subTest(seed=seed):
                self.assertGreaterEqual(
                    fused["summary"]["mean"]["f1"], real_only["summary"]["mean"]["f1"] - 0.02
                )
