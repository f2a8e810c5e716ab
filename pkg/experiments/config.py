"""
Experiment pipeline layout and defaults.
"""

# Artifact layout below <WORKSPACE_ROOT>/<experiment.root>/
DETECTOR_DIR = "detector"  # detector/<domain>/fold_<i>/
GAN_DIR = "gan"  # gan/<experiment id>/fold_<i>/
TRANSLATED_DIR = "translated"  # translated/<experiment id>/fold_<i>/
FUSION_DIR = "fusion"  # fusion/<experiment id>/fold_<i>/
EVAL_DIR = "eval"  # eval/<name>/
REPORTS_DIR = "reports"
FOLD_DIR = "fold_{fold}"

RESOLVED_CONFIG_FILE = "resolved_config.yaml"
TABLE_FILE = "table.csv"

# Descriptor defaults
DEFAULT_MANIFEST = "data/manifest.jsonl"
DEFAULT_TEST_MANIFEST = "data/manifest_test.jsonl"
DEFAULT_DOMAINS = ("sim", "or")
SYNTH_IMAGES = 400
SYNTH_GROUPS = 4

COMMANDS = (
    "synth-gen",
    "train-detector",
    "train-gan",
    "translate",
    "evaluate",
    "fuse-retrain",
    "report",
)
