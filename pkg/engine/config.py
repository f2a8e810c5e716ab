"""
Configuration for training loops, checkpoints and run artifacts.
"""

# Checkpoint container
CHECKPOINT_FORMAT = "suture-lab-checkpoint"
CHECKPOINT_VERSION = 1
BEST_CHECKPOINT = "best.pt"
LAST_CHECKPOINT = "last.pt"
EPOCH_CHECKPOINT = "epoch_{epoch:03d}.pt"

# Run artifacts
HISTORY_FILE = "history.jsonl"
FAKE_MANIFEST = "manifest.jsonl"
FAKE_IMAGES_DIR = "images"
FAKE_ANNOTATIONS_DIR = "annotations"

# Translation inference
TRANSLATION_BATCH_SIZE = 8

# Stage tags used in logs and metric history
STAGE_DETECTOR = "detector"
STAGE_GAN = "gan"
STAGE_FUSION = "fusion"
