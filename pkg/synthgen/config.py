"""
Configuration for the synthetic two-domain scene generator.
"""

# Scene geometry
SCENE_WIDTH = 128
SCENE_HEIGHT = 128
N_SUTURES = (2, 12)  # per-image suture count range (inclusive)
VALVE_RADIUS_FRACTION = 0.4  # disk radius relative to min(W, H)
ENDPOINT_RADIUS_RANGE = (0.75, 1.0)  # endpoints sit near the disk boundary
ENDPOINT_ANGLE_GAP = (0.15, 0.45)  # radians between a suture's entry and exit
CONTROL_JITTER = 6.0  # pixels
CURVE_SAMPLES = 24
MIN_ENDPOINT_SEPARATION = 2  # pixels (Chebyshev) between a suture's rounded entry and exit
MAX_SUTURE_DRAWS = 100
STROKE_WIDTH = 2

# Clutter
OCCLUSION_PROBABILITY = 0.3
TEXTURE_BLUR_SIGMA = 3.0

# Dataset layout
DEFAULT_GROUPS = 4
IMAGES_DIR = "images"
ANNOTATIONS_DIR = "annotations"
MANIFEST_NAME = "manifest.jsonl"
TEST_MANIFEST_NAME = "manifest_test.jsonl"
