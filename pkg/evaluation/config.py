"""
Evaluation protocol constants.
"""

# Point matching
MATCH_RADIUS = 6.0  # pixels, strict "<"
HEATMAP_THRESHOLD = 0.5
CONNECTIVITY = 8

# Suture mask similarity
MASK_STROKE_WIDTH = 3  # pixels
MASK_DICE_SMOOTHING = 1.0

# Overlays (RGB)
OVERLAY_TP_COLOR = (0, 200, 0)
OVERLAY_FP_COLOR = (220, 0, 0)
OVERLAY_FN_COLOR = (255, 140, 0)
OVERLAY_MARKER_RADIUS = 6
OVERLAY_THICKNESS = 2

# Report files
REPORT_FILE = "report.json"
TABLE_FILE = "table.csv"
OVERLAY_DIR = "overlays"

# Table cell formatting, per metric: (scale, decimals)
TABLE_FORMATS = {
    "ppv": (100.0, 2),
    "tpr": (100.0, 2),
    "f1": (1.0, 4),
    "mse": (1.0, 4),
    "dice": (1.0, 4),
}
