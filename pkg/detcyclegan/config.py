"""
Configuration for the detection-consistency terms.
"""

# Named (alpha_fake, alpha_recovered) settings
WEIGHT_GRID = {
    "baseline": (0.0, 0.0),
    "var1": (1.0, 1.0),
    "var1-recovered-half": (1.0, 0.5),
    "var1-fake-half": (0.5, 1.0),
    "var2": (1.0, 0.0),
}
DEFAULT_GRID_ENTRY = "baseline"

# Ablation terms, off unless an experiment enables them
CROSS_DOMAIN_WEIGHT = 0.0
SEMANTIC_WEIGHT = 0.0
