"""
Configuration for the landmark detection network and its training.
"""

# Architecture
DEPTH = 4  # down/up blocks
BASE_CHANNELS = 64
DROPOUT_SCHEDULE = (0.3, 0.35, 0.4, 0.45, 0.5)  # outer level -> bottleneck
UPSAMPLING = "bilinear"

# Differentiable head
GAUSSIAN_KERNEL = 3
GAUSSIAN_SIGMA = 1.0
SOFTARGMAX_WINDOW = 3
SOFTARGMAX_TEMPERATURE = 1.0

# Targets and loss
HEATMAP_SIGMA = 2.0
DICE_SMOOTHING = 1.0
MSE_REDUCTION = "mean"

# Optimization
LEARNING_RATE = 1e-3
BATCH_SIZE = 32
EPOCHS = 100
PLATEAU_FACTOR = 0.1
PLATEAU_PATIENCE = 10  # epochs without validation improvement
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
