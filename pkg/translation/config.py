"""
Configuration for the translation generators, discriminators and losses.
"""

# Generators
RESIDUAL_FILTERS = 32
RESIDUAL_BLOCKS = 6
DOWNSAMPLING_BLOCKS = 2
EDGE_KERNEL = 7  # input and output convolutions

# Discriminators
DISCRIMINATOR_FILTERS = 64
DISCRIMINATOR_KERNEL = 4
DISCRIMINATOR_NORM_LAYERS = (2, 3, 5)  # 1-based layer indices carrying instance norm
DISCRIMINATOR_FINAL_ACTIVATION = True  # LeakyReLU after the last convolution too
LEAKY_SLOPE = 0.2

# Initialization
INIT_GAIN = 0.02

# Loss weights
LAMBDA_CYCLE = 10.0
LAMBDA_IDENTITY = 5.0
ADVERSARIAL_FORM = "least_squares"

# Replay buffer
BUFFER_CAPACITY = 50
BUFFER_SWAP_PROBABILITY = 0.5

# Optimization
LEARNING_RATE = 2e-4
BATCH_SIZE = 8
EPOCHS = 60
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
