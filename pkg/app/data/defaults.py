# Copyright 2024
# Directory: ContourMARL/app/data/defaults.py

"""
Static defaults: sweep axes, bounding-box perturbation levels and a sample
run configuration.
"""

from typing import List, Tuple

SWEEP_POINTS: Tuple[int, ...] = (32, 64, 128)
SWEEP_ITERATIONS: Tuple[int, ...] = (3, 4, 5, 6, 7)

# (shift_frac, scale_frac); the first level is the unperturbed reference
SENSITIVITY_LEVELS: List[Tuple[float, float]] = [
    (0.0, 0.0),
    (0.1, 0.0),
    (0.2, 0.0),
    (0.0, 0.1),
    (0.0, 0.2),
    (0.1, 0.1),
    (0.2, 0.2),
]

SAMPLE_CONFIG = """\
# ContourMARL run configuration (key = value, '#' starts a comment)
seed = 1

# environment
n_points = 128
horizon = 5
delta = 25.0
k_neighbors = 4
embed_dim = 16

# actor
hidden_dim = 16
layers = 3
window = 8
use_fusion = true

# soft actor-critic
alpha0 = 0.2
beta = 0.5
gamma_discount = 0.99
tau = 0.005
batch_size = 128
warmup_transitions = 128
use_eram = true

# optimization
lr = 1e-4
lr_min = 1e-6
weight_decay = 0.01
epochs = 10
"""
