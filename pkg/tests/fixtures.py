"""
Test Fixtures and Constants
Shared test data to avoid hardcoded values across test files
"""

import math

# Tiny feature shapes so synthetic corpora stay small on disk
TINY_FEATURE_DIM = 8
TINY_GRID_CELLS = 4

# Synthetic corpus used by integration tests
SYNTH_SEED = 7
SYNTH_SAMPLES = 24

# Worked metric examples
MACRO_F1_GOLD = ["A", "A", "B", "B"]
MACRO_F1_PRED = ["A", "B", "B", "B"]
MACRO_F1_EXPECTED = 11 / 15
KAPPA_A = ["X", "X", "Y"]
KAPPA_B = ["X", "Y", "Y"]
KAPPA_EXPECTED = 0.4
IOU_BOX_A = (0.0, 0.0, 2.0, 2.0)
IOU_BOX_B = (1.0, 1.0, 2.0, 2.0)
IOU_EXPECTED = 1 / 7

# Loss of a uniform 4-way prediction
UNIFORM_LOSS = math.log(4.0)

# Training defaults
DEFAULT_LEARNING_RATE = 3e-5
DEFAULT_BATCH_SIZE = 4
DEFAULT_HEADS = 12
DEFAULT_MAX_LEN = 170
DEFAULT_DROPOUT = 0.1

# Box that violates x + w <= 1
BOX_OUT_OF_RANGE = [0.9, 0.9, 0.2, 0.2]
