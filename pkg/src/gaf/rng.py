"""Counter-based random streams.

Every random draw in the package comes from a Philox generator keyed by
a user seed with the 256-bit counter preset to (0, 0, purpose, index).
Distinct (purpose, index) pairs give non-overlapping streams without any
sequential state, so stream i is reproducible in isolation: drawing for
training iteration 7 never depends on iterations 0..6 having run, and
adding a new consumer (say an extra K head) leaves every existing stream
untouched.
"""

import numpy as np

# purpose codes; values are part of the reproducibility contract
INIT = 1  # parameter initialization, index = tensor group slot
TRAIN_NOISE = 2  # z_y draws, index = iteration
TRAIN_TIME = 3  # bridge time draws, index = iteration
TRAIN_BATCH = 4  # minibatch row selection, index = iteration
DATA = 5  # synthetic dataset generation, index = class
LATENT = 6  # sampling-time z_0 draws
METRIC = 7  # metric internals (sliced projections, eval bridges)

# index slots within INIT; head slots leave room for deep trunks below
INIT_TIME_PROJ = 0
INIT_CLASS_TABLE = 1
INIT_TRUNK_IN = 2
INIT_TRUNK_BLOCK = 3  # block i uses slot 3 + i
INIT_HEAD_J = 1000
INIT_HEAD_K = 1001  # class m uses slot 1001 + m


def stream(seed, purpose, index=0):
    """Independent Generator for (seed, purpose, index).

    Counter-based: no generator ever needs to be advanced past another
    stream's draws. A single stream supports ~2^128 draws before its
    counter could touch a neighbour, far beyond any use here.
    """
    if purpose < 0 or index < 0:
        raise ValueError(f"purpose and index must be nonnegative, got ({purpose}, {index})")
    counter = np.array([0, 0, purpose, index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=np.uint64(seed), counter=counter))
