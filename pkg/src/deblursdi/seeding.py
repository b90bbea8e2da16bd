"""Deterministic seed derivation.

Every stream of randomness in a run is keyed by (base seed, purpose tag,
index) so that runs are bit-reproducible and independent streams never
collide. Tags hash through crc32, which is stable across platforms.
"""

import zlib

import numpy as np


def derive_seed(base_seed, tag, index=0):
    entropy = (int(base_seed), zlib.crc32(tag.encode("utf-8")), int(index))
    state = np.random.SeedSequence(entropy).generate_state(2, np.uint32)
    return int(state.view(np.uint64)[0])
