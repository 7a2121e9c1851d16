"""
Counter-derived random streams.

Every stream is a function of (entropy, stream id, extra keys) only, so the
simulator and the filter never share draws and a frame can be regenerated
from (seed, k) without replaying earlier frames.
"""

import numpy as np

TRUTH_STREAM = 0
IMAGE_STREAM = 1
FILTER_STREAM = 2


def stream(entropy: int, stream_id: int, *keys: int) -> np.random.Generator:
    """Independent generator for (entropy, stream_id, *keys)."""
    seq = np.random.SeedSequence(entropy=entropy, spawn_key=(stream_id, *keys))
    return np.random.default_rng(seq)


def truth_rng(seed: int) -> np.random.Generator:
    return stream(seed, TRUTH_STREAM)


def frame_rng(seed: int, k: int) -> np.random.Generator:
    return stream(seed, IMAGE_STREAM, k)


def filter_rng(seed: int) -> np.random.Generator:
    return stream(seed, FILTER_STREAM)
