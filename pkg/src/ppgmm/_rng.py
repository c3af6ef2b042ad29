import zlib

import numpy as np


def rng_for(seed, *labels):
    """Generator for the sub-stream ``labels`` of a master ``seed``.

    Streams with different labels are independent, so e.g. changing the
    number of Monte Carlo trials never perturbs the graph or the masks.
    """
    key = [zlib.crc32(str(label).encode()) for label in labels]
    entropy = None if seed is None else int(seed)
    return np.random.default_rng(np.random.SeedSequence(entropy, spawn_key=key))
