"""Counter-based seed derivation.

Every stochastic component draws from ``derive_seed(root, tag, *counters)``,
so a client's stream depends only on (root seed, client id, round) and adding
or removing clients leaves the other streams untouched.
"""

import zlib

import numpy as np


def derive_seed(root: int, tag: str, *counters: int) -> int:
    entropy = [int(root) & 0xFFFFFFFF, zlib.crc32(tag.encode())] + [int(c) for c in counters]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def derive_rng(root: int, tag: str, *counters: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, tag, *counters))
