import zlib

import numpy as np


def _word(key):
    if isinstance(key, str):
        return zlib.crc32(key.encode())
    return int(key) & 0xFFFFFFFF


def derive_seed(*keys) -> int:
    """Deterministic 32-bit seed from a tuple of ints/strings."""
    words = [_word(k) for k in keys if k is not None]
    return int(np.random.SeedSequence(words).generate_state(1)[0])


def rng(*keys) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*keys))
