"""Named random substreams derived from a single master seed.

Every source of randomness in the pipeline asks for a substream by name,
e.g. ``generator(master, "mc", 17, "nmf", unit_id, group)``.  Substream keys
are SHA-256 digests of the path, so streams are independent of worker count
and scheduling order, and any stage can be re-run in isolation.
"""

import hashlib
import random

import numpy as np


def derive_key(master_seed: int, *path) -> int:
    """Return a 128-bit key identifying the substream ``path`` of ``master_seed``."""
    h = hashlib.sha256()
    h.update(str(int(master_seed)).encode())
    for part in path:
        h.update(b"\x1f")
        h.update(str(part).encode())
    return int.from_bytes(h.digest()[:16], "big")


def generator(master_seed: int, *path) -> np.random.Generator:
    """Counter-based (Philox) numpy generator for the named substream."""
    return np.random.Generator(np.random.Philox(key=derive_key(master_seed, *path)))


def pyrandom(master_seed: int, *path) -> random.Random:
    """stdlib ``random.Random`` for the named substream.

    Used where exact arbitrary-precision integer draws are needed
    (``randrange`` on big denominators), which numpy does not provide.
    """
    return random.Random(derive_key(master_seed, *path))
