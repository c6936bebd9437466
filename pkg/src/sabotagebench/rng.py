"""Deterministic random streams.

Every stochastic choice in the workbench draws from a named stream derived
from (seed, name). Streams are independent of each other and of the order in
which they are created, so adding a consumer never perturbs existing ones.
Identical (seed, name) always yields an identical sequence.
"""

import hashlib

import numpy as np


def stream(seed: int, name: str) -> np.random.Generator:
    """Return a fresh generator for the given seed and purpose name."""
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    key = int.from_bytes(digest[:8], "little")
    return np.random.default_rng(np.random.SeedSequence([int(seed), key]))
