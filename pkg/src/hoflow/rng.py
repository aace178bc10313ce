"""Deterministic random streams.

All randomness in the package funnels through `stream(seed, name)`: a
counter-based Philox generator keyed by the experiment seed and a stream
name.  Streams with different names are independent, and results do not
depend on evaluation order or thread count as long as each logical task
owns its own stream.
"""

import hashlib

import numpy as np


def stream_key(seed: int, name: str) -> int:
    h = hashlib.sha256(f"{seed}:{name}".encode()).digest()
    return int.from_bytes(h[:16], "little")


def stream(seed: int, name: str) -> np.random.Generator:
    """Independent Generator for (seed, name)."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, name)))
