"""Counter-based random streams.

Every stochastic component draws from its own Philox stream keyed by a base
seed plus an integer path (replicate index, variable tag, ...). Streams are
independent of execution order, so replicates simulated in parallel are
bitwise identical to serial runs.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_MIX = 0x9E3779B97F4A7C15  # 64-bit golden-ratio constant


def stream(seed: int, *path: int) -> np.random.Generator:
    """Generator for the Philox stream addressed by (seed, *path)."""
    acc = 0
    for part in path:
        acc = ((acc ^ (int(part) & _MASK64)) * _MIX) & _MASK64
    key = np.array([int(seed) & _MASK64, acc], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
