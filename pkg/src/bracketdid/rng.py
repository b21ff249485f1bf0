"""Counter-based random streams.

Every stream is a Philox-4x64 generator (numpy's ``Philox``) whose 128-bit key
is ``(seed, domain)`` and whose counter starts at ``(0, 0, 0, index)``. Streams
for different indices never overlap unless one of them draws 2**64 blocks, so a
replicate's randomness depends only on ``(seed, domain, index)`` and not on
which worker computes it or in what order.
"""
from __future__ import annotations

import numpy as np

__all__ = ["stream", "derive_seeds", "BOOTSTRAP", "DGP", "FALSIFICATION"]

MASK64 = (1 << 64) - 1

# domain tags keep e.g. data generation and resampling streams disjoint for one seed
BOOTSTRAP = 0
DGP = 1
FALSIFICATION = 2


def stream(seed: int, index: int = 0, domain: int = BOOTSTRAP) -> np.random.Generator:
    """Independent generator for replicate/run ``index`` under ``seed``."""
    if index < 0:
        raise ValueError("stream index must be non-negative")
    key = np.array([seed & MASK64, domain & MASK64], dtype=np.uint64)
    counter = np.array([0, 0, 0, index & MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def derive_seeds(master_seed: int, index: int, n: int = 2) -> list[int]:
    """``n`` 64-bit child seeds for run ``index``, via SeedSequence hashing."""
    ss = np.random.SeedSequence([master_seed & MASK64, index])
    return [int(s) for s in ss.generate_state(n, dtype=np.uint64)]
