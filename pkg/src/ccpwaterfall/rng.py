"""Counter-based random substreams.

Every stochastic component draws from its own Philox stream keyed by
``(seed, domain, index)``.  Streams are independent of each other and of any
worker scheduling, so a path's draws are identical whether it is simulated
alone, inside a batch, or on a different chunking of the batch.
"""

from __future__ import annotations

import numpy as np

MIGRATION_DOMAIN = 1
REFERENCE_DOMAIN = 2

_MASK64 = (1 << 64) - 1


def substream(seed: int, domain: int, index: int) -> np.random.Generator:
    """Generator for stream ``index`` of ``domain`` under the run ``seed``."""
    if index < 0 or index > (1 << 48):
        raise ValueError(f"stream index out of range: {index}")
    key = np.array([seed & _MASK64, ((domain & 0xFFFF) << 48) | index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
