"""Counter-based random streams.

Every stochastic routine in this package draws from a Philox counter-based
generator keyed by (seed, stream index).  Streams with distinct keys are
statistically independent, and a given key always reproduces the same
draws, so serial and parallel schedules agree bit for bit.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def stream(seed: int, index: int = 0) -> np.random.Generator:
    """Generator for logical stream ``index`` under master ``seed``."""
    return np.random.Generator(np.random.Philox(key=[seed & _MASK64, index & _MASK64]))


def path_stream(seed: int, path_index: int) -> np.random.Generator:
    """Per-path generator keyed by (seed, path_index)."""
    return stream(seed, path_index)
