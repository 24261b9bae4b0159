"""Deterministic per-path RNG substreams.

Philox is counter-based, so streams keyed on (seed, path index) are
independent and reproducible regardless of execution order.
"""

from __future__ import annotations

import numpy as np


def path_stream(seed: int, index: int) -> np.random.Generator:
    """Independent generator for one simulation path."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, index])))
