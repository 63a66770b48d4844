"""Seeding helpers shared by streams, policies and the harness.

All randomness goes through ``numpy.random.Generator`` backed by PCG64
(64-bit output). Gaussian draws use numpy's ziggurat ``standard_normal``.
Reproducibility is guaranteed within one build of numpy, not across
languages.
"""

import numpy as np

GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MASK64 = (1 << 64) - 1


def derive_seed(master_seed: int, index: int) -> int:
    """Per-run seed: ``master ^ ((index + 1) * GOLDEN_GAMMA mod 2**64)``."""
    if index < 0:
        raise ValueError(f"index must be >= 0, got {index}")
    return (int(master_seed) & MASK64) ^ (((index + 1) * GOLDEN_GAMMA) & MASK64)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & MASK64))


def draw_index(p: np.ndarray, u: float) -> int:
    """Inverse-CDF sample over ``p`` in index order for one uniform ``u``."""
    cdf = np.cumsum(p)
    k = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    # u * total can land exactly on the last edge through rounding
    return min(k, len(p) - 1)
