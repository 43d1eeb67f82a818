"""Counter-based deterministic random number generation.

Every random draw in the library is produced by a Philox counter-based
generator keyed by ``(seed, stream, index)``.  Independent draws are made by
bumping ``index`` (each index owns a disjoint 2**128 block of the Philox
counter space), so parallel workers never share generator state and any draw
can be reproduced bit-for-bit in isolation.

Stream numbers are allocated once, here, so that the same user seed never
feeds two unrelated consumers the same bits.
"""

from dataclasses import dataclass

import numpy as np

# Stream allocation. Keep values stable: they are part of the
# reproducibility contract of serialized runs.
STREAM_OPTIMIZER = 0  # per-step perturbation draws (index = step count)
STREAM_INIT = 1       # model weight initialization
STREAM_SHUFFLE = 2    # minibatch shuffling (index = epoch)
STREAM_DATASET = 3    # synthetic dataset generation
STREAM_SPLIT = 4      # train/test splitting
STREAM_ANALYSIS = 5   # Monte-Carlo loops in the verification toolkit

_MASK64 = (1 << 64) - 1


def philox_generator(seed: int, stream: int = 0, index: int = 0) -> np.random.Generator:
    """A fresh ``numpy`` Generator for the (seed, stream, index) cell."""
    key = np.array([seed & _MASK64, stream & _MASK64], dtype=np.uint64)
    # index selects a disjoint 2**128-sized counter block
    counter = np.array([0, 0, index & _MASK64, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


@dataclass(frozen=True)
class GaussianSample:
    """A standard-normal draw together with the coordinates that produced it."""

    eta: np.ndarray
    seed: int
    stream: int
    index: int


def sample_eta(p: int, seed: int, stream: int = 0, index: int = 0) -> np.ndarray:
    """Length-``p`` standard-normal draw, bit-reproducible per (seed, stream, index).

    Raises ``ValueError`` if ``p`` is not a positive integer.
    """
    if p <= 0:
        raise ValueError(f"p must be positive, got {p}")
    return philox_generator(seed, stream, index).standard_normal(p)


def sample_eta_record(p: int, seed: int, stream: int = 0, index: int = 0) -> GaussianSample:
    """Like :func:`sample_eta` but keeps the generator coordinates alongside."""
    return GaussianSample(sample_eta(p, seed, stream, index), seed, stream, index)
