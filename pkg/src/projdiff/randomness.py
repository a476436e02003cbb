"""Deterministic random draws used throughout the library.

All Gaussian variates are produced by the Box-Muller transform applied to the
uniform stream of a ``numpy.random.Generator``.  Given the same seed this
yields the same floats on every platform, which keeps simulation outputs
byte-identical across machines; ziggurat-style samplers do not give that
guarantee across numpy builds.
"""

import numpy as np


def normal_stream(rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw ``n`` independent N(0,1) variates from ``rng``'s uniform stream."""
    if n < 0:
        raise ValueError(f"n must be nonnegative, got {n}")
    if n == 0:
        return np.empty(0)
    pairs = (n + 1) // 2
    # 1 - U lies in (0, 1], so the log below is always finite.
    u1 = 1.0 - rng.random(pairs)
    u2 = rng.random(pairs)
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    out = np.empty(2 * pairs)
    out[0::2] = radius * np.cos(angle)
    out[1::2] = radius * np.sin(angle)
    return out[:n]


def normal_matrix(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Matrix of N(0,1) entries, filled row-major from the stream."""
    return normal_stream(rng, rows * cols).reshape(rows, cols)


def categorical(rng: np.random.Generator, probabilities: np.ndarray) -> int:
    """Draw one index from a probability vector using a single uniform."""
    edges = np.cumsum(probabilities)
    u = rng.random() * edges[-1]
    return int(np.searchsorted(edges, u, side="right").clip(0, len(edges) - 1))
