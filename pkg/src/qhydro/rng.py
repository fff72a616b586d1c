"""Counter-based random streams addressed by (seed, step, path).

Each draw is a pure function of its address, so any split of the paths into
chunks (threads, processes) reproduces the same numbers bit for bit.  Built on
numpy's Philox: the key is the seed, counter word 1 is the step, and path ``i``
owns uniforms ``2i`` and ``2i + 1`` of the step's stream.
"""
from __future__ import annotations

import numpy as np

_WORDS_PER_BLOCK = 4  # Philox4x64 emits four 64-bit words per counter value


def _generator(seed: int, step: int, first_word: int) -> np.random.Generator:
    if first_word % _WORDS_PER_BLOCK:
        raise ValueError("stream offsets must be aligned to Philox blocks")
    counter = [first_word // _WORDS_PER_BLOCK, int(step), 0, 0]
    return np.random.Generator(np.random.Philox(key=int(seed), counter=counter))


def uniform_pairs(seed: int, step: int, start: int, count: int) -> np.ndarray:
    """Two uniforms in [0, 1) per path for paths ``start .. start+count-1``.

    Returns shape ``(count, 2)``.
    """
    word = 2 * start
    pad = word % _WORDS_PER_BLOCK
    draws = _generator(seed, step, word - pad).random(pad + 2 * count)
    return draws[pad:].reshape(count, 2)


def uniforms(seed: int, step: int, start: int, count: int) -> np.ndarray:
    """One uniform per path (the first of each path's pair)."""
    return uniform_pairs(seed, step, start, count)[:, 0]


def normals(seed: int, step: int, start: int, count: int) -> np.ndarray:
    """One standard normal per path by Box-Muller on the path's uniform pair."""
    u = uniform_pairs(seed, step, start, count)
    radius = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
    return radius * np.cos(2.0 * np.pi * u[:, 1])
