"""Counter-based random streams.

All randomness flows through Philox generators keyed by ``(seed, stream
ids...)`` so that independent streams (instance generation, per-repetition
noise, sign draws) are reproducible and order-independent: drawing from one
stream never perturbs another.
"""

import zlib

import numpy as np


def _as_int(x):
    if isinstance(x, (int, np.integer)):
        return int(x) & 0xFFFFFFFF
    if isinstance(x, str):
        return zlib.crc32(x.encode())
    raise TypeError(f"stream id must be int or str, got {type(x)!r}")


def stream(seed, *ids):
    """Return a ``numpy.random.Generator`` for the stream ``(seed, *ids)``.

    Identical arguments always yield a generator in an identical state.
    """
    key = np.random.SeedSequence(entropy=int(seed) & (2**63 - 1),
                                 spawn_key=tuple(_as_int(i) for i in ids))
    return np.random.Generator(np.random.Philox(key))
