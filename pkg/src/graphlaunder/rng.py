"""Counter-based random numbers keyed by integer tuples.

Each draw is a pure function of ``(seed, *keys)``, so results do not depend on
how work is split across workers or on evaluation order.
"""

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def splitmix64(x):
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = x + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def hash_keys(seed, *keys):
    h = splitmix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
    for k in keys:
        k = np.asarray(k).astype(np.int64).astype(np.uint64)
        h = splitmix64(h ^ k)
    return h


def uniform(seed, *keys):
    """Float64 in [0, 1) for every broadcast combination of ``keys``."""
    return (hash_keys(seed, *keys) >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
