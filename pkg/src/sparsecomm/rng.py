"""Reference random streams.

Every random draw in the package comes from a Philox-4x64 counter-based
generator keyed by a ``numpy.random.SeedSequence``.  Streams are split by
appending integers to the seed's spawn key, e.g. ``make_rng(seed, WORKER,
worker_id, iteration)``, so each (worker, iteration) pair owns an
independent, reproducible stream regardless of execution order.
"""

import numpy as np

# spawn-key domains
INIT = 0
SHUFFLE = 1
WORKER = 2
TRIAL = 3
DATA = 4
SAMPLE = 5


def make_rng(seed, *key):
    if seed is None:
        raise ValueError("a seed is required; time-based seeding is not supported")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def sample_without_replacement(rng, d, k):
    """Draw ``k`` distinct indices from ``range(d)`` by partial Fisher-Yates.

    Position ``i`` is swapped with ``j_i`` drawn uniformly from ``[i, d)``;
    the ``k`` draws are taken in one batch from ``rng`` and the swaps are
    tracked in a dict so memory stays O(k).  The returned order is the
    shuffle order, not sorted.
    """
    if not 0 <= k <= d:
        raise ValueError(f"cannot sample {k} of {d}")
    if k == 0:
        return np.empty(0, dtype=np.int64)
    draws = rng.integers(np.arange(k), d)
    swapped = {}
    out = np.empty(k, dtype=np.int64)
    for i, j in enumerate(draws.tolist()):
        vi = swapped.get(i, i)
        out[i] = swapped.get(j, j)
        swapped[j] = vi
    return out
