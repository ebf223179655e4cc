"""One root seed, many independent streams.

Each subsystem draws from ``stream(seed, name, *counters)``; the generator is
keyed on the tuple, so adding draws to one subsystem never shifts another.
"""

import numpy as np

STREAMS = {"split": 0, "init": 1, "shuffle": 2, "lai_select": 3, "noise": 4, "data": 5}

_MASK64 = (1 << 64) - 1


def stream(seed: int, name: str, *counters: int) -> np.random.Generator:
    key = [int(seed) & _MASK64, STREAMS[name], *(int(c) for c in counters)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))
