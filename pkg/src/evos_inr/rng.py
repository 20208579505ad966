"""Seeded random streams.

Every stochastic step (initialization, crossover balancer draws, mutation,
uniform sampling) pulls from a counter-based Philox generator, so a seed
replays the same coordinate subsets on any platform.
"""

import numpy as np


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Philox generator for ``seed``; ``stream`` selects an independent key."""
    return np.random.Generator(np.random.Philox(key=[int(seed), int(stream)]))
