"""
Generatori seedati e riproducibili.

Ogni estrazione casuale della pipeline passa da qui: un sotto-flusso e'
identificato da (seed, stream, chiavi) e non dipende dall'ordine delle
estrazioni ne' dallo scheduling dei thread.
"""

from enum import IntEnum

import numpy as np

from error_handlers import require


class Stream(IntEnum):
    INIT_NOISE = 0
    ROLL = 1
    STEP_NOISE = 2
    RENOISE = 3
    MASK = 4
    DECODER = 5


class SeedStreams:
    """Albero di generatori PCG64 derivati da un unico seed a 64 bit.

    Chiavi usate: (stage,) per INIT_NOISE/RENOISE, (stage, step) per ROLL,
    (stage, step, patch) per STEP_NOISE.
    """

    def __init__(self, seed: int):
        seed = int(seed)
        require(0 <= seed < 2**64, "seed must be a 64-bit unsigned integer", "seed", seed)
        self.seed = seed

    def generator(self, stream: Stream, *keys: int) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(int(stream), *(int(k) for k in keys)))
        return np.random.Generator(np.random.PCG64(ss))

    def normal(self, shape, stream: Stream, *keys: int) -> np.ndarray:
        return self.generator(stream, *keys).standard_normal(shape)

    def __repr__(self):
        return f"SeedStreams(seed={self.seed})"
