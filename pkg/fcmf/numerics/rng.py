"""Named, seeded random streams

One master seed per run. Each consumer (parameter init, dropout, batch
shuffling, synthetic generation, ...) asks for its own stream by name, so
adding draws in one place never shifts the numbers seen by another.
"""

from __future__ import annotations

import zlib
from typing import Any

import numpy as np


class RngStreams:
    """Splittable RNG keyed by stream name

    Streams are PCG64 generators seeded from SeedSequence(seed, spawn_key=(crc32(name),)),
    which is integer-only and platform independent.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: dict[str, np.random.Generator] = {}

    def stream(self, name: str) -> np.random.Generator:
        if name not in self._streams:
            seq = np.random.SeedSequence(self.seed, spawn_key=(zlib.crc32(name.encode("utf-8")),))
            self._streams[name] = np.random.Generator(np.random.PCG64(seq))
        return self._streams[name]

    def state_dict(self) -> dict[str, Any]:
        """JSON-serialisable states of every stream drawn from so far"""
        return {name: gen.bit_generator.state for name, gen in sorted(self._streams.items())}

    def load_state_dict(self, states: dict[str, Any]) -> None:
        for name, state in states.items():
            self.stream(name).bit_generator.state = state
