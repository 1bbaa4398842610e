"""
Counter-based random streams.

A stream is identified by ``(seed, stream_id)``; its draws are a pure function
of that pair and the draw index. The Philox bit generator is keyed through a
``SeedSequence`` whose spawn key is the stream id, so disjoint stream ids give
independent, non-overlapping sequences and the result of a Monte Carlo run
does not depend on how streams are scheduled over workers.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

MAX_U64 = 2**64 - 1


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            value = getattr(self, name)
            if not 0 <= int(value) <= MAX_U64:
                raise DomainError(f"{name} must fit in 64 unsigned bits, got {value}")

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at draw index 0 of this stream."""
        sequence = np.random.SeedSequence(
            entropy=int(self.seed), spawn_key=(int(self.stream_id),)
        )
        return np.random.Generator(np.random.Philox(sequence))
