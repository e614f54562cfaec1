"""
Seeded random streams keyed by (master_seed, stream_index)
"""

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from safety.guards import ParameterError


# Child keys used inside one replicate.
SYSTEM_STREAM = 0
TRAIN_STREAM = 1
TEST_STREAM = 2
SELECTION_STREAM = 3
SPLIT_STREAM = 4


@dataclass(frozen=True)
class RngStream:
    """Reproducible generator source.

    The key is fed to numpy's SeedSequence as (entropy=master_seed,
    spawn_key=(stream_index, *path)) and drives a PCG64 bit generator, so
    the same key yields the same draws on every platform and distinct keys
    never share a stream.
    """
    master_seed: int
    stream_index: int = 0
    path: Tuple[int, ...] = field(default=())

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ParameterError(f"master_seed must fit in 64 bits, got {self.master_seed}")
        if int(self.stream_index) < 0 or any(int(p) < 0 for p in self.path):
            raise ParameterError("stream indices must be non-negative", stream_index=self.stream_index)

    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(
            entropy=int(self.master_seed),
            spawn_key=(int(self.stream_index), *(int(p) for p in self.path)),
        )

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at the start of this stream."""
        return np.random.Generator(np.random.PCG64(self.seed_sequence()))

    def child(self, key: int) -> "RngStream":
        return RngStream(self.master_seed, self.stream_index, self.path + (int(key),))

    @property
    def seed64(self) -> int:
        """64-bit fingerprint of this stream, recorded next to results."""
        return int(self.seed_sequence().generate_state(1, dtype=np.uint64)[0])
