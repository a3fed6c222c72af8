"""Counter-based random streams.

A stream is named by a seed and a key path; the same name always yields
the same draws, regardless of which worker thread asks for it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class StreamId:
    seed: int
    key: tuple[int, ...] = ()

    def child(self, *index: int) -> "StreamId":
        return StreamId(self.seed, self.key + tuple(int(i) for i in index))

    def generator(self) -> np.random.Generator:
        sequence = np.random.SeedSequence(int(self.seed), spawn_key=self.key)
        return np.random.Generator(np.random.Philox(sequence))

    def __str__(self) -> str:
        path = "/".join(str(k) for k in self.key)
        return f"{self.seed}:{path}" if path else str(self.seed)


def as_stream(stream: "StreamId | int | None", default_seed: int = 0) -> StreamId:
    if stream is None:
        return StreamId(default_seed)
    if isinstance(stream, StreamId):
        return stream
    return StreamId(int(stream))
