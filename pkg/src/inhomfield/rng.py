"""Counter-keyed random streams.

A stream is identified by (seed, replica, component). Streams are derived
with numpy's SeedSequence spawn keys, so adding a component never changes
the numbers drawn by existing ones.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np


def component_id(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


@dataclass(frozen=True)
class RngStream:
    seed: int
    replica: int = 0
    component: str = "field"

    @property
    def key(self) -> tuple[int, int]:
        return (int(self.replica), component_id(self.component))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=self.key)
        return np.random.Generator(np.random.SFC64(ss))


def stream(seed: int, replica: int = 0, component: str = "field") -> np.random.Generator:
    return RngStream(seed, replica, component).generator()
