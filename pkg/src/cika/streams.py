"""Deterministic random substreams.

Every random draw in the package comes from a generator keyed by
``(seed, tag path, index)``.  Two calls with the same key produce the same
numbers no matter how many other draws happened in between, which is what
makes parallel replications and resumed runs reproducible.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Union

import numpy as np

Key = Union[str, int]


def tag_id(tag: str) -> int:
    """Stable 32-bit integer for a string tag (independent of PYTHONHASHSEED)."""
    return int.from_bytes(hashlib.blake2b(tag.encode("utf-8"), digest_size=4).digest(), "little")


def _encode(parts: tuple[Key, ...]) -> tuple[int, ...]:
    out = []
    for part in parts:
        if isinstance(part, (bool, np.bool_)):
            raise TypeError("stream keys must be str or int, not bool")
        if isinstance(part, str):
            out.append(tag_id(part))
        else:
            value = int(part)
            if value < 0:
                raise ValueError(f"stream key components must be non-negative, got {value}")
            out.append(value)
    return tuple(out)


@dataclass(frozen=True)
class Stream:
    """A position in the substream tree.

    ``Stream(7).child("icp", 3).rng(5)`` is the generator for draw 5 of the
    ``("icp", 3)`` branch under seed 7.
    """

    seed: int
    path: tuple[int, ...] = ()

    def child(self, *parts: Key) -> "Stream":
        return Stream(self.seed, self.path + _encode(parts))

    def seed_sequence(self, *parts: Key) -> np.random.SeedSequence:
        return np.random.SeedSequence(entropy=self.seed, spawn_key=self.path + _encode(parts))

    def rng(self, *parts: Key) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed_sequence(*parts)))


def as_stream(rng: "Stream | int") -> Stream:
    if isinstance(rng, Stream):
        return rng
    if isinstance(rng, (int, np.integer)) and not isinstance(rng, bool):
        if rng < 0:
            raise ValueError("seed must be non-negative")
        return Stream(int(rng))
    raise TypeError(f"expected a Stream or an integer seed, got {type(rng).__name__}")


def uniforms(stream: Stream, tag: Key, count: int, width: int) -> np.ndarray:
    """``count`` rows of ``width`` uniforms, row ``i`` drawn from substream ``(tag, i)``."""
    out = np.empty((count, width))
    prefix = stream.path + _encode((tag,))
    for i in range(count):
        seq = np.random.SeedSequence(entropy=stream.seed, spawn_key=prefix + (i,))
        out[i] = np.random.Generator(np.random.PCG64(seq)).random(width)
    return out
