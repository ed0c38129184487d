"""Reproducible random streams.

A stream is identified by ``(seed, stream_id)``; replicas use distinct
stream ids so that batches can be generated independently and merged in any
order.
"""

from __future__ import annotations

import numpy as np


class RngStream:
    """PCG64 generator keyed by a 64-bit seed and a stream index."""

    def __init__(self, seed: int, stream_id: int = 0, _path: tuple = ()):
        if not 0 <= int(seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if int(stream_id) < 0:
            raise ValueError("stream_id must be nonnegative")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.path = tuple(int(i) for i in _path)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,) + self.path)
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def __repr__(self):
        extra = f", path={self.path}" if self.path else ""
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}{extra})"

    def child(self, index: int) -> "RngStream":
        """Stream for replica ``index``; the spawn key grows by one entry, so
        children never coincide with top-level streams or with each other."""
        if int(index) < 0:
            raise ValueError("index must be nonnegative")
        return RngStream(self.seed, self.stream_id, self.path + (int(index),))

    def uniform(self, size=None) -> np.ndarray:
        """Uniforms on [0, 1)."""
        return self.generator.random(size)

    def open_uniform(self, size=None) -> np.ndarray:
        """Uniforms on (0, 1]."""
        return 1.0 - self.generator.random(size)

    def integers(self, low, high=None, size=None) -> np.ndarray:
        return self.generator.integers(low, high, size=size)

    def exponential(self, size=None) -> np.ndarray:
        # inversion, so that event times are a fixed function of the uniforms
        return -np.log(self.open_uniform(size))

    def kernel_seed(self) -> int:
        """A 32-bit seed for compiled loops that keep their own generator."""
        return int(self.generator.integers(0, 2**32 - 1))
