"""Named, seedable uniform streams.

Both simulation kernels consume randomness as a flat sequence of uniforms
drawn in fixed-size blocks, so the compiled and pure-Python paths see
exactly the same numbers for a given seed.
"""
from __future__ import annotations

import numpy as np

BLOCK = 4096


def chain_seed(master_seed: int, chain_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master_seed) & (2**64 - 1), int(chain_index)])


class UniformStream:
    """Buffered stream of uniforms in [0, 1) backed by a PCG64 generator."""

    def __init__(self, seed: int = 0, chain_index: int = 0, name: str = "chain"):
        self.name = name
        self.seed = int(seed)
        self.chain_index = int(chain_index)
        self.generator = np.random.Generator(np.random.PCG64(chain_seed(seed, chain_index)))
        self.buf = self.generator.random(BLOCK)
        self.pos = 0

    def refill(self) -> np.ndarray:
        self.buf = self.generator.random(BLOCK)
        self.pos = 0
        return self.buf

    def next(self) -> float:
        if self.pos == len(self.buf):
            self.refill()
        u = self.buf[self.pos]
        self.pos += 1
        return float(u)

    def spawn(self, name: str) -> "UniformStream":
        """An independent child stream, deterministic in (seed, chain_index, name)."""
        tag = int.from_bytes(name.encode()[:8].ljust(8, b"\0"), "little")
        child = UniformStream.__new__(UniformStream)
        child.name = f"{self.name}/{name}"
        child.seed = self.seed
        child.chain_index = self.chain_index
        ss = np.random.SeedSequence([self.seed & (2**64 - 1), self.chain_index, tag])
        child.generator = np.random.Generator(np.random.PCG64(ss))
        child.buf = child.generator.random(BLOCK)
        child.pos = 0
        return child

    def __repr__(self):
        return f"UniformStream({self.name!r}, seed={self.seed}, chain={self.chain_index}, pos={self.pos})"
