"""Seed splitting: one independent stream per (master seed, channel, path, purpose).

Streams come from ``numpy.random.SeedSequence(master_seed, spawn_key=(channel,
path_index, purpose))``.  A path's draws therefore never depend on how paths
are grouped into batches or workers.
"""
from __future__ import annotations

import numpy as np

NOISE = 0
JUMP = 1
CHAMBER = 2
AUX = 3

# Channels keep samples that must be independent apart (e.g. the HO and the
# Dunkl sample of a two-sample test).  Equal channels give common random numbers.
CHANNELS = {
    "default": 0,
    "ho": 0,
    "dunkl": 1,
    "istar": 2,
    "reference": 3,
    "stats": 4,
}


def stream(master_seed: int, path_index: int, purpose: int = NOISE, channel: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(channel), int(path_index), int(purpose)))
    return np.random.Generator(np.random.PCG64(ss))


def generator(master_seed: int, *key: int) -> np.random.Generator:
    """Generic keyed generator for non-path randomness (permutations, bootstrap)."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


class BlockDraws:
    """Per-path generators drawn in fixed-size blocks of steps.

    ``next_block(b)`` returns an array of shape ``(paths, b) + shape`` whose row
    ``i`` continues path ``i``'s own stream.
    """

    def __init__(self, master_seed, path_ids, purpose, channel, shape, kind="normal"):
        self.gens = [stream(master_seed, i, purpose, channel) for i in path_ids]
        self.shape = tuple(shape)
        self.kind = kind

    def next_block(self, b: int) -> np.ndarray:
        size = (b,) + self.shape
        if self.kind == "normal":
            rows = [g.standard_normal(size) for g in self.gens]
        else:
            rows = [g.random(size) for g in self.gens]
        return np.stack(rows) if rows else np.empty((0,) + size)
