"""Deterministic random-stream derivation.

A single master seed fans out to named substreams (scenario, solver, panel,
trainer, ...) through ``SeedSequence`` spawn keys.  Streams are independent
of one another, so adding a new pipeline stage never perturbs the draws of
an existing one.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key_part(part: str | int) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part) & 0xFFFFFFFF


def substream(master_seed: int, *path: str | int) -> np.random.Generator:
    """Generator for the substream named by ``path`` under ``master_seed``.

    Path elements are stream names (strings) or counters (ints).
    """
    key = tuple(_key_part(p) for p in path)
    return np.random.default_rng(np.random.SeedSequence(entropy=master_seed, spawn_key=key))


def as_generator(seed: int | np.random.Generator) -> np.random.Generator:
    """Accept either an integer seed or an existing generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
