"""Counter-based RNG streams derived from a master seed.

Each stream is keyed by ``(master_seed, *keys)`` so that results never depend
on how work is split across workers.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key(k) -> int:
    if isinstance(k, str):
        return zlib.crc32(k.encode("utf-8"))
    return int(k)


def stream(seed: int, *keys) -> np.random.Generator:
    ss = np.random.SeedSequence([_key(seed), *(_key(k) for k in keys)])
    return np.random.Generator(np.random.Philox(ss))


def child_seed(seed: int, *keys) -> int:
    return int(stream(seed, *keys).integers(0, 2**31 - 1))
