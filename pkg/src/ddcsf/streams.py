"""Named random streams derived from a single master seed.

Every piece of randomness in the package flows through `derive_rng`, keyed
by a human-readable stream name such as ``"wake/cycle=3"``. Streams are
independent of each other and of the order in which unrelated work runs,
so adding a new consumer never perturbs existing outputs.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _name_words(name: str) -> list[int]:
    # sha256 rather than hash(): stable across processes and Python builds
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


def derive_rng(master_seed: int, name: str) -> np.random.Generator:
    """Return a Generator for the stream `name` under `master_seed`."""
    seq = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFF, *_name_words(name)])
    return np.random.Generator(np.random.PCG64(seq))
