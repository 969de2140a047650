"""Deterministic seed fan-out: one root seed, named independent substreams."""

from __future__ import annotations

import hashlib

import numpy as np


def substream_seed(root_seed: int, *keys) -> int:
    """Derive a stable 63-bit seed from a root seed and a tuple of keys."""
    h = hashlib.sha256()
    h.update(str(int(root_seed)).encode())
    for k in keys:
        h.update(b"/")
        h.update(str(k).encode())
    return int.from_bytes(h.digest()[:8], "little") >> 1


def substream(root_seed: int, *keys) -> np.random.Generator:
    """Independent numpy generator for the (root, keys) substream."""
    return np.random.default_rng(substream_seed(root_seed, *keys))
