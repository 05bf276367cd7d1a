"""Deterministic seed derivation.

Every stochastic consumer (bootstrap draw, feature subsample, fold shuffle,
search trial) gets a child seed derived from the master seed and a path of
labels, so parallel and serial runs consume identical random streams. The
scheme is a SHA-256 hash of ``master/label1/label2/...`` truncated to 64 bits.
"""

from __future__ import annotations

import hashlib

import numpy as np


def child_seed(master: int, *path: int | str) -> int:
    """64-bit seed for the stream identified by (master, *path)."""
    h = hashlib.sha256(str(int(master)).encode())
    for part in path:
        h.update(b"/")
        h.update(str(part).encode())
    return int.from_bytes(h.digest()[:8], "big")


def child_rng(master: int, *path: int | str) -> np.random.Generator:
    """Generator seeded by :func:`child_seed`."""
    return np.random.default_rng(child_seed(master, *path))
