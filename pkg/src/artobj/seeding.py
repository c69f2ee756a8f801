"""Deterministic seed fan-out.

Every stage that needs randomness derives its own stream from the user's
single seed plus string labels (stage name, object id, ...) by hashing.
Streams are independent, reproducible across platforms and process
restarts, and insensitive to the order other streams are consumed in.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed: int, *labels) -> int:
    """A 64-bit seed from a base seed and a label path."""
    text = ":".join([str(int(seed))] + [str(l) for l in labels])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_rng(seed: int, *labels) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *labels))
