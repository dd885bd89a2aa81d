"""Seed-scoped random streams.

Every stochastic component (perception noise, fault injection) pulls from its
own named child stream so that enabling or disabling one component never
shifts the draws seen by another, and so matched-seed trials stay comparable
across ablation modes.
"""

from __future__ import annotations

import hashlib
import random


def derive_seed(base_seed: int, *labels: str | int) -> int:
    """Derive a child seed from a base seed and an ordered label path.

    Stable across processes and platforms (no reliance on builtin ``hash``).
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(base_seed)).encode())
    for label in labels:
        h.update(b"/")
        h.update(str(label).encode())
    return int.from_bytes(h.digest(), "big")


def child_stream(base_seed: int, *labels: str | int) -> random.Random:
    """Return an independent ``random.Random`` for the given label path."""
    return random.Random(derive_seed(base_seed, *labels))
