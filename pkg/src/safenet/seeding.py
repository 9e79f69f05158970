"""Named, reproducible random streams.

Every random draw in the package comes from a generator derived from one
integer seed plus a tuple of string/int tags naming the consumer. Streams
with different tags never interfere, so adding a draw in one place cannot
shift the values seen by another.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _tag_to_int(tag: int | str) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag)
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_rng(seed: int, *tags: int | str) -> np.random.Generator:
    """Return a Generator keyed by (seed, *tags).

    Tags may be ints or strings; strings are hashed stably, so the mapping
    is identical across processes and platforms.
    """
    entropy = [int(seed)] + [_tag_to_int(t) for t in tags]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def derive_seed(seed: int, *tags: int | str) -> int:
    """Collapse (seed, *tags) to a single int for APIs that take one seed."""
    entropy = [int(seed)] + [_tag_to_int(t) for t in tags]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])
