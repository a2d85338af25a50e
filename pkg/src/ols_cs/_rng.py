"""Deterministic random streams.

Every random object is drawn from its own stream.  A stream is a numpy
``Philox4x64-10`` counter-based generator keyed by a 64-bit value::

    key = int.from_bytes(blake2b(b"ols-cs|" + "|".join(map(str, parts)), digest_size=8), "little")

where ``parts`` is the seed followed by purpose tags and grid coordinates.
The recipe only uses a standard hash and a published generator, so the
streams are reproducible from any language that has both.
"""

from __future__ import annotations

import hashlib

import numpy as np

_PREFIX = b"ols-cs|"


def stream_key(*parts) -> int:
    """Stable 64-bit hash of ``parts`` (ints, floats or strings)."""
    text = "|".join(str(p) for p in parts).encode("utf-8")
    digest = hashlib.blake2b(_PREFIX + text, digest_size=8).digest()
    return int.from_bytes(digest, "little")


def make_rng(seed, *tags) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=stream_key(seed, *tags)))
