"""Seeded substreams on top of the counter-based Philox generator.

A stream is addressed by an integer seed plus a path of labels, for example
``stream(7, "langevin", step)``.  Labels are hashed into the ``spawn_key`` of a
:class:`numpy.random.SeedSequence`, so any process can reproduce any substream
without sharing state.
"""

import hashlib

import numpy as np


def _label_key(label):
    if isinstance(label, (int, np.integer)) and label >= 0:
        return int(label)
    digest = hashlib.sha256(str(label).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def seed_sequence(seed, *path):
    return np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_label_key(p) for p in path))


def stream(seed, *path):
    """Independent Philox generator for ``(seed, *path)``."""
    return np.random.Generator(np.random.Philox(seed_sequence(seed, *path)))
