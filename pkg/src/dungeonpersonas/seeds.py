"""Derivation of child seeds from a master seed.

Every random decision in an experiment flows from one master seed. Child seeds
are hashed from the master plus a path of labels, so they do not depend on the
order in which work happens to be scheduled.
"""
import hashlib


def derive_seed(master: int, *parts) -> int:
    """A 63-bit seed determined by ``master`` and the labels in ``parts``."""
    text = repr((int(master),) + tuple(parts)).encode()
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "big") >> 1
