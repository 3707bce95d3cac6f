"""Seed derivation tree.

Every stochastic step takes its seed from ``derive_seed(master, path)`` so a
whole experiment is reproducible from one integer, independent of call order.
"""

import hashlib
from typing import Iterable, Union

Label = Union[str, int]


def derive_seed(master: int, path: Union[Label, Iterable[Label]]) -> int:
    """Stable 63-bit seed for ``(master, path)``."""
    if isinstance(path, (str, int)):
        path = (path,)
    text = "\x1f".join([str(int(master))] + [str(p) for p in path])
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1
