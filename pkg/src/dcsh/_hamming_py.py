"""Numpy Hamming kernels over packed 64-bit words.

Fallback implementation used when the compiled extension is not
available; semantics are identical.
"""

import numpy as np

BACKEND = "numpy"

if hasattr(np, "bitwise_count"):
    def _popcount_rows(words):
        return np.bitwise_count(words).sum(axis=-1, dtype=np.int64)
else:
    _TABLE = np.array([bin(v).count("1") for v in range(256)], dtype=np.uint8)

    def _popcount_rows(words):
        by = words.reshape(-1, words.shape[-1]).view(np.uint8)
        return _TABLE[by].sum(axis=1, dtype=np.int64).reshape(words.shape[:-1])


def scan_distances(gallery, query):
    """Hamming distance from one query to every gallery row.

    gallery: (N, W) uint64, query: (W,) uint64 -> (N,) int64.
    """
    if gallery.shape[1] != query.shape[0]:
        raise ValueError(
            f"word counts differ: {gallery.shape[1]} vs {query.shape[0]}"
        )
    return _popcount_rows(np.bitwise_xor(gallery, query[None, :]))


def pair_distance(a, b):
    """Hamming distance between two packed codewords of equal width."""
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"word counts differ: {a.shape[0]} vs {b.shape[0]}")
    return int(_popcount_rows(np.bitwise_xor(a, b)[None, :])[0])
