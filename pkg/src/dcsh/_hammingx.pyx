# cython: boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled Hamming kernels over packed 64-bit words.

Same contract as the numpy fallback in _hamming_py; a SWAR popcount
keeps the gallery scan free of Python overhead and temporaries.
"""

import numpy as np

from libc.stdint cimport int64_t, uint64_t

BACKEND = "cython"


cdef inline uint64_t popcount64(uint64_t x) nogil:
    x = x - ((x >> 1) & <uint64_t>0x5555555555555555)
    x = (x & <uint64_t>0x3333333333333333) + ((x >> 2) & <uint64_t>0x3333333333333333)
    x = (x + (x >> 4)) & <uint64_t>0x0F0F0F0F0F0F0F0F
    return (x * <uint64_t>0x0101010101010101) >> 56


def scan_distances(const uint64_t[:, ::1] gallery, const uint64_t[::1] query):
    """Hamming distance from one query to every gallery row.

    gallery: (N, W) uint64, query: (W,) uint64 -> (N,) int64.
    """
    if gallery.shape[1] != query.shape[0]:
        raise ValueError(
            f"word counts differ: {gallery.shape[1]} vs {query.shape[0]}"
        )
    cdef Py_ssize_t n = gallery.shape[0]
    cdef Py_ssize_t w = gallery.shape[1]
    out_arr = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef uint64_t acc
    with nogil:
        for i in range(n):
            acc = 0
            for j in range(w):
                acc += popcount64(gallery[i, j] ^ query[j])
            out[i] = <int64_t>acc
    return out_arr


def pair_distance(const uint64_t[::1] a, const uint64_t[::1] b):
    """Hamming distance between two packed codewords of equal width."""
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"word counts differ: {a.shape[0]} vs {b.shape[0]}")
    cdef Py_ssize_t w = a.shape[0]
    cdef Py_ssize_t j
    cdef uint64_t acc = 0
    with nogil:
        for j in range(w):
            acc += popcount64(a[j] ^ b[j])
    return int(acc)
