# cython: boundscheck=False, wraparound=False, cdivision=True
"""Hot loops: in-place Walsh-Hadamard butterflies and the fused
sign-matrix row products used by the chunked-dense baseline.

The butterfly visits pairs in the same order as the numpy fallback
(stride h = 1, 2, 4, ...), so both backends produce bitwise-identical
transforms.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef unsigned long long GAMMA = 0x9E3779B97F4A7C15ULL
cdef unsigned long long MIX1 = 0xBF58476D1CE4E5B9ULL
cdef unsigned long long MIX2 = 0x94D049BB133111EBULL


cdef inline unsigned long long _mix64(unsigned long long z) nogil:
    z = (z ^ (z >> 30)) * MIX1
    z = (z ^ (z >> 27)) * MIX2
    return z ^ (z >> 31)


def fwht_rows_f64(double[:, ::1] a):
    """Unnormalized Walsh-Hadamard transform of every row, in place."""
    cdef Py_ssize_t m = a.shape[0]
    cdef Py_ssize_t n = a.shape[1]
    cdef Py_ssize_t r, i, j, h
    cdef double u, v
    if n & (n - 1):
        raise ValueError("row length must be a power of two")
    with nogil:
        for r in range(m):
            h = 1
            while h < n:
                i = 0
                while i < n:
                    for j in range(i, i + h):
                        u = a[r, j]
                        v = a[r, j + h]
                        a[r, j] = u + v
                        a[r, j + h] = u - v
                    i += 2 * h
                h <<= 1


def fwht_rows_f32(float[:, ::1] a):
    cdef Py_ssize_t m = a.shape[0]
    cdef Py_ssize_t n = a.shape[1]
    cdef Py_ssize_t r, i, j, h
    cdef float u, v
    if n & (n - 1):
        raise ValueError("row length must be a power of two")
    with nogil:
        for r in range(m):
            h = 1
            while h < n:
                i = 0
                while i < n:
                    for j in range(i, i + h):
                        u = a[r, j]
                        v = a[r, j + h]
                        a[r, j] = u + v
                        a[r, j + h] = u - v
                    i += 2 * h
                h <<= 1


def signed_dot_rows_f64(const double[::1] x, unsigned long long seed,
                        Py_ssize_t row_start, Py_ssize_t n_rows,
                        double[::1] out):
    """out[k] = sum_j s[row_start+k, j] * x[j] with s a +-1 matrix.

    Sign (r, j) is bit (j mod 64) of mix64(base_r + (j//64 + 1)*gamma),
    bit set meaning -1.  Matches rng.sign_stream_u64 word for word; the
    matrix is never materialized.
    """
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t words = n >> 6
    cdef Py_ssize_t k, w, b, j
    cdef unsigned long long base, bits
    cdef double acc, xv
    cdef unsigned long long* pun = <unsigned long long*> &xv
    if n & 63:
        raise ValueError("input length must be a multiple of 64")
    if out.shape[0] < n_rows:
        raise ValueError("output buffer too small")
    with nogil:
        for k in range(n_rows):
            base = _mix64(seed ^ ((<unsigned long long> (row_start + k) + 1) * GAMMA))
            acc = 0.0
            j = 0
            for w in range(words):
                bits = _mix64(base + (<unsigned long long> w + 1) * GAMMA)
                for b in range(64):
                    xv = x[j]
                    pun[0] ^= (bits & 1) << 63
                    acc += xv
                    bits >>= 1
                    j += 1
            out[k] = acc


def signed_dot_rows_f32(const float[::1] x, unsigned long long seed,
                        Py_ssize_t row_start, Py_ssize_t n_rows,
                        float[::1] out):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t words = n >> 6
    cdef Py_ssize_t k, w, b, j
    cdef unsigned long long base, bits
    cdef float acc, xv
    cdef unsigned int* pun = <unsigned int*> &xv
    if n & 63:
        raise ValueError("input length must be a multiple of 64")
    if out.shape[0] < n_rows:
        raise ValueError("output buffer too small")
    with nogil:
        for k in range(n_rows):
            base = _mix64(seed ^ ((<unsigned long long> (row_start + k) + 1) * GAMMA))
            acc = 0.0
            j = 0
            for w in range(words):
                bits = _mix64(base + (<unsigned long long> w + 1) * GAMMA)
                for b in range(64):
                    xv = x[j]
                    pun[0] ^= (<unsigned int> (bits & 1)) << 31
                    acc += xv
                    bits >>= 1
                    j += 1
            out[k] = acc
