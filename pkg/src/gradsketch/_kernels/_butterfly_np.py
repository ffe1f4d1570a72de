"""NumPy fallback for the compiled kernels.

Same call signatures, same operation order.  The butterfly pairs entries
at stride h = 1, 2, 4, ... exactly like the Cython loop, so transforms
agree bitwise between backends; the baseline sign words come from the
same counter scheme but are reduced with a BLAS dot, whose summation
order differs (baseline values are timing fodder, not asserted bitwise).
"""

from __future__ import annotations

import numpy as np

from ..rng import sign_stream_u64


def _fwht_rows(a: np.ndarray) -> None:
    m, n = a.shape
    if n & (n - 1):
        raise ValueError("row length must be a power of two")
    h = 1
    while h < n:
        v = a.reshape(m, -1, 2, h)
        u = v[:, :, 0, :].copy()
        w = v[:, :, 1, :]
        v[:, :, 0, :] = u + w
        v[:, :, 1, :] = u - w
        h *= 2


def fwht_rows_f64(a: np.ndarray) -> None:
    if a.dtype != np.float64:
        raise TypeError("expected float64")
    _fwht_rows(a)


def fwht_rows_f32(a: np.ndarray) -> None:
    if a.dtype != np.float32:
        raise TypeError("expected float32")
    _fwht_rows(a)


def _signed_dot_rows(x, seed, row_start, n_rows, out):
    n = x.shape[0]
    if n & 63:
        raise ValueError("input length must be a multiple of 64")
    if out.shape[0] < n_rows:
        raise ValueError("output buffer too small")
    # one row at a time keeps peak memory at O(n) signs
    for k in range(n_rows):
        words = sign_stream_u64(int(seed), row_start + k, n >> 6)
        bits = np.unpackbits(words.view(np.uint8), bitorder="little")
        signs = 1.0 - 2.0 * bits.astype(x.dtype)
        out[k] = signs @ x


def signed_dot_rows_f64(x, seed, row_start, n_rows, out):
    _signed_dot_rows(x, seed, row_start, n_rows, out)


def signed_dot_rows_f32(x, seed, row_start, n_rows, out):
    _signed_dot_rows(x, seed, row_start, n_rows, out)
