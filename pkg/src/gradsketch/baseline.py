"""Chunked dense projections, the thing the structured maps replace.

The Rademacher variant never materializes its matrix: entries come from
a counter-based stream keyed on (seed, row), so any chunking reproduces
the identical map and memory stays at one chunk of rows.  The Gaussian
variant draws chunk-sized blocks from seeded generators; its realization
therefore depends on ``chunk_rows``, which is part of its identity.
"""

from __future__ import annotations

import math

import numpy as np

from ._kernels import signed_dot_rows
from .rng import derived_rng, sign_stream_u64

_WORD_BITS = 64


class ChunkedDenseBaseline:
    """Dense d x n projection applied chunk by chunk, scaled 1/sqrt(d)."""

    KINDS = ("rademacher", "gaussian")

    def __init__(
        self,
        n: int,
        d: int,
        seed: int,
        kind: str = "rademacher",
        chunk_rows: int = 1024,
    ):
        if kind not in self.KINDS:
            raise ValueError(f"unknown kind {kind!r}")
        if n < 1 or d < 1:
            raise ValueError("n and d must be positive")
        if chunk_rows < 1:
            raise ValueError("chunk_rows must be positive")
        self.n = n
        self.d = d
        self.seed = seed
        self.kind = kind
        self.chunk_rows = chunk_rows
        # the sign kernel consumes whole 64-bit words; zero padding on x
        # leaves the extra columns inert
        self._n_padded = ((n + _WORD_BITS - 1) // _WORD_BITS) * _WORD_BITS
        self._scale = 1.0 / math.sqrt(d)

    def _pad(self, x):
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise ValueError(f"x must have shape ({self.n},), got {x.shape}")
        if self._n_padded == self.n:
            return x
        out = np.zeros(self._n_padded)
        out[: self.n] = x
        return out

    def _sign_block(self, row_start: int, rows: int) -> np.ndarray:
        words = np.vstack(
            [
                sign_stream_u64(self.seed, r, self._n_padded // _WORD_BITS)
                for r in range(row_start, row_start + rows)
            ]
        )
        bits = np.unpackbits(words.view(np.uint8), bitorder="little", axis=1)
        return 1.0 - 2.0 * bits[:, : self.n].astype(np.float64)

    def _gauss_block(self, chunk_index: int, rows: int) -> np.ndarray:
        rng = derived_rng(self.seed, "baseline.gauss", chunk_index)
        return rng.standard_normal((rows, self.n))

    def forward(self, x) -> np.ndarray:
        x = self._pad(x)
        out = np.empty(self.d)
        for ci, start in enumerate(range(0, self.d, self.chunk_rows)):
            rows = min(self.chunk_rows, self.d - start)
            if self.kind == "rademacher":
                signed_dot_rows(x, self.seed, start, rows, out[start : start + rows])
            else:
                out[start : start + rows] = self._gauss_block(ci, rows) @ x[: self.n]
        out *= self._scale
        return out

    def transpose(self, v) -> np.ndarray:
        v = np.ascontiguousarray(v, dtype=np.float64)
        if v.shape != (self.d,):
            raise ValueError(f"v must have shape ({self.d},), got {v.shape}")
        out = np.zeros(self.n)
        for ci, start in enumerate(range(0, self.d, self.chunk_rows)):
            rows = min(self.chunk_rows, self.d - start)
            if self.kind == "rademacher":
                block = self._sign_block(start, rows)
            else:
                block = self._gauss_block(ci, rows)
            out += v[start : start + rows] @ block
        out *= self._scale
        return out

    def materialize(self, row_start: int = 0, rows: int | None = None) -> np.ndarray:
        """Dense block of the implied matrix, for verification at small sizes."""
        rows = self.d - row_start if rows is None else rows
        if not 0 <= row_start <= row_start + rows <= self.d:
            raise ValueError("row range out of bounds")
        if self.kind == "rademacher":
            return self._sign_block(row_start, rows) * self._scale
        if row_start % self.chunk_rows or (
            rows % self.chunk_rows and row_start + rows != self.d
        ):
            raise ValueError("gaussian blocks materialize on chunk boundaries only")
        blocks = []
        for ci, start in enumerate(range(0, self.d, self.chunk_rows)):
            r = min(self.chunk_rows, self.d - start)
            if start >= row_start and start < row_start + rows:
                blocks.append(self._gauss_block(ci, r))
        return np.vstack(blocks) * self._scale
