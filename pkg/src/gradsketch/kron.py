"""Kronecker-structured transforms.

Large orthogonal mixing maps are represented as Kronecker products of
small factors: normalized Hadamard blocks applied with in-place
radix-2 butterflies (never materialized), or explicit orthogonal
matrices sampled from the Haar measure.  A dimension is first split
into blocks with :func:`compute_kron_shapes`; applying one factor per
tensor mode then costs O(N * block) instead of O(N^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import fwht_rows

DEFAULT_MAX_BLOCK = 1024


def next_pow2(n: int) -> int:
    if n < 1:
        raise ValueError("dimension must be positive")
    return 1 << (n - 1).bit_length()


def compute_kron_shapes(dimension: int, max_block: int = DEFAULT_MAX_BLOCK) -> list[int]:
    """Greedy split of ``dimension`` into Kronecker block sizes.

    Peels blocks of ``min(remaining, max_block)`` off the low end and
    reverses, so the remainder block comes first:

    >>> compute_kron_shapes(2 ** 15, 32)
    [32, 32, 32]
    >>> compute_kron_shapes(2 ** 15)
    [32, 1024]
    >>> compute_kron_shapes(1)
    []

    Dimensions that are not products of power-of-two blocks are the
    caller's problem; pad with :func:`next_pow2` first.
    """
    if dimension < 1:
        raise ValueError("dimension must be positive")
    if max_block < 2:
        raise ValueError("max_block must be at least 2")
    shape: list[int] = []
    n = dimension
    while n > 1:
        shape.append(min(n, max_block))
        n //= max_block
    shape.reverse()
    return shape


@dataclass(frozen=True)
class KronShape:
    """Row/column block sizes of a rectangular Kronecker operator."""

    rows: tuple[int, ...]
    cols: tuple[int, ...]

    def __post_init__(self):
        if len(self.rows) != len(self.cols):
            raise ValueError("rows and cols must have matching factor counts")
        for r, c in zip(self.rows, self.cols):
            if r < 1 or c < 1:
                raise ValueError("factor sizes must be positive")
            if r > c:
                raise ValueError("factor rows may not exceed cols")

    @property
    def input_dim(self) -> int:
        return math.prod(self.cols)

    @property
    def output_dim(self) -> int:
        return math.prod(self.rows)


def allocate_qk_rows(d: int, blocks: list[int]) -> tuple[int, ...]:
    """Split target dimension ``d`` across ``blocks``, proportional to
    log block size.

    Works in exponents (everything must be a power of two), flooring the
    proportional share and handing leftover units to the factors with the
    largest remainders.  Raises ValueError when ``d`` cannot be written
    as a product of per-factor rows bounded by the block sizes.
    """
    if d < 1:
        raise ValueError("d must be positive")
    if d == 1:
        return tuple(1 for _ in blocks)
    if not blocks:
        raise ValueError("no factors to allocate over")
    caps = []
    for b in blocks:
        if b & (b - 1):
            raise ValueError("block sizes must be powers of two")
        caps.append(b.bit_length() - 1)
    if d & (d - 1):
        raise ValueError(f"d={d} is not a power of two, not factorizable over {blocks}")
    want = d.bit_length() - 1
    total = sum(caps)
    if want > total:
        raise ValueError(f"d={d} exceeds the product of block sizes")
    targets = [want * c / total for c in caps]
    exps = [min(int(t), cap) for t, cap in zip(targets, caps)]
    remaining = want - sum(exps)
    order = sorted(range(len(caps)), key=lambda i: (exps[i] - targets[i], i))
    while remaining > 0:
        progressed = False
        for i in order:
            if remaining == 0:
                break
            if exps[i] < caps[i]:
                exps[i] += 1
                remaining -= 1
                progressed = True
        if not progressed:
            raise ValueError("allocation stuck; d not factorizable")
    return tuple(1 << e for e in exps)


def sample_haar_factor(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """First ``rows`` rows of a Haar-distributed ``cols`` x ``cols``
    orthogonal matrix.

    QR of a standard Gaussian square, with the sign of each diagonal
    entry of R absorbed into the corresponding column of Q; without the
    sign fix the QR convention would bias the distribution.
    """
    if rows < 1 or cols < 1 or rows > cols:
        raise ValueError("need 1 <= rows <= cols")
    g = rng.standard_normal((cols, cols))
    q, r = np.linalg.qr(g)
    q = q * np.sign(np.diag(r))
    return np.ascontiguousarray(q[:rows])


@dataclass(frozen=True)
class OrthFactor:
    rows: int
    cols: int
    matrix: np.ndarray  # rows x cols, orthonormal rows

    def __post_init__(self):
        if self.matrix.shape != (self.rows, self.cols):
            raise ValueError("matrix shape does not match declared sizes")


@dataclass(frozen=True)
class HadamardFactor:
    """One Hadamard block of a mixing chain, optionally permuted.

    permute_mode 'rows' means H[perm, :], 'cols' means H[:, perm],
    'none' leaves the block untouched (perm ignored).
    """

    block_size: int
    permutation: np.ndarray | None = None
    permute_mode: str = "none"

    def __post_init__(self):
        n = self.block_size
        if n < 1 or n & (n - 1):
            raise ValueError("block size must be a power of two")
        if self.permute_mode not in ("rows", "cols", "none"):
            raise ValueError(f"bad permute_mode {self.permute_mode!r}")
        if self.permute_mode != "none":
            p = self.permutation
            if p is None or p.shape != (n,) or np.sort(p).tolist() != list(range(n)):
                raise ValueError("permutation must be a bijection on the block")


def kron_apply(x: np.ndarray, factors: list[np.ndarray]) -> np.ndarray:
    """Apply a Kronecker product of dense factors to a flat vector.

    Reshapes x to the column-shape tensor and contracts one mode per
    factor; each contraction is a single GEMM.  ``x`` may be 1-D or a
    2-D batch of rows.
    """
    if not factors:
        return x.copy()
    cols = [f.shape[1] for f in factors]
    n = math.prod(cols)
    if x.ndim not in (1, 2) or x.shape[-1] != n:
        raise ValueError(
            f"input shape {x.shape} does not match factor columns {cols}"
        )
    off = x.ndim - 1
    t = x.reshape(x.shape[:off] + tuple(cols))
    for i, f in enumerate(factors):
        t = np.moveaxis(np.tensordot(f, t, axes=([1], [i + off])), 0, i + off)
    out_shape = x.shape[:off] + (math.prod(f.shape[0] for f in factors),)
    return np.ascontiguousarray(t).reshape(out_shape)


def kron_apply_transpose(v: np.ndarray, factors: list[np.ndarray]) -> np.ndarray:
    """Exact transpose of :func:`kron_apply`: transposing a Kronecker
    product transposes every factor in place."""
    return kron_apply(v, [f.T for f in factors])


def hadamard_chain_apply(
    x: np.ndarray,
    factors: list[HadamardFactor],
    adjoint: bool = False,
) -> np.ndarray:
    """Kronecker product of (permuted) normalized Hadamard blocks.

    One butterfly pass per mode; permutations act inside their factor
    only, as a single gather (rows) or scatter (cols) on that axis.
    With ``adjoint=True`` the exact transpose is applied: H is symmetric,
    so a row-permuted block transposes to the same block column-permuted
    by the same index array, and vice versa.

    ``x`` may be 1-D, or 2-D with one transform per row (the batch axis
    is never mixed).  The input is left untouched.
    """
    blocks = [f.block_size for f in factors]
    n = math.prod(blocks) if blocks else 1
    if x.ndim not in (1, 2) or x.shape[-1] != n:
        raise ValueError(f"input shape {x.shape} incompatible with blocks {blocks}")
    if not blocks:
        return x.copy()
    off = x.ndim - 1
    t = np.array(x, copy=True).reshape(x.shape[:off] + tuple(blocks))
    for i, f in enumerate(factors):
        mode = f.permute_mode
        if adjoint and mode != "none":
            mode = "cols" if mode == "rows" else "rows"
        t = np.moveaxis(t, i + off, -1)
        lead = t.shape[:-1]
        t = np.ascontiguousarray(t).reshape(-1, f.block_size)
        if mode == "cols":
            w = np.empty_like(t)
            w[:, f.permutation] = t
            t = w
        fwht_rows(t)
        if mode == "rows":
            t = t[:, f.permutation]
        t = np.moveaxis(t.reshape(*lead, f.block_size), -1, i + off)
    out = np.ascontiguousarray(t).reshape(x.shape)
    out *= np.asarray(1.0 / math.sqrt(n), dtype=out.dtype)
    return out


def fourier_mix(x: np.ndarray, adjoint: bool = False) -> np.ndarray:
    """Orthogonal real-FFT mixing map.

    Packs the spectrum as [Re c_0, sqrt(2) Re c_1..c_{n/2-1}, c_{n/2},
    sqrt(2) Im c_1..c_{n/2-1}] / sqrt(n), which is an isometry of R^n;
    the adjoint is the inverse packing followed by the inverse FFT.
    Operates along the last axis (1-D, or rows of a 2-D batch).
    """
    n = x.shape[-1]
    if n & (n - 1):
        raise ValueError("length must be a power of two")
    if n == 1:
        return x.astype(np.float64, copy=True)
    half = n // 2
    root = math.sqrt(n)
    s2 = math.sqrt(2.0)
    if not adjoint:
        c = np.fft.rfft(x, axis=-1)
        y = np.empty(x.shape, dtype=np.float64)
        y[..., 0] = c[..., 0].real
        y[..., half] = c[..., half].real
        y[..., 1:half] = s2 * c[..., 1:half].real
        y[..., half + 1 :] = s2 * c[..., 1:half].imag
        y /= root
        return y
    c = np.empty(x.shape[:-1] + (half + 1,), dtype=np.complex128)
    c[..., 0] = x[..., 0] * root
    c[..., half] = x[..., half] * root
    c[..., 1:half] = (x[..., 1:half] + 1j * x[..., half + 1 :]) * (root / s2)
    return np.fft.irfft(c, n, axis=-1)
