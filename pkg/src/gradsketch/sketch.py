"""Seeded sketching operators.

A sketcher is an immutable linear map R^n -> R^d sampled from a named
family by a 64-bit seed, with an exact adjoint.  Inputs whose length is
not a power of two are zero-padded up to the next one (the adjoint
truncates back), so the structured families always see a dimension that
splits into power-of-two Kronecker blocks.

Families:

dense   explicit Gaussian matrix / sqrt(d); orthogonalized when d == n_padded
fjl     sqrt(N/D) * G_sparse . H . B           (sparse Gaussian, sign flips)
ffd     per-block B H inv(P) G H, blocks summed; adjoint is the classic
        concatenated feature map H G P H B
affd    restrict_D(sqrt(N/D) * H_perm2 . G . H_perm1 . B), Hadamard blocks
        row-permuted in the first layer and column-permuted in the second
afjl    affd without the second mixing layer
qk      sqrt(N/D) * Kronecker product of Haar-orthogonal factors with
        rows allocated across blocks proportional to log block size
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import NumericError  # noqa: F401  (re-export convenience)
from .kron import (
    DEFAULT_MAX_BLOCK,
    HadamardFactor,
    KronShape,
    OrthFactor,
    allocate_qk_rows,
    compute_kron_shapes,
    fourier_mix,
    hadamard_chain_apply,
    kron_apply,
    next_pow2,
    sample_haar_factor,
)
from .rng import derived_rng, sample_without_replacement

ALGORITHMS = ("dense", "fjl", "ffd", "affd", "afjl", "qk")
PRECONDITIONERS = ("hadamard", "fft", "kron_orthogonal")

# default point-count assumption entering the fjl row sparsity q = log2(M)^2
DEFAULT_FJL_POINTS = 4096


@dataclass(frozen=True)
class SketchSpec:
    """Everything needed to rebuild a sketcher bit for bit."""

    algorithm: str
    n: int
    d: int
    seed: int
    preconditioner: str = "hadamard"
    m: int | None = None
    max_block: int = DEFAULT_MAX_BLOCK

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.preconditioner not in PRECONDITIONERS:
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")
        if self.n < 1:
            raise ValueError("n must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")
        if self.m is not None and self.m < 2:
            raise ValueError("m must be at least 2")
        if self.max_block < 2:
            raise ValueError("max_block must be at least 2")
        padded = next_pow2(self.n)
        if not 1 <= self.d <= padded:
            raise ValueError(
                f"d={self.d} outside [1, {padded}] for n={self.n} (padded)"
            )

    def to_json(self) -> str:
        """Canonical serialization; equal specs give equal strings."""
        doc = {
            "algorithm": self.algorithm,
            "n": self.n,
            "d": self.d,
            "preconditioner": self.preconditioner,
            "seed": self.seed,
            "m": self.m,
        }
        if self.max_block != DEFAULT_MAX_BLOCK:
            doc["max_block"] = self.max_block
        return json.dumps(doc, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "SketchSpec":
        doc = json.loads(text)
        if not isinstance(doc, dict):
            raise ValueError("spec document must be a JSON object")
        known = {"algorithm", "n", "d", "preconditioner", "seed", "m", "max_block"}
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown spec fields {sorted(extra)}")
        missing = {"algorithm", "n", "d", "seed"} - set(doc)
        if missing:
            raise ValueError(f"missing spec fields {sorted(missing)}")
        return cls(
            algorithm=doc["algorithm"],
            n=int(doc["n"]),
            d=int(doc["d"]),
            seed=int(doc["seed"]),
            preconditioner=doc.get("preconditioner", "hadamard"),
            m=None if doc.get("m") is None else int(doc["m"]),
            max_block=int(doc.get("max_block", DEFAULT_MAX_BLOCK)),
        )


class _HadamardMix:
    def __init__(self, factors: list[HadamardFactor]):
        self.factors = factors

    def __call__(self, y, adjoint=False):
        return hadamard_chain_apply(y, self.factors, adjoint=adjoint)


class _FourierMix:
    def __call__(self, y, adjoint=False):
        return fourier_mix(y, adjoint=adjoint).astype(y.dtype, copy=False)


class _KronOrthMix:
    def __init__(self, mats: list[np.ndarray]):
        self.mats = mats

    def __call__(self, y, adjoint=False):
        mats = [m.T for m in self.mats] if adjoint else self.mats
        return kron_apply(y, mats)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


class Sketcher:
    """Immutable seeded linear map with exact adjoint.

    Construct through :func:`build_sketcher`.  All stored arrays are
    marked read-only, so concurrent reads need no locking.
    """

    def __init__(self, spec: SketchSpec, dtype=np.float64):
        self.spec = spec
        self.dtype = np.dtype(dtype)
        if self.dtype not in (np.float32, np.float64):
            raise ValueError("dtype must be float32 or float64")
        self.n = spec.n
        self.d = spec.d
        self.n_padded = next_pow2(spec.n)
        self.algorithm = spec.algorithm
        self.components: dict[str, np.ndarray] = {}
        self.kron_shape: KronShape | None = None
        self._scale = math.sqrt(self.n_padded / spec.d)
        build = getattr(self, f"_build_{spec.algorithm}")
        build()

    # -- construction -------------------------------------------------

    def _rng(self, tag: str, index: int = 0):
        return derived_rng(self.spec.seed, tag, index)

    def _blocks(self) -> list[int]:
        return compute_kron_shapes(self.n_padded, self.spec.max_block)

    def _mixing(self, layer: int, permute_mode: str):
        """One N -> N orthogonal mixing layer.

        layer tags keep the two affd layers on independent streams; the
        hadamard flavor permutes inside each Kronecker block, fft is a
        deterministic isometry, kron_orthogonal draws Haar factors.
        """
        kind = self.spec.preconditioner
        blocks = self._blocks()
        if kind == "fft":
            return _FourierMix()
        if kind == "kron_orthogonal":
            mats = []
            for i, b in enumerate(blocks):
                rng = self._rng(f"mix{layer}.orth", i)
                mats.append(
                    _freeze(sample_haar_factor(b, b, rng).astype(self.dtype))
                )
            for i, m in enumerate(mats):
                self.components[f"mix{layer}.orth.{i}"] = m
            return _KronOrthMix(mats)
        factors = []
        for i, b in enumerate(blocks):
            if permute_mode == "none":
                factors.append(HadamardFactor(b))
            else:
                perm = self._rng(f"mix{layer}.perm", i).permutation(b)
                self.components[f"mix{layer}.perm.{i}"] = _freeze(perm)
                factors.append(HadamardFactor(b, perm, permute_mode))
        return _HadamardMix(factors)

    def _sign_diag(self, tag: str, size: int, rng=None) -> np.ndarray:
        rng = rng or self._rng(tag)
        signs = rng.integers(0, 2, size=size).astype(self.dtype) * 2 - 1
        self.components[tag] = _freeze(signs)
        return signs

    def _build_dense(self):
        n, d = self.n_padded, self.d
        rng = self._rng("dense.matrix")
        if d == n:
            # no reduction: an exact isometry, so downstream score
            # correlations are 1 rather than 1 - O(1/sqrt(n))
            mat = sample_haar_factor(n, n, rng)
        else:
            mat = rng.standard_normal((d, n)) / math.sqrt(d)
        self._matrix = _freeze(np.ascontiguousarray(mat, dtype=self.dtype))
        self.components["dense.matrix"] = self._matrix

    def _build_fjl(self):
        n, d = self.n_padded, self.d
        self._signs = self._sign_diag("fjl.signs", n)
        self._mix = self._mixing(1, "none")
        m_points = self.spec.m or DEFAULT_FJL_POINTS
        q = max(1, math.ceil(math.log2(m_points) ** 2))
        p = min(1.0, q / n)
        value_scale = 1.0 / math.sqrt(n * p)
        rng = self._rng("fjl.sparsity")
        counts = rng.binomial(n, p, size=d)
        indptr = np.zeros(d + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        indices = np.empty(indptr[-1], dtype=np.int64)
        for r in range(d):
            pos = sample_without_replacement(rng, n, int(counts[r]))
            indices[indptr[r] : indptr[r + 1]] = np.sort(pos)
        data = rng.standard_normal(indptr[-1]) * value_scale
        self._sparse = sp.csr_matrix(
            (data.astype(self.dtype), indices, indptr), shape=(d, n)
        )
        self._sparse.data.setflags(write=False)
        self.components["fjl.values"] = self._sparse.data
        self.components["fjl.indices"] = _freeze(indices)
        self._q = q

    def _build_ffd(self):
        n, d = self.n_padded, self.d
        if n % d != 0:
            raise ValueError(f"ffd requires d to divide the padded dimension ({d} vs {n})")
        nb = n // d
        self._n_blocks = nb
        signs = np.empty((nb, d), dtype=self.dtype)
        gauss = np.empty((nb, d), dtype=self.dtype)
        perm = np.empty((nb, d), dtype=np.int64)
        for b in range(nb):
            signs[b] = self._rng("ffd.signs", b).integers(0, 2, size=d) * 2 - 1
            gauss[b] = self._rng("ffd.gauss", b).standard_normal(d)
            perm[b] = self._rng("ffd.perm", b).permutation(d)
        self._signs = _freeze(signs)
        self._gauss = _freeze(gauss)
        self._perm = _freeze(perm)
        self._perm_inv = _freeze(np.argsort(perm, axis=1))
        self.components.update(
            {"ffd.signs": signs, "ffd.gauss": gauss, "ffd.perm": perm}
        )
        blocks = compute_kron_shapes(d, self.spec.max_block)
        if self.spec.preconditioner == "hadamard":
            self._block_factors = [HadamardFactor(b) for b in blocks]
        elif self.spec.preconditioner == "kron_orthogonal":
            mats = []
            for i, b in enumerate(blocks):
                rng = self._rng("ffd.mix.orth", i)
                mats.append(
                    _freeze(sample_haar_factor(b, b, rng).astype(self.dtype))
                )
                self.components[f"ffd.mix.orth.{i}"] = mats[i]
            self._block_mats = mats

    def _build_affd(self, second_layer=True):
        n = self.n_padded
        self._signs = self._sign_diag("affd.signs", n)
        gauss = self._rng("affd.gauss").standard_normal(n).astype(self.dtype)
        self._gauss = _freeze(gauss)
        self.components["affd.gauss"] = gauss
        self._mix1 = self._mixing(1, "rows")
        self._mix2 = self._mixing(2, "cols") if second_layer else None

    def _build_afjl(self):
        self._build_affd(second_layer=False)

    def _build_qk(self):
        n, d = self.n_padded, self.d
        blocks = self._blocks()
        if not blocks:
            blocks = [1]
        try:
            rows = allocate_qk_rows(d, blocks)
        except ValueError as e:
            raise ValueError(f"qk: {e}") from e
        self._qk_blocks = blocks
        self._qk_rows = rows
        self.kron_shape = KronShape(rows=tuple(rows), cols=tuple(blocks))
        squares = []
        for i, b in enumerate(blocks):
            q = sample_haar_factor(b, b, self._rng("qk.factor", i))
            squares.append(_freeze(np.ascontiguousarray(q, dtype=self.dtype)))
            self.components[f"qk.factor.{i}"] = squares[i]
        self._qk_squares = squares

    @property
    def orth_factors(self) -> list[OrthFactor] | None:
        if self.algorithm != "qk":
            return None
        return [
            OrthFactor(r, b, q[:r])
            for r, b, q in zip(self._qk_rows, self._qk_blocks, self._qk_squares)
        ]

    # -- application --------------------------------------------------

    def _check_vec(self, v, length, name):
        v = np.asarray(v)
        if v.shape != (length,):
            raise ValueError(f"{name} must have shape ({length},), got {v.shape}")
        v = np.ascontiguousarray(v, dtype=self.dtype)
        if not np.all(np.isfinite(v)):
            raise ValueError(f"{name} contains non-finite values")
        return v

    def _pad(self, x):
        if self.n == self.n_padded:
            return x.copy()
        out = np.zeros(self.n_padded, dtype=self.dtype)
        out[: self.n] = x
        return out

    def forward(self, x) -> np.ndarray:
        """Apply the map to a length-n vector; returns length d."""
        x = self._check_vec(x, self.n, "x")
        return getattr(self, f"_forward_{self.algorithm}")(self._pad(x))

    def transpose(self, v) -> np.ndarray:
        """Apply the exact adjoint to a length-d vector; returns length n."""
        v = self._check_vec(v, self.d, "v")
        out = getattr(self, f"_transpose_{self.algorithm}")(v)
        return np.ascontiguousarray(out[: self.n])

    def _forward_dense(self, x):
        return self._matrix @ x

    def _transpose_dense(self, v):
        return self._matrix.T @ v

    def _forward_fjl(self, x):
        y = self._mix(self._signs * x)
        return self._scale * (self._sparse @ y)

    def _transpose_fjl(self, v):
        y = self._sparse.T @ v
        y = self._mix(np.ascontiguousarray(y), adjoint=True)
        return self._scale * (self._signs * y)

    def _ffd_mix_rows(self, t, adjoint=False):
        kind = self.spec.preconditioner
        if kind == "fft":
            return fourier_mix(t, adjoint=adjoint).astype(t.dtype, copy=False)
        if kind == "kron_orthogonal":
            mats = [m.T for m in self._block_mats] if adjoint else self._block_mats
            return kron_apply(t, mats)
        return hadamard_chain_apply(t, self._block_factors, adjoint=adjoint)

    # the per-block feature map (transpose direction) is M G P M B for
    # mixing map M; the forward direction therefore applies M adjoint
    def _forward_ffd(self, x):
        t = self._ffd_mix_rows(x.reshape(self._n_blocks, self.d), adjoint=True)
        t *= self._gauss
        t = np.take_along_axis(t, self._perm_inv, axis=1)
        t = self._ffd_mix_rows(t, adjoint=True)
        t *= self._signs
        return t.sum(axis=0)

    def _transpose_ffd(self, v):
        t = np.broadcast_to(v, (self._n_blocks, self.d)) * self._signs
        t = self._ffd_mix_rows(t)
        t = np.take_along_axis(t, self._perm, axis=1)
        t *= self._gauss
        t = self._ffd_mix_rows(t)
        return t.reshape(-1)

    def _forward_affd(self, x):
        y = self._mix1(self._signs * x)
        y *= self._gauss
        y = self._mix2(y)
        return self._scale * y[: self.d]

    def _transpose_affd(self, v):
        y = np.zeros(self.n_padded, dtype=self.dtype)
        y[: self.d] = v
        y = self._mix2(y, adjoint=True)
        y *= self._gauss
        y = self._mix1(y, adjoint=True)
        return self._scale * (self._signs * y)

    def _forward_afjl(self, x):
        y = self._mix1(self._signs * x)
        y *= self._gauss
        return self._scale * y[: self.d]

    def _transpose_afjl(self, v):
        y = np.zeros(self.n_padded, dtype=self.dtype)
        y[: self.d] = v
        y *= self._gauss
        y = self._mix1(y, adjoint=True)
        return self._scale * (self._signs * y)

    def _forward_qk(self, x):
        # the first factor is contracted at full block size and sliced
        # afterwards: the dominant cost is then N * B_1 however small d
        # is, keeping wall time flat in the target dimension (the later,
        # cheaper factors contract rectangularly)
        t = x.reshape(self._qk_blocks)
        for i, (q, r) in enumerate(zip(self._qk_squares, self._qk_rows)):
            fac = q if i == 0 else q[:r]
            t = np.moveaxis(np.tensordot(fac, t, axes=([1], [i])), 0, i)
            if i == 0 and r < q.shape[0]:
                t = np.ascontiguousarray(t[:r])
        return self._scale * np.ascontiguousarray(t).reshape(-1)

    def _transpose_qk(self, v):
        t = v.reshape(self._qk_rows)
        for i in range(len(self._qk_squares) - 1, 0, -1):
            fac = self._qk_squares[i][: self._qk_rows[i]].T
            t = np.moveaxis(np.tensordot(fac, t, axes=([1], [i])), 0, i)
        b0, r0 = self._qk_blocks[0], self._qk_rows[0]
        if r0 < b0:
            padded = np.zeros((b0, *t.shape[1:]), dtype=self.dtype)
            padded[:r0] = t
            t = padded
        t = np.tensordot(self._qk_squares[0].T, t, axes=([1], [0]))
        return self._scale * np.ascontiguousarray(t).reshape(-1)


def build_sketcher(spec: SketchSpec, dtype=np.float64) -> Sketcher:
    """Validate the spec and construct the seeded map."""
    return Sketcher(spec, dtype=dtype)


def jl_distortion_trial(sketcher: Sketcher, x) -> float:
    """| ||forward(x)|| - 1 | for a unit vector x."""
    x = np.asarray(x, dtype=np.float64)
    norm = np.linalg.norm(x)
    if abs(norm - 1.0) > 1e-6:
        raise ValueError(f"x must be a unit vector, got norm {norm}")
    return float(abs(np.linalg.norm(sketcher.forward(x)) - 1.0))


def ffd_adversarial_input(
    n: int, d: int, column: int = 1, max_block: int = DEFAULT_MAX_BLOCK
) -> np.ndarray:
    """Unit input on which ffd's sketch norm is a single chi^2_1 draw.

    All blocks but the first are zero and the first block is a column of
    the (hadamard flavor) block mixing map, so the first pass collapses
    it to a coordinate vector and exactly one Gaussian survives.
    """
    padded = next_pow2(n)
    if padded % d != 0:
        raise ValueError("d must divide the padded dimension")
    if not 0 <= column < d:
        raise ValueError("column out of range")
    if n < d:
        raise ValueError("need n >= d to place the first block")
    e = np.zeros(d, dtype=np.float64)
    e[column] = 1.0
    factors = [HadamardFactor(b) for b in compute_kron_shapes(d, max_block)]
    x = np.zeros(n, dtype=np.float64)
    # the chain is symmetric (Kronecker of symmetric blocks), so this is
    # its ``column``-th column, already unit norm
    x[:d] = hadamard_chain_apply(e, factors)
    return x
