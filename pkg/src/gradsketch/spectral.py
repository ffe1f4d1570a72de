"""Krylov probes of sketched curvature operators.

Arnoldi with full re-orthogonalization (two MGS passes) against every
kept basis vector; the operator is only touched through matvecs, so it
works on :class:`~gradsketch.calculus.SketchedOperator` or any callable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError
from .rng import derived_rng


@dataclass
class KrylovResult:
    basis: np.ndarray  # (dim, steps+1) orthonormal columns; steps if broke down
    hess: np.ndarray  # (steps+1, steps) upper Hessenberg, trimmed on breakdown
    ritz: np.ndarray  # eigenvalues of the leading square block, descending
    n_steps: int
    n_matvec: int
    breakdown: bool = False


def arnoldi(
    matvec,
    dim: int,
    steps: int,
    seed: int = 0,
    start=None,
    breakdown_tol: float = 1e-12,
) -> KrylovResult:
    """Build a Krylov basis of the operator behind ``matvec``.

    Breakdown (residual below ``breakdown_tol`` times the running scale)
    truncates early: the captured subspace is then exactly invariant.
    Non-finite matvec output raises :class:`NumericError` carrying the
    offending iteration.
    """
    if steps < 1 or steps > dim:
        raise ValueError(f"need 1 <= steps <= dim, got {steps} with dim {dim}")
    if start is None:
        v = derived_rng(seed, "arnoldi.start").standard_normal(dim)
    else:
        v = np.array(start, dtype=np.float64)
        if v.shape != (dim,):
            raise ValueError(f"start must have shape ({dim},)")
    nrm = np.linalg.norm(v)
    if nrm == 0 or not np.isfinite(nrm):
        raise ValueError("start vector must be nonzero and finite")
    q = np.empty((dim, steps + 1))
    h = np.zeros((steps + 1, steps))
    q[:, 0] = v / nrm
    scale = 0.0
    for j in range(steps):
        w = np.asarray(matvec(q[:, j]), dtype=np.float64)
        if w.shape != (dim,):
            raise ValueError(f"matvec returned shape {w.shape}, expected ({dim},)")
        if not np.all(np.isfinite(w)):
            raise NumericError(
                f"non-finite matvec output at iteration {j}", iteration=j
            )
        for _ in range(2):  # second pass mops up cancellation
            coeffs = q[:, : j + 1].T @ w
            w -= q[:, : j + 1] @ coeffs
            h[: j + 1, j] += coeffs
        beta = np.linalg.norm(w)
        scale = max(scale, np.abs(h[: j + 1, j]).max(initial=0.0), beta)
        if beta <= breakdown_tol * max(scale, 1.0):
            hb = h[: j + 1, : j + 1].copy()
            return KrylovResult(
                basis=q[:, : j + 1].copy(),
                hess=hb,
                ritz=ritz_from_hessenberg(hb),
                n_steps=j + 1,
                n_matvec=j + 1,
                breakdown=True,
            )
        h[j + 1, j] = beta
        q[:, j + 1] = w / beta
    return KrylovResult(
        basis=q,
        hess=h,
        ritz=ritz_from_hessenberg(h[:steps, :steps]),
        n_steps=steps,
        n_matvec=steps,
    )


def ritz_from_hessenberg(hessenberg, symmetry_tol: float = 1e-8) -> np.ndarray:
    """Eigenvalues of the leading square block, descending.

    Accepts the (m+1, m) rectangle from :func:`arnoldi` or a square
    block.  Uses the symmetric solver when the block is symmetric to
    within ``symmetry_tol`` relative to its norm, which it is whenever
    the probed operator was; otherwise falls back to the general one and
    keeps real parts (imaginary parts at roundoff scale are discarded).
    """
    h = np.asarray(hessenberg, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] not in (h.shape[1], h.shape[1] + 1):
        raise ValueError(f"expected (m, m) or (m+1, m) array, got {h.shape}")
    m = h.shape[1]
    if m == 0:
        raise ValueError("empty Hessenberg block")
    block = h[:m, :m]
    if not np.all(np.isfinite(block)):
        raise NumericError("non-finite Hessenberg entries")
    scale = max(np.abs(block).max(initial=0.0), 1e-30)
    if np.abs(block - block.T).max(initial=0.0) <= symmetry_tol * scale:
        vals = np.linalg.eigvalsh(block)
    else:
        vals = np.linalg.eigvals(block).real
    return np.sort(vals)[::-1]


def relative_mae(estimate, reference, k: int | None = None) -> float:
    """Mean of |est - ref| / |ref| over the top k pairs."""
    est = np.sort(np.asarray(estimate, dtype=np.float64))[::-1]
    ref = np.sort(np.asarray(reference, dtype=np.float64))[::-1]
    if k is None:
        k = min(est.size, ref.size)
    if k < 1 or k > min(est.size, ref.size):
        raise ValueError(f"k={k} out of range")
    est, ref = est[:k], ref[:k]
    if np.any(ref == 0):
        raise ValueError("reference eigenvalues must be nonzero")
    return float(np.mean(np.abs(est - ref) / np.abs(ref)))


@dataclass
class SpectrumReport:
    values: np.ndarray  # descending
    top_positive: np.ndarray  # k largest positive values (may be empty)
    top_negative: float | None  # most negative value, None if none negative
    neg_ratio: float | None  # |most negative| / largest positive; None if undefined
    n_outliers: int  # values past the first with value/top above the cut
    outlier_cut: float = field(default=0.2)

    @property
    def top(self) -> float:
        return float(self.values[0])

    def to_dict(self) -> dict:
        return {
            "values": [float(v) for v in self.values],
            "top_positive": [float(v) for v in self.top_positive],
            "top_negative": self.top_negative,
            "neg_ratio": self.neg_ratio,
            "n_outliers": self.n_outliers,
            "outlier_cut": self.outlier_cut,
        }


def outlier_alignment(result: KrylovResult, vector, n_outliers: int) -> float:
    """Fraction of ``vector``'s squared norm inside the span of the top
    ``n_outliers`` Ritz vectors.

    Ritz vectors combine the Krylov basis with eigenvectors of the
    leading square Hessenberg block, symmetrized first; meaningful for
    the symmetric operators this module probes, where they come out
    orthonormal and the fraction lands in [0, 1] up to roundoff.
    """
    m = result.hess.shape[1]
    if not 1 <= n_outliers <= m:
        raise ValueError(f"need 1 <= n_outliers <= {m}, got {n_outliers}")
    v = np.asarray(vector, dtype=np.float64)
    dim = result.basis.shape[0]
    if v.shape != (dim,):
        raise ValueError(f"vector must have shape ({dim},), got {v.shape}")
    nrm = np.linalg.norm(v)
    if nrm == 0 or not np.isfinite(nrm):
        raise ValueError("vector must be nonzero and finite")
    block = result.hess[:m, :m]
    _, vecs = np.linalg.eigh((block + block.T) / 2.0)
    y = result.basis[:, :m] @ vecs[:, ::-1][:, :n_outliers]
    return float(np.linalg.norm(y.T @ v) ** 2 / nrm**2)


def spectrum_report(values, k: int = 10, outlier_cut: float = 0.2) -> SpectrumReport:
    """Summarize an estimated spectrum.

    ``n_outliers`` counts eigenvalues past the first whose ratio to the
    top one exceeds ``outlier_cut``, a crude cluster count that is stable
    under the sketch noise the estimates carry.  ``neg_ratio`` needs a
    positive top eigenvalue; without one it is reported as None rather
    than guessed.
    """
    if not 0.0 < outlier_cut < 1.0:
        raise ValueError(f"outlier_cut must lie in (0, 1), got {outlier_cut}")
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    vals = np.sort(np.asarray(values, dtype=np.float64))[::-1]
    if vals.size == 0:
        raise ValueError("empty spectrum")
    top = float(vals[0])
    pos = vals[vals > 0]
    neg = float(vals[-1]) if vals[-1] < 0 else None
    if top > 0:
        neg_ratio = abs(neg) / top if neg is not None else 0.0
        n_out = int(np.sum(vals[1:] / top > outlier_cut))
    else:
        neg_ratio = None
        n_out = 0
    return SpectrumReport(
        values=vals,
        top_positive=pos[:k].copy(),
        top_negative=neg,
        neg_ratio=neg_ratio,
        n_outliers=n_out,
        outlier_cut=outlier_cut,
    )
