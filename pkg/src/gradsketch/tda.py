"""Attribution-score fidelity under sketching.

The attribution score between two batches is the dot product of their
gradients; the sketched score replaces both with their projections.
Since each family preserves inner products in expectation, the question
is how tightly, and the Pearson correlation between exact and sketched
scores over sampled batch pairs is the figure of merit.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import UndefinedCorrelationError
from .oracles import ModelOracle
from .rng import derived_rng, sample_without_replacement
from .sketch import SketchSpec, Sketcher, build_sketcher


def tda_score(g_query: np.ndarray, g_train: np.ndarray) -> float:
    """Exact attribution score: plain gradient dot product."""
    g_query = np.asarray(g_query, dtype=np.float64)
    g_train = np.asarray(g_train, dtype=np.float64)
    if g_query.shape != g_train.shape:
        raise ValueError("gradient shapes differ")
    return float(g_query @ g_train)


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("need two equal-length vectors")
    if x.size < 2:
        raise UndefinedCorrelationError("need at least two points")
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.linalg.norm(xc) * np.linalg.norm(yc)
    if denom == 0:
        raise UndefinedCorrelationError("a side has zero variance")
    return float(xc @ yc / denom)


@dataclass
class ScorePair:
    i: int
    j: int
    exact: float
    sketched: float


@dataclass
class CorrelationResult:
    r: float
    pairs: list[ScorePair] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("i,j,exact,sketched\n")
        for p in self.pairs:
            buf.write(f"{p.i},{p.j},{p.exact!r},{p.sketched!r}\n")
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"r": self.r, "pairs": [vars(p) for p in self.pairs]})


def _unrank_pairs(idx: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Linear index -> (i, j), i < j, over the C(m, 2) unordered pairs."""
    counts = np.arange(m - 1, 0, -1, dtype=np.int64)
    starts = np.concatenate([[0], np.cumsum(counts)])
    i = np.searchsorted(starts, idx, side="right") - 1
    j = idx - starts[i] + i + 1
    return i.astype(np.int64), j


def correlation_harness(
    oracle: ModelOracle,
    sketcher: Sketcher,
    theta,
    n_pairs: int,
    seed: int = 0,
    batches=None,
) -> CorrelationResult:
    """Exact-vs-sketched score correlation over sampled batch pairs.

    Each batch gradient is computed and sketched once, then pairs are
    drawn without replacement from all unordered pairs of the batch set
    (all of them when n_pairs is at least C(m, 2)).
    """
    theta = np.ascontiguousarray(theta, dtype=np.float64)
    ids = list(range(oracle.n_batches)) if batches is None else list(batches)
    m = len(ids)
    if m < 2:
        raise ValueError("need at least two batches")
    if n_pairs < 2:
        raise ValueError("need at least two pairs")
    grads = np.empty((m, oracle.dim))
    sketched = np.empty((m, sketcher.d))
    for k, b in enumerate(ids):
        grads[k] = oracle.gradient(theta, b)
        sketched[k] = sketcher.forward(grads[k])
    total = m * (m - 1) // 2
    rng = derived_rng(seed, "tda.pairs")
    if n_pairs >= total:
        lin = np.arange(total, dtype=np.int64)
    else:
        lin = np.sort(sample_without_replacement(rng, total, n_pairs))
    ii, jj = _unrank_pairs(lin, m)
    exact = np.einsum("ij,ij->i", grads[ii], grads[jj])
    approx = np.einsum("ij,ij->i", sketched[ii], sketched[jj])
    pairs = [
        ScorePair(int(ids[a]), int(ids[b]), float(e), float(s))
        for a, b, e, s in zip(ii, jj, exact, approx)
    ]
    return CorrelationResult(r=pearson(exact, approx), pairs=pairs)


def minimal_sketch_dim(
    oracle: ModelOracle,
    theta,
    algorithm: str,
    d_grid,
    target_r: float,
    n_pairs: int,
    seed: int = 0,
    preconditioner: str = "hadamard",
    batches=None,
) -> tuple[int | None, dict[int, float]]:
    """Smallest d in the (ascending) grid whose correlation reaches
    ``target_r``; None if none does.  Returns the whole profile too."""
    ds = sorted(int(d) for d in d_grid)
    profile: dict[int, float] = {}
    hit = None
    for d in ds:
        spec = SketchSpec(
            algorithm=algorithm,
            n=oracle.dim,
            d=d,
            seed=seed,
            preconditioner=preconditioner,
        )
        res = correlation_harness(
            oracle, build_sketcher(spec), theta, n_pairs, seed=seed, batches=batches
        )
        profile[d] = res.r
        if hit is None and res.r >= target_r:
            hit = d
    return hit, profile


def block_masks(dim: int, sizes) -> list[np.ndarray]:
    """Boolean coordinate masks partitioning range(dim) into consecutive
    blocks of the given sizes."""
    sizes = [int(s) for s in sizes]
    if any(s < 1 for s in sizes) or sum(sizes) != dim:
        raise ValueError(f"sizes must be positive and sum to {dim}")
    masks = []
    start = 0
    for s in sizes:
        m = np.zeros(dim, dtype=bool)
        m[start : start + s] = True
        masks.append(m)
        start += s
    return masks


@dataclass
class MaskedCorrelation:
    r_blocks: list[float]  # per-block Pearson r against the full scores
    full: np.ndarray  # full-gradient score per sampled pair
    blocks: np.ndarray  # (n_pairs, n_blocks) block-restricted scores
    index: list[tuple[int, int]]

    def to_csv(self) -> str:
        buf = io.StringIO()
        heads = ",".join(f"block_{k}" for k in range(self.blocks.shape[1]))
        buf.write(f"i,j,full,{heads}\n")
        for (i, j), f, row in zip(self.index, self.full, self.blocks):
            cells = ",".join(repr(float(v)) for v in row)
            buf.write(f"{i},{j},{float(f)!r},{cells}\n")
        return buf.getvalue()


def layer_masked_correlation(
    oracle: ModelOracle,
    theta,
    masks,
    n_pairs: int,
    seed: int = 0,
    batches=None,
) -> MaskedCorrelation:
    """How well block-restricted scores track the full ones.

    No sketching here: the restricted score keeps only one coordinate
    block of both gradients, the cheap shortcut of scoring by a single
    layer.  Its correlation with the full-gradient score is high only
    when the block carries a representative share of every gradient,
    which heterogeneous scaling breaks.
    """
    theta = np.ascontiguousarray(theta, dtype=np.float64)
    ids = list(range(oracle.n_batches)) if batches is None else list(batches)
    m = len(ids)
    if m < 2:
        raise ValueError("need at least two batches")
    masks = [np.asarray(mk, dtype=bool) for mk in masks]
    if not masks:
        raise ValueError("need at least one mask")
    cover = np.zeros(oracle.dim, dtype=np.int64)
    for mk in masks:
        if mk.shape != (oracle.dim,):
            raise ValueError("each mask must cover the parameter vector")
        if not mk.any():
            raise ValueError("empty block")
        cover += mk
    if not np.all(cover == 1):
        raise ValueError("masks must partition the coordinates")
    grads = np.empty((m, oracle.dim))
    for k, b in enumerate(ids):
        grads[k] = oracle.gradient(theta, b)
    total = m * (m - 1) // 2
    rng = derived_rng(seed, "tda.pairs")
    if n_pairs >= total:
        lin = np.arange(total, dtype=np.int64)
    else:
        lin = np.sort(sample_without_replacement(rng, total, n_pairs))
    ii, jj = _unrank_pairs(lin, m)
    full = np.einsum("ij,ij->i", grads[ii], grads[jj])
    blocks = np.empty((lin.size, len(masks)))
    for k, mk in enumerate(masks):
        blocks[:, k] = np.einsum("ij,ij->i", grads[ii][:, mk], grads[jj][:, mk])
    rs = [pearson(blocks[:, k], full) for k in range(len(masks))]
    index = [(int(ids[a]), int(ids[b])) for a, b in zip(ii, jj)]
    return MaskedCorrelation(r_blocks=rs, full=full, blocks=blocks, index=index)
