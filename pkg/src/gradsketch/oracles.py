"""Synthetic models with exact derivatives.

Everything downstream (sketched calculus, spectral probes, dimension
search, score correlation) is exercised against these oracles, which
expose loss, gradient, and Hessian-vector products in closed form so
tests can compare sketched quantities to exact ones.

The shared convention: ``batch=None`` is the full objective (mean over
batches where applicable), an integer selects one batch.
"""

from __future__ import annotations

from typing import Protocol, runtime_checkable

import numpy as np

from .kron import compute_kron_shapes, kron_apply, sample_haar_factor
from .rng import derived_rng


@runtime_checkable
class ModelOracle(Protocol):
    dim: int
    n_batches: int

    def loss(self, theta, batch=None) -> float: ...

    def gradient(self, theta, batch=None) -> np.ndarray: ...

    def hvp(self, theta, v, batch=None) -> np.ndarray: ...


def _check_theta(theta, dim):
    theta = np.ascontiguousarray(theta, dtype=np.float64)
    if theta.shape != (dim,):
        raise ValueError(f"theta must have shape ({dim},), got {theta.shape}")
    return theta


class QuadraticOracle:
    """loss_k(theta) = 1/2 z^T A z + b_k . z with z = theta - theta_star.

    A = U diag(spectrum) U^T.  U is either the identity or a Kronecker
    product of Haar-orthogonal blocks, so Hessian products stay cheap at
    large dim.  Batch terms b_k = U (batch_profile * g_k) are centered
    across batches, hence the mean gradient equals the full one; their
    covariance in the U basis is diag(batch_profile^2), which sets the
    effective rank of batch-gradient scatter.
    """

    def __init__(
        self,
        spectrum,
        seed: int,
        n_batches: int = 0,
        batch_profile=None,
        rotate: bool = True,
    ):
        self.spectrum = np.ascontiguousarray(spectrum, dtype=np.float64)
        if self.spectrum.ndim != 1 or self.spectrum.size < 1:
            raise ValueError("spectrum must be a non-empty vector")
        self.dim = int(self.spectrum.size)
        self.seed = seed
        self.n_batches = int(n_batches)
        if rotate:
            blocks = compute_kron_shapes(self.dim)
            prod = 1
            for b in blocks:
                prod *= b
            if prod != self.dim:
                raise ValueError("rotation needs a power-of-two dim")
            self._factors = [
                sample_haar_factor(b, b, derived_rng(seed, "quad.basis", i))
                for i, b in enumerate(blocks)
            ]
        else:
            self._factors = None
        self.theta_star = derived_rng(seed, "quad.center").standard_normal(self.dim)
        if n_batches > 0:
            profile = (
                np.ones(self.dim)
                if batch_profile is None
                else np.ascontiguousarray(batch_profile, dtype=np.float64)
            )
            if profile.shape != (self.dim,):
                raise ValueError("batch_profile must match dim")
            g = derived_rng(seed, "quad.batches").standard_normal(
                (n_batches, self.dim)
            )
            g -= g.mean(axis=0)
            self._batch_terms = self._rot(g * profile)
        else:
            self._batch_terms = None

    def _rot(self, z):
        if self._factors is None:
            return np.ascontiguousarray(z)
        return kron_apply(z, self._factors)

    def _rot_t(self, z):
        if self._factors is None:
            return np.ascontiguousarray(z)
        return kron_apply(z, [f.T for f in self._factors])

    def _a_apply(self, z):
        return self._rot(self.spectrum * self._rot_t(z))

    def _b(self, batch):
        if batch is None:
            return None
        if self._batch_terms is None or not 0 <= batch < self.n_batches:
            raise ValueError(f"batch {batch} out of range")
        return self._batch_terms[batch]

    def loss(self, theta, batch=None) -> float:
        theta = _check_theta(theta, self.dim)
        z = theta - self.theta_star
        val = 0.5 * float(z @ self._a_apply(z))
        b = self._b(batch)
        if b is not None:
            val += float(b @ z)
        return val

    def gradient(self, theta, batch=None) -> np.ndarray:
        theta = _check_theta(theta, self.dim)
        g = self._a_apply(theta - self.theta_star)
        b = self._b(batch)
        if b is not None:
            g = g + b
        return g

    def hvp(self, theta, v, batch=None) -> np.ndarray:
        _check_theta(theta, self.dim)
        v = _check_theta(v, self.dim)
        self._b(batch)  # validate only; the Hessian is batch-independent
        return self._a_apply(v)

    def hessian_spectrum(self) -> np.ndarray:
        """Exact eigenvalues, descending."""
        return np.sort(self.spectrum)[::-1].copy()


def _sigmoid(t):
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


class LogisticOracle:
    """Ridge-regularized logistic regression on a seeded dataset.

    Features are Gaussian with per-coordinate scales ``feature_scale``;
    labels come from a planted direction with flip noise.  Each example
    is its own batch.
    """

    def __init__(
        self,
        dim: int,
        n_examples: int,
        seed: int,
        ridge: float = 1e-3,
        feature_scale=None,
        flip_prob: float = 0.05,
    ):
        if dim < 1 or n_examples < 1:
            raise ValueError("dim and n_examples must be positive")
        if ridge < 0:
            raise ValueError("ridge must be non-negative")
        self.dim = dim
        self.n_batches = n_examples
        self.ridge = float(ridge)
        scale = (
            np.ones(dim)
            if feature_scale is None
            else np.ascontiguousarray(feature_scale, dtype=np.float64)
        )
        if scale.shape != (dim,):
            raise ValueError("feature_scale must match dim")
        rng = derived_rng(seed, "logit.data")
        self.x = rng.standard_normal((n_examples, dim)) * scale
        w = derived_rng(seed, "logit.planted").standard_normal(dim)
        w /= np.linalg.norm(w)
        margins = self.x @ w
        flips = derived_rng(seed, "logit.noise").random(n_examples) < flip_prob
        self.y = np.where(flips, -np.sign(margins), np.sign(margins))
        self.y[self.y == 0] = 1.0

    def _rows(self, batch):
        if batch is None:
            return self.x, self.y
        if not 0 <= batch < self.n_batches:
            raise ValueError(f"batch {batch} out of range")
        return self.x[batch : batch + 1], self.y[batch : batch + 1]

    def loss(self, theta, batch=None) -> float:
        theta = _check_theta(theta, self.dim)
        x, y = self._rows(batch)
        t = -y * (x @ theta)
        # log(1 + exp(t)) without overflow
        vals = np.where(t > 0, t + np.log1p(np.exp(-np.abs(t))), np.log1p(np.exp(t)))
        return float(vals.mean() + 0.5 * self.ridge * theta @ theta)

    def gradient(self, theta, batch=None) -> np.ndarray:
        theta = _check_theta(theta, self.dim)
        x, y = self._rows(batch)
        s = _sigmoid(-y * (x @ theta))
        return (-s * y) @ x / len(y) + self.ridge * theta

    def hvp(self, theta, v, batch=None) -> np.ndarray:
        theta = _check_theta(theta, self.dim)
        v = _check_theta(v, self.dim)
        x, y = self._rows(batch)
        s = _sigmoid(x @ theta)
        w = s * (1.0 - s)
        return (w * (x @ v)) @ x / len(y) + self.ridge * v


class PlantedSubspaceOracle:
    """loss(theta) = 1/2 || S^T theta - t ||^2 for orthonormal S.

    The gradient lives in a planted k-dimensional subspace, so the loss
    is only reducible along it; outside directions are exactly flat.
    """

    def __init__(self, dim: int, planted_dim: int, seed: int, target_scale: float = 1.0):
        if not 1 <= planted_dim <= dim:
            raise ValueError("need 1 <= planted_dim <= dim")
        self.dim = dim
        self.planted_dim = planted_dim
        self.n_batches = 0
        g = derived_rng(seed, "planted.basis").standard_normal((dim, planted_dim))
        q, r = np.linalg.qr(g)
        self.basis = np.ascontiguousarray(q * np.sign(np.diag(r)))
        self.target = (
            derived_rng(seed, "planted.target").standard_normal(planted_dim)
            * target_scale
        )

    def loss(self, theta, batch=None) -> float:
        theta = _check_theta(theta, self.dim)
        r = self.basis.T @ theta - self.target
        return 0.5 * float(r @ r)

    def gradient(self, theta, batch=None) -> np.ndarray:
        theta = _check_theta(theta, self.dim)
        return self.basis @ (self.basis.T @ theta - self.target)

    def hvp(self, theta, v, batch=None) -> np.ndarray:
        _check_theta(theta, self.dim)
        v = _check_theta(v, self.dim)
        return self.basis @ (self.basis.T @ v)


def finite_difference_check(
    oracle: ModelOracle, theta, batch=None, eps: float = 1e-5, seed: int = 0
) -> dict:
    """Central-difference consistency of gradient and hvp.

    Returns relative errors; both should be O(eps^2) for smooth models.
    """
    theta = _check_theta(theta, oracle.dim)
    u = derived_rng(seed, "fd.direction").standard_normal(oracle.dim)
    u /= np.linalg.norm(u)
    df = (oracle.loss(theta + eps * u, batch) - oracle.loss(theta - eps * u, batch)) / (
        2 * eps
    )
    g = oracle.gradient(theta, batch)
    grad_err = abs(df - float(g @ u)) / max(abs(df), 1e-12)
    dg = (
        oracle.gradient(theta + eps * u, batch)
        - oracle.gradient(theta - eps * u, batch)
    ) / (2 * eps)
    hv = oracle.hvp(theta, u, batch)
    hvp_err = float(np.linalg.norm(dg - hv) / max(np.linalg.norm(dg), 1e-12))
    return {"grad": float(grad_err), "hvp": hvp_err}
