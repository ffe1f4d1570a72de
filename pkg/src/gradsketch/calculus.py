"""Sketched derivatives of model objectives.

Two routes to the same d-dimensional quantities, kept as separate code
paths on purpose so one can check the other:

explicit   evaluate the full-space derivative at theta0, then project
implicit   differentiate the reduced objective omega -> L(theta0 + Phi^T omega)
           at omega = 0, reaching the base point through the chart

Both equal Phi grad L(theta0) (resp. Phi H Phi^T v); the implicit route
exercises the transpose direction of every mixing layer, so disagreement
between the two is how a wrong adjoint shows up.
"""

from __future__ import annotations

import numpy as np

from .oracles import ModelOracle
from .sketch import Sketcher

_MODES = ("explicit", "implicit")


def _check_pair(sketcher: Sketcher, oracle: ModelOracle, theta0) -> np.ndarray:
    theta0 = np.ascontiguousarray(theta0, dtype=np.float64)
    if theta0.shape != (oracle.dim,):
        raise ValueError(f"theta0 must have shape ({oracle.dim},), got {theta0.shape}")
    if sketcher.n != oracle.dim:
        raise ValueError(f"sketcher input dim {sketcher.n} != oracle dim {oracle.dim}")
    return theta0


def explicit_grad_sketch(
    sketcher: Sketcher, oracle: ModelOracle, theta0, batch_id=None
) -> np.ndarray:
    theta0 = _check_pair(sketcher, oracle, theta0)
    return sketcher.forward(oracle.gradient(theta0, batch_id))


def implicit_grad_sketch(
    sketcher: Sketcher, oracle: ModelOracle, theta0, batch_id=None
) -> np.ndarray:
    """Gradient of omega -> L(theta0 + transpose(omega)) at omega = 0.

    One transpose call (the zero lift, which must land exactly on theta0)
    plus one gradient call; the chain rule then says the reduced gradient
    is forward of the full one.
    """
    theta0 = _check_pair(sketcher, oracle, theta0)
    theta = theta0 + sketcher.transpose(np.zeros(sketcher.d))
    return sketcher.forward(oracle.gradient(theta, batch_id))


def explicit_hvp_sketch(
    sketcher: Sketcher, oracle: ModelOracle, theta0, v, batch_id=None
) -> np.ndarray:
    """Phi H(theta0) Phi^T v."""
    theta0 = _check_pair(sketcher, oracle, theta0)
    return sketcher.forward(oracle.hvp(theta0, sketcher.transpose(v), batch_id))


def implicit_hvp_sketch(
    sketcher: Sketcher, oracle: ModelOracle, theta0, v, batch_id=None
) -> np.ndarray:
    """Curvature of the reduced objective at omega = 0, applied to v."""
    theta0 = _check_pair(sketcher, oracle, theta0)
    theta = theta0 + sketcher.transpose(np.zeros(sketcher.d))
    return sketcher.forward(oracle.hvp(theta, sketcher.transpose(v), batch_id))


class SketchedOperator:
    """The d x d map v -> Phi H(theta0) Phi^T v with an oracle-call counter.

    Symmetric whenever H is, since the sketch adjoint is exact.  ``mode``
    picks which derivative route serves each matvec; spectral probes
    consume this through ``matvec`` only.
    """

    def __init__(
        self,
        sketcher: Sketcher,
        oracle: ModelOracle,
        theta0,
        batch_id=None,
        mode: str = "explicit",
    ):
        if mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {mode!r}")
        self.sketcher = sketcher
        self.oracle = oracle
        self.theta0 = _check_pair(sketcher, oracle, theta0)
        self.batch_id = batch_id
        self.mode = mode
        self.n_matvec = 0

    @property
    def dim(self) -> int:
        return self.sketcher.d

    def matvec(self, v) -> np.ndarray:
        self.n_matvec += 1
        fn = explicit_hvp_sketch if self.mode == "explicit" else implicit_hvp_sketch
        return fn(self.sketcher, self.oracle, self.theta0, v, self.batch_id)

    def __call__(self, v) -> np.ndarray:
        return self.matvec(v)

    def to_dense(self) -> np.ndarray:
        """Materialize column by column; test-sized d only."""
        d = self.dim
        out = np.empty((d, d))
        e = np.zeros(d)
        for j in range(d):
            e[j] = 1.0
            out[:, j] = self.matvec(e)
            e[j] = 0.0
        return out


def apply_sketched_operator(op: SketchedOperator, v) -> np.ndarray:
    """One operator application, routed per ``op.mode``."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (op.dim,):
        raise ValueError(f"v must have shape ({op.dim},), got {v.shape}")
    return op.matvec(v)
