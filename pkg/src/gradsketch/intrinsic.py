"""Intrinsic-dimension search by masked subspace descent.

One sketcher is built at the largest candidate dimension and one omega
is trained throughout; activating a larger d only unmasks reduced
coordinates past the old d, so the run is a single descent trajectory
whose active dimension ratchets up at stalls.  Every candidate therefore
sees the same map restricted to its leading rows and window metrics are
comparable across the doubling ladder.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SearchExhaustedError
from .oracles import ModelOracle
from .sketch import SketchSpec, Sketcher, build_sketcher


@dataclass(frozen=True)
class SearchConfig:
    d_min: int
    d_max: int
    c: int = 300  # descent steps per budget window
    delta: float = 0.02  # minimum metric gain per window before doubling
    tau_target: float = 0.9
    lr: float = 0.1
    seed: int = 0
    algorithm: str = "affd"
    preconditioner: str = "hadamard"

    def __post_init__(self):
        for name in ("d_min", "d_max"):
            v = getattr(self, name)
            if v < 1 or v & (v - 1):
                raise ValueError(f"{name} must be a power of two, got {v}")
        if self.d_min > self.d_max:
            raise ValueError("d_min must not exceed d_max")
        if self.c < 1:
            raise ValueError("c must be positive")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if math.isnan(self.tau_target):
            raise ValueError("tau_target must not be NaN")

    @property
    def n_windows(self) -> int:
        """Window count of a full ladder, d_min up through d_max once each."""
        return int(math.log2(self.d_max // self.d_min)) + 1


@dataclass(frozen=True)
class TraceRow:
    step: int
    active_d: int
    metric: float


@dataclass
class SearchTrace:
    rows: list[TraceRow] = field(default_factory=list)
    d_star: int | None = None  # None marks an exhausted search

    def record(self, step: int, active_d: int, metric: float) -> None:
        self.rows.append(TraceRow(step, active_d, float(metric)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("step,active_d,metric\n")
        for r in self.rows:
            buf.write(f"{r.step},{r.active_d},{r.metric!r}\n")
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {
                "d_star": self.d_star,
                "rows": [[r.step, r.active_d, r.metric] for r in self.rows],
            }
        )


@dataclass
class SearchResult:
    d_star: int
    trace: SearchTrace
    spec: SketchSpec


def subspace_sgd_step(
    oracle: ModelOracle,
    sketcher: Sketcher,
    theta0: np.ndarray,
    omega: np.ndarray,
    active_d: int,
    lr: float,
    batch_id=None,
) -> np.ndarray:
    """One masked descent step on the reduced objective; returns new omega.

    The gradient of omega -> L(theta0 + transpose(omega)) is forward of
    the full gradient at the lifted point; coordinates past ``active_d``
    are zeroed before the step, so they stay exactly zero if they
    started there.
    """
    if not 0 <= active_d <= sketcher.d:
        raise ValueError(f"active_d must lie in [0, {sketcher.d}], got {active_d}")
    omega = np.asarray(omega, dtype=np.float64)
    if active_d == 0:
        return omega.copy()
    theta = np.asarray(theta0, dtype=np.float64) + sketcher.transpose(omega)
    g = sketcher.forward(oracle.gradient(theta, batch_id))
    g[active_d:] = 0.0
    return omega - lr * g


def make_loss_metric(oracle: ModelOracle, theta0=None, batch_id=None):
    """Loss-reduction metric 1 - L(theta)/L(theta0), the thing tau targets.

    A zero starting loss means there is nothing to reduce; the metric is
    then the constant 1 and any reachable target is met immediately.
    """
    if theta0 is None:
        theta0 = np.zeros(oracle.dim)
    loss0 = float(oracle.loss(np.asarray(theta0, dtype=np.float64), batch_id))
    if loss0 <= 1e-15:
        return lambda theta: 1.0

    def metric(theta) -> float:
        return 1.0 - float(oracle.loss(theta, batch_id)) / loss0

    return metric


def search_intrinsic_dimension(
    oracle: ModelOracle,
    evaluator,
    config: SearchConfig,
    theta0=None,
) -> SearchResult:
    """Smallest power-of-two active dimension reaching ``tau_target``.

    Runs windows of ``c`` steps on one persistent omega.  At each window
    boundary the metric is evaluated at the lifted point: target met
    returns the current d, a gain under ``delta`` doubles it, and a stall
    at d_max raises :class:`SearchExhaustedError` with the trace
    attached.  The step-0 evaluation comes first, so a target that holds
    before any training returns d_min untouched.
    """
    if theta0 is None:
        theta0 = np.zeros(oracle.dim)
    theta0 = np.ascontiguousarray(theta0, dtype=np.float64)
    spec = SketchSpec(
        algorithm=config.algorithm,
        n=oracle.dim,
        d=config.d_max,
        seed=config.seed,
        preconditioner=config.preconditioner,
    )
    sketcher = build_sketcher(spec)
    trace = SearchTrace()
    omega = np.zeros(config.d_max)
    active = config.d_min
    step = 0
    metric = float(evaluator(theta0 + sketcher.transpose(omega)))
    trace.record(step, active, metric)
    if metric >= config.tau_target:
        trace.d_star = active
        return SearchResult(d_star=active, trace=trace, spec=spec)
    while True:
        for _ in range(config.c):
            omega = subspace_sgd_step(
                oracle, sketcher, theta0, omega, active, config.lr
            )
        step += config.c
        prev = metric
        metric = float(evaluator(theta0 + sketcher.transpose(omega)))
        trace.record(step, active, metric)
        if metric >= config.tau_target:
            trace.d_star = active
            return SearchResult(d_star=active, trace=trace, spec=spec)
        if metric - prev < config.delta:
            if active == config.d_max:
                raise SearchExhaustedError(
                    f"stalled at d_max={config.d_max} short of "
                    f"tau_target={config.tau_target}",
                    trace=trace,
                )
            active *= 2


def verify_half(
    oracle: ModelOracle,
    evaluator,
    d_star: int,
    config: SearchConfig,
    theta0=None,
) -> tuple[bool, SearchTrace]:
    """Confirm d_star is tight to within a factor of two.

    Trains at the fixed dimension d_star / 2 for the whole ladder's
    budget, ``c`` times the full window count, so a miss is not a budget
    artifact.  Passes (True) when the metric never reaches the target.
    """
    if d_star < 2 * config.d_min:
        raise ValueError(
            f"d_star={d_star} leaves no room below it: need d_star >= 2 * d_min"
        )
    if theta0 is None:
        theta0 = np.zeros(oracle.dim)
    theta0 = np.ascontiguousarray(theta0, dtype=np.float64)
    spec = SketchSpec(
        algorithm=config.algorithm,
        n=oracle.dim,
        d=config.d_max,
        seed=config.seed,
        preconditioner=config.preconditioner,
    )
    sketcher = build_sketcher(spec)
    half = d_star // 2
    trace = SearchTrace()
    omega = np.zeros(config.d_max)
    step = 0
    metric = float(evaluator(theta0 + sketcher.transpose(omega)))
    trace.record(step, half, metric)
    reached = metric >= config.tau_target
    for _ in range(config.n_windows):
        if reached:
            break
        for _ in range(config.c):
            omega = subspace_sgd_step(oracle, sketcher, theta0, omega, half, config.lr)
        step += config.c
        metric = float(evaluator(theta0 + sketcher.transpose(omega)))
        trace.record(step, half, metric)
        reached = metric >= config.tau_target
    return not reached, trace
