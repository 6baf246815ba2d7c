"""
Proximal method of multipliers with inexact Newton primal steps.

One outer iteration, for INDO and ESOM alike:

1. ``g = grad f(x) + q + alpha (I - W) x`` and an inner solve of
   ``H d = -g`` (JOR for INDO, block splitting for ESOM);
2. ``x <- x + d``;
3. ``q <- q + alpha (I - W) x``.

The dual variable is tracked in transformed form ``q = (I - W)^{1/2} v``,
which keeps every update neighbor-local.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import costs
from .inner import (EsomSplitting, FixedCount, Forcing, InnerSolveError, JorSplitting,
                    block_apply, initial_direction, inner_solve)
from .objectives import error_E, error_V, quadratic_solution

DIVERGENCE_LIMIT = 1e12
VARIANTS = ("indo", "esom")


class ConfigError(ValueError):
    pass


class DivergenceError(RuntimeError):
    """The error metric blew up; `result` holds the partial run."""

    def __init__(self, message, result):
        super().__init__(message)
        self.result = result


def gamma_upper(m, M, alpha, eps, w_d, w_m):
    """Right end of the JOR convergence interval ``(0, gamma_max)``."""
    return 2.0 * (m + alpha * (1.0 - w_d) + eps) / (
        M + eps + alpha * (1.0 - w_m) + alpha * (1.0 - w_d))


def practical_gamma(m, M, alpha, eps, w_d):
    """Relaxation used in the experiments: ``2(m+eps+alpha(1-w_d))/(M+2alpha+eps)``."""
    return 2.0 * (m + eps + alpha * (1.0 - w_d)) / (M + 2.0 * alpha + eps)


@dataclass(frozen=True)
class SolverConfig:
    """
    Parameters of one INDO or ESOM run.

    `gamma` is only used by INDO; ``None`` selects `practical_gamma`.
    `warm_start` starts each inner JOR solve at the previous direction
    (zero at the first iteration); `initial_solve` additionally replaces
    that first zero start by a few JOR steps reaching
    ``||H d + g||_inf <= ||g||_inf``. ESOM always starts its inner
    recursion from zero. With `checked`, an explicit `gamma` must lie in
    the JOR convergence interval.
    """

    variant: str = "indo"
    alpha: float = 1.0
    eps: float = 1.0
    gamma: float = None
    inner: object = FixedCount(1)
    warm_start: bool = True
    initial_solve: bool = False
    residual_norm: str = "2"
    checked: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError("variant must be one of %s, got %r" % (VARIANTS, self.variant))
        if not self.alpha > 0:
            raise ConfigError("alpha must be positive, got %r" % self.alpha)
        if not self.eps > 0:
            raise ConfigError("eps must be positive, got %r" % self.eps)
        if self.gamma is not None and not self.gamma > 0:
            raise ConfigError("gamma must be positive, got %r" % self.gamma)
        if not isinstance(self.inner, (FixedCount, Forcing)):
            raise ConfigError("inner policy must be FixedCount or Forcing")
        if self.residual_norm not in ("2", "inf"):
            raise ConfigError("residual_norm must be '2' or 'inf'")

    @property
    def label(self):
        ell = self.inner.ell if isinstance(self.inner, FixedCount) else "eta%g" % self.inner.eta
        if self.variant == "indo":
            return "INDO-%s" % ell
        return "ESOM-%s-%s-%s" % (ell, _fmt(self.alpha), _fmt(self.eps))

    def resolve(self, m, M, w_d, w_m):
        """Return a copy with a numeric `gamma`, validating it when `checked`."""
        if self.variant != "indo":
            return self
        gmax = gamma_upper(m, M, self.alpha, self.eps, w_d, w_m)
        if self.gamma is None:
            return replace(self, gamma=practical_gamma(m, M, self.alpha, self.eps, w_d))
        if self.checked and not self.gamma < gmax:
            raise ConfigError("gamma=%g is outside the JOR convergence interval (0, %.17g)"
                              % (self.gamma, gmax))
        return self


def _fmt(v):
    return "%g" % v


@dataclass
class PmmState:
    """
    Iterate of the outer loop; `x`, `q`, `d_warm` are node-stacked (N, n).

    `comm_rounds` counts neighbor exchanges of n-vectors per node and
    `sp_cost` the accumulated per-node scalar-product cost.
    """

    k: int
    x: np.ndarray
    q: np.ndarray
    d_warm: np.ndarray = None
    comm_rounds: int = 0
    sp_cost: float = 0.0

    @classmethod
    def initial(cls, N, n, x0=None):
        x = np.zeros((N, n)) if x0 is None else np.array(x0, dtype=float).reshape(N, n)
        return cls(0, x, np.zeros((N, n)))

    def dual_sum(self):
        """Per-coordinate ``sum_i q_i``; zero in exact arithmetic."""
        return self.q.sum(axis=0)


@dataclass
class TraceRecord:
    k: int
    metric: float
    residual_2norm: float
    comm_rounds_cum: int
    sp_cost_cum: float
    lyapunov: float = None
    ell_used: int = 0


TRACE_FIELDS = ("k", "metric", "residual_2norm", "comm_rounds_cum",
                "sp_cost_cum", "lyapunov", "ell_used")


@dataclass
class StepInfo:
    """Everything a monitor may inspect about outer iteration ``k -> k+1``."""

    k: int
    x: np.ndarray
    x_next: np.ndarray
    q: np.ndarray
    q_next: np.ndarray
    d: np.ndarray
    g: np.ndarray
    grad: np.ndarray
    hessians: np.ndarray
    r: np.ndarray
    eta: float
    config: SolverConfig


@dataclass
class RunResult:
    config: SolverConfig
    trace: list
    state: PmmState
    max_dual_drift: float = 0.0
    monitor_data: dict = field(default_factory=dict)

    def column(self, name):
        return np.array([getattr(rec, name) for rec in self.trace], dtype=float)


def compute_g(state, problem, network, alpha, grad=None):
    """``g_i = grad f_i(x_i) + q_i + alpha [(1 - w_ii) x_i - sum_{j in O_i} w_ij x_j]``."""
    if grad is None:
        grad = problem.gradients(state.x)
    return grad + state.q + alpha * network.laplacian_apply(state.x)


def apply_H(problem, network, alpha, eps, x_point, v, hessians=None):
    """Matrix-free product with ``hess f(x) + alpha (I - W) + eps I``."""
    if hessians is None:
        hessians = problem.hessians(x_point)
    v = np.asarray(v, dtype=float)
    return (block_apply(hessians, v)
            + alpha * network.laplacian_apply(v) + eps * v)


def primal_update(state, d):
    return replace(state, x=state.x + d)


def dual_update(state, network, alpha):
    return replace(state, q=state.q + alpha * network.laplacian_apply(state.x))


def _build_splitting(config, hessians, network):
    if config.variant == "indo":
        return JorSplitting(hessians, network.W, config.alpha, config.eps, config.gamma)
    return EsomSplitting(hessians, network.W, config.alpha, config.eps)


def run(config, problem, network, iterations, monitors=(), x0=None, y_star=None,
        track_residual=True, divergence_limit=DIVERGENCE_LIMIT):
    """
    Execute `iterations` outer iterations and record one `TraceRecord` each.

    Parameters
    ----------
    config : SolverConfig
    problem : ProblemInstance
    network : Network
    iterations : int
    monitors : sequence of callables
        Each is called as ``monitor(info)`` with a `StepInfo`; a returned
        dict may set ``"lyapunov"`` for the trace.
    x0 : ndarray, optional
        Initial primal iterate, zero by default.
    y_star : ndarray, optional
        Minimizer for the relative error; computed for quadratics when
        omitted. Without it the trace metric is the average cost V.

    Returns
    -------
    RunResult

    Raises
    ------
    DivergenceError
        If the metric exceeds `divergence_limit` or is not finite.
    InnerSolveError
        If a forcing policy hits its cap; ``exc.result`` holds the
        iterations completed so far.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if problem.N != network.N:
        raise ValueError("problem has %d nodes, network has %d" % (problem.N, network.N))
    config = config.resolve(problem.m, problem.M, network.w_d, network.w_m)
    N, n = problem.N, problem.n
    if y_star is None and problem.kind == "quadratic":
        y_star = quadratic_solution(problem)
    if y_star is not None:
        metric = lambda X: error_E(X, y_star)  # noqa: E731
    else:
        metric = lambda X: error_V(X, problem)  # noqa: E731
    samples = float(np.mean(problem.sizes)) if problem.kind == "logistic" else 0.0
    eta = config.inner.eta if isinstance(config.inner, Forcing) else None

    state = PmmState.initial(N, n, x0)
    # neighbors' x^0 are needed once for g^0; later g^k reuses the dual step's exchange
    state.comm_rounds = 1
    result = RunResult(config, [], state)
    qscale = 0.0
    splitting = None
    hessians = None

    for k in range(iterations):
        x = state.x
        grad = problem.gradients(x)
        if hessians is None or not problem.constant_hessian:
            hessians = problem.hessians(x)
            splitting = _build_splitting(config, hessians, network)
        g = compute_g(state, problem, network, config.alpha, grad=grad)

        extra = 0
        d0 = None
        if config.variant == "indo":
            if k == 0 and config.initial_solve:
                d0, extra = initial_direction(splitting, g)
            elif config.warm_start and state.d_warm is not None:
                d0 = state.d_warm
        need_res = track_residual or bool(monitors)
        try:
            inner = inner_solve(splitting, g, config.inner, d0=d0,
                                norm=config.residual_norm, track_residual=need_res)
        except InnerSolveError as exc:
            exc.result = result
            raise
        d = inner.d
        ell = inner.ell + extra

        nxt = dual_update(primal_update(state, d), network, config.alpha)
        nxt.k = k + 1
        nxt.d_warm = d
        nxt.comm_rounds = state.comm_rounds + ell + 1
        nxt.sp_cost = state.sp_cost + costs.sp_cost(
            config.variant, problem.kind, samples, n, N, ell, first=(k == 0))

        qscale = max(qscale, float(np.linalg.norm(nxt.q)))
        drift = float(np.max(np.abs(nxt.dual_sum()))) / (1.0 + qscale)
        result.max_dual_drift = max(result.max_dual_drift, drift)

        lyap = None
        if monitors:
            r = splitting.apply_H(d) + g
            info = StepInfo(k, x, nxt.x, state.q, nxt.q, d, g, grad, hessians, r,
                            eta, config)
            for mon in monitors:
                out = mon(info)
                if out and "lyapunov" in out:
                    lyap = out["lyapunov"]

        value = metric(nxt.x)
        result.trace.append(TraceRecord(
            k + 1, value, inner.residual, nxt.comm_rounds, nxt.sp_cost, lyap, ell))
        state = nxt
        result.state = state
        if not math.isfinite(value) or value > divergence_limit:
            raise DivergenceError(
                "%s diverged at iteration %d (metric %.3e)" % (config.label, k + 1, value),
                result)
    return result
