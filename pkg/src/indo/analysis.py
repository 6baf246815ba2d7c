"""
Convergence-factor analysis and runtime checks of the convergence theory.

Closed-form quantities (relaxation interval, inner iteration bounds, outer
contraction constants) sit next to dense assemblies used to measure the
same quantities on concrete instances, and monitors that verify the
descent inequalities along a run.
"""

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .inner import EsomSplitting, JorSplitting, block_apply
from .objectives import centralized_solution
from .pmm import gamma_upper, practical_gamma

DENSE_LIMIT = 2000


# -- relaxation interval and closed-form bounds -------------------------------

def gamma_interval(m, M, alpha, eps, w_d, w_m):
    """Open interval ``(0, gamma_max)`` on which JOR converges for every x."""
    return 0.0, gamma_upper(m, M, alpha, eps, w_d, w_m)


@dataclass(frozen=True)
class SplittingBounds:
    esom: float
    indo: float
    indo_valid: bool


def splitting_bounds(m, M, alpha, eps, w):
    """
    Block-norm bounds on the inner iteration matrices for equal ``w_ii = w``.

    ESOM: ``2a(1-w) / (2a(1-w) + eps + m)``. INDO with ``gamma = 1``:
    ``(M - m + a(1-w)) / (a(1-w) + eps + m)``, which is below one exactly
    when ``eps > max(M - 2m, 0)`` (`indo_valid`).
    """
    a = alpha * (1.0 - w)
    esom = 2.0 * a / (2.0 * a + eps + m)
    indo = (M - m + a) / (a + eps + m)
    return SplittingBounds(esom, indo, eps > max(M - 2.0 * m, 0.0))


def ell_constant(m, M, alpha, eps, w_d, w_m, literal=False):
    """
    Constant ``c`` with ``||H d^l + g|| <= c sigma^l ||g||`` for ``d^0 = 0``.

    ``c = (||H|| bound / (m + eps)) * sqrt((eps + M + a(1-w_m)) / (eps + m + a(1-w_d)))``
    where the bound on ``||H||`` is ``M + 2 alpha + eps``. With `literal`,
    ``M + 2 + eps`` is used instead, which only bounds ``||H||`` when
    ``alpha <= 1``.
    """
    hnorm = M + (2.0 if literal else 2.0 * alpha) + eps
    c_D = math.sqrt((eps + M + alpha * (1.0 - w_m)) / (eps + m + alpha * (1.0 - w_d)))
    return hnorm / (m + eps) * c_D


def ell_bound(eta, m, M, alpha, eps, w_d, w_m, sigma_T, literal=False):
    """
    Inner JOR steps from ``d^0 = 0`` that guarantee the forcing test.

    The smallest l with ``c sigma_T^l <= eta``, i.e.
    ``ceil(ln(c / eta) / |ln sigma_T|)``, clamped below at 1.
    """
    if not 0.0 < eta < 1.0:
        raise ValueError("eta must lie in (0, 1), got %r" % eta)
    if not sigma_T < 1.0:
        raise ValueError("no finite inner bound: spectral radius %r >= 1" % sigma_T)
    if sigma_T <= 0.0:
        return 1
    c = ell_constant(m, M, alpha, eps, w_d, w_m, literal=literal)
    ratio = math.log(c / eta) / abs(math.log(sigma_T))
    return max(1, math.ceil(ratio))


# -- dense assembly -------------------------------------------------------------

def block_norm(T, n):
    """``max_i sum_j ||T_ij||_2`` over the n x n blocks of a square matrix."""
    T = np.asarray(T, dtype=float)
    N = T.shape[0] // n
    blocks = T.reshape(N, n, N, n).transpose(0, 2, 1, 3)
    norms = np.linalg.svd(blocks, compute_uv=False)[..., 0]
    return float(norms.sum(axis=1).max())


def _check_dense(splitting):
    N, n = splitting.shape
    if N * n > DENSE_LIMIT:
        raise ValueError("dense assembly limited to nN <= %d (got %d)" % (DENSE_LIMIT, N * n))
    return N, n


def assemble_H(splitting):
    N, n = _check_dense(splitting)
    H = np.kron(splitting.alpha * (np.eye(N) - splitting.W), np.eye(n))
    H += splitting.eps * np.eye(N * n)
    for i in range(N):
        H[i * n:(i + 1) * n, i * n:(i + 1) * n] += splitting.hessians[i]
    return H


def assemble_T(splitting):
    """Dense inner iteration matrix: ``T_gamma`` for JOR, ``D_E^{-1} B`` for ESOM."""
    N, n = _check_dense(splitting)
    H = assemble_H(splitting)
    if isinstance(splitting, JorSplitting):
        D = splitting.D.ravel()
        G = np.diag(D) - H
        return splitting.gamma * G / D[:, None] + (1.0 - splitting.gamma) * np.eye(N * n)
    DE = np.zeros_like(H)
    for i in range(N):
        DE[i * n:(i + 1) * n, i * n:(i + 1) * n] = splitting.DE[i]
    return np.linalg.solve(DE, DE - H)


# -- spectral radius ------------------------------------------------------------

@dataclass(frozen=True)
class RadiusEstimate:
    value: float
    method: str
    converged: bool = True
    steps: int = 0

    def __float__(self):
        return self.value


def power_iteration(splitting, tol=1e-10, max_iter=100000, seed=0):
    """
    Spectral radius of the inner iteration matrix by power iteration.

    ``T`` is self-adjoint in the ``D``-inner product (``D_E`` for ESOM), so
    iterating in that geometry is a symmetric power method and
    ``||T u||_D / ||u||_D`` increases monotonically to the radius.
    """
    N, n = splitting.shape
    u = np.random.default_rng(seed).standard_normal((N, n))
    jor = isinstance(splitting, JorSplitting)
    if jor:
        u /= math.sqrt(np.sum(splitting.D * u * u))
    else:
        u /= math.sqrt(np.sum(u * block_apply(splitting.DE, u)))
    est = 0.0
    for step in range(1, max_iter + 1):
        if jor:
            Tu = splitting.step(u, 0.0)
            nrm2 = np.sum(splitting.D * Tu * Tu)
        else:
            # D_E T u = B u, so the D_E-norm needs no extra block product
            Bu = splitting.apply_B(u)
            Tu = block_apply(splitting.DE_inv, Bu)
            nrm2 = np.sum(Tu * Bu)
        nrm = math.sqrt(max(float(nrm2), 0.0))
        if nrm == 0.0:
            return RadiusEstimate(0.0, "power", True, step)
        if abs(nrm - est) <= tol * nrm:
            return RadiusEstimate(nrm, "power", True, step)
        est = nrm
        u = Tu / nrm
    return RadiusEstimate(est, "power", False, max_iter)


def spectral_radius_T(splitting, method=None, tol=1e-10, max_iter=100000):
    """
    Spectral radius of the inner iteration matrix.

    JOR defaults to a symmetric eigensolve of the similar matrix
    ``D^{-1/2} (gamma G + (1 - gamma) D) D^{-1/2}`` when ``nN`` is within
    the dense limit; everything else uses `power_iteration`. A power
    iteration that hits `max_iter` is returned with ``converged=False``.
    """
    N, n = splitting.shape
    if method is None:
        dense_ok = N * n <= DENSE_LIMIT
        method = "symmetric" if isinstance(splitting, JorSplitting) and dense_ok else "power"
    if method == "symmetric":
        if not isinstance(splitting, JorSplitting):
            raise ValueError("symmetric eigensolve is implemented for JOR only")
        H = assemble_H(splitting)
        D = splitting.D.ravel()
        C = splitting.gamma * (np.diag(D) - H) + (1.0 - splitting.gamma) * np.diag(D)
        s = 1.0 / np.sqrt(D)
        eig = np.linalg.eigvalsh(s[:, None] * C * s[None, :])
        return RadiusEstimate(float(np.max(np.abs(eig))), "symmetric")
    if method == "power":
        est = power_iteration(splitting, tol=tol, max_iter=max_iter)
        if not est.converged:
            warnings.warn("power iteration did not converge in %d steps" % max_iter)
        return est
    raise ValueError("unknown method %r" % method)


def hessian_offdiag_excess(problem, X):
    """
    ``max_i ||hess f_i - diag(hess f_i)||_2 - (M - m)`` at the rows of `X`.

    Nonpositive whenever the local Hessians have spectrum in ``[m, M]``.
    """
    worst = -np.inf
    for i in range(problem.N):
        Hs = problem.hessian(i, X[i])
        off = Hs - np.diag(np.diag(Hs))
        worst = max(worst, np.linalg.norm(off, 2) - (problem.M - problem.m))
    return float(worst)


# -- outer contraction constants ------------------------------------------------

@dataclass(frozen=True)
class TheoremConstants:
    feasible: bool
    reason: str = ""
    zeta: float = math.nan
    beta: float = math.nan
    phi: float = math.nan
    delta_a: float = math.nan
    delta_b: float = math.nan
    delta: float = math.nan
    delta_tilde: float = math.nan
    eta_bar: float = math.nan

    @property
    def contraction(self):
        return (1.0 + self.delta_tilde) / (1.0 + self.delta)


def zeta_interval(m, M, eps):
    return (m + M) / (2.0 * m * M), eps / (8.0 * M * M)


def theorem_constants(m, M, alpha, eps, lambda2, zeta, beta=2.0, phi=2.0,
                      delta_tilde_ratio=0.5):
    """
    Constants of the linear contraction of the Lyapunov function.

    Requires ``zeta`` inside ``((m+M)/(2mM), eps/(8M^2))``, which is nonempty
    only when ``eps > 4M(m+M)/m``, and ``beta, phi > 1``. Infeasible inputs
    return ``feasible=False`` with a reason instead of clamped values.
    """
    lo, hi = zeta_interval(m, M, eps)
    base = dict(zeta=zeta, beta=beta, phi=phi)
    if not lo < hi:
        return TheoremConstants(False, "empty zeta interval: need eps > 4M(m+M)/m = %.6g"
                                % (4.0 * M * (m + M) / m), **base)
    if not lo < zeta < hi:
        return TheoremConstants(False, "zeta=%g outside (%.6g, %.6g)" % (zeta, lo, hi), **base)
    if not (beta > 1.0 and phi > 1.0):
        return TheoremConstants(False, "beta and phi must exceed 1", **base)
    if not 0.0 < delta_tilde_ratio < 1.0:
        return TheoremConstants(False, "delta_tilde_ratio must lie in (0, 1)", **base)
    M2 = M * M
    delta_a = 2.0 * m * M / ((m + M) * eps) - 1.0 / (eps * zeta)
    b1 = ((alpha * eps - 8.0 * M2 * alpha * zeta) * (phi - 1.0) * (beta - 1.0) * lambda2
          / (beta * eps ** 2 * (phi - 1.0) + 8.0 * M2 * beta * (beta - 1.0) * phi))
    b2 = 2.0 * alpha * lambda2 / ((m + M) * phi * beta)
    delta_b = min(b1, b2)
    delta = min(delta_a, delta_b)
    dt = delta_tilde_ratio * delta
    common = alpha * zeta + delta * beta * phi / ((phi - 1.0) * lambda2)
    eta2 = min(dt * alpha * eps / (4.0 * (M + 2.0 * alpha) ** 2 * common),
               dt / (8.0 * common))
    return TheoremConstants(True, "", zeta, beta, phi, delta_a, delta_b, delta, dt,
                            math.sqrt(eta2))


def best_theorem_constants(m, M, alpha, eps, lambda2, betas=(1.25, 1.5, 2.0, 4.0, 8.0),
                           phis=(1.25, 1.5, 2.0, 4.0, 8.0), zeta_points=25,
                           delta_tilde_ratio=0.5):
    """
    Grid search over ``(beta, phi, zeta)`` for the largest ``delta``.

    `zeta` is sampled geometrically inside its open interval. Returns an
    infeasible result when the interval is empty.
    """
    lo, hi = zeta_interval(m, M, eps)
    if not lo < hi:
        return theorem_constants(m, M, alpha, eps, lambda2, lo, delta_tilde_ratio=delta_tilde_ratio)
    zetas = np.geomspace(lo, hi, zeta_points + 2)[1:-1]
    best = None
    for beta in betas:
        for phi in phis:
            for zeta in zetas:
                tc = theorem_constants(m, M, alpha, eps, lambda2, float(zeta), beta, phi,
                                       delta_tilde_ratio)
                if tc.feasible and (best is None or tc.delta > best.delta):
                    best = tc
    return best


# -- Lyapunov function ----------------------------------------------------------

class LyapunovReference:
    """
    Optimal primal-dual pair and the dual back-transformation.

    ``v = ((I - W)^{1/2})^+ q`` on the nonzero eigenspace; ``v*`` is the
    solution of ``(I - W)^{1/2} v* = -grad f(x*)`` in that range.
    """

    def __init__(self, problem, network, alpha, eps, y_star=None, tol=1e-8):
        self.problem = problem
        self.alpha = float(alpha)
        self.eps = float(eps)
        self.W = network.W
        N = network.N
        if y_star is None:
            y_star = centralized_solution(problem)
        self.y_star = np.asarray(y_star, dtype=float)
        self.x_star = np.tile(self.y_star, (N, 1))
        lam, U = np.linalg.eigh(np.eye(N) - network.W)
        keep = lam > 1e-10
        inv_sqrt = np.zeros_like(lam)
        inv_sqrt[keep] = 1.0 / np.sqrt(lam[keep])
        self.sqrt_pinv = (U * inv_sqrt) @ U.T
        self.sqrt = (U * np.sqrt(np.clip(lam, 0.0, None))) @ U.T
        self.null = U[:, ~keep]
        self.grad_star = problem.gradients(self.x_star)
        outside = self.null.T @ self.grad_star
        scale = 1.0 + np.linalg.norm(self.grad_star)
        if np.linalg.norm(outside) > tol * scale:
            raise ValueError("x* is not optimal: grad f(x*) has a component of norm %.3e "
                             "outside the range of (I - W)^{1/2}" % np.linalg.norm(outside))
        self.v_star = -self.sqrt_pinv @ self.grad_star

    def v_from_q(self, q):
        return self.sqrt_pinv @ q

    def parts(self, x, q):
        dv = self.v_from_q(q) - self.v_star
        dx = x - self.x_star
        return float(np.sum(dv * dv)), float(np.sum(dx * dx))

    def value(self, x, q):
        """``||v - v*||^2 + alpha eps ||x - x*||^2``."""
        dv2, dx2 = self.parts(x, q)
        return dv2 + self.alpha * self.eps * dx2


def lyapunov(state, problem, network, alpha, eps, x_star=None):
    y_star = None if x_star is None else np.asarray(x_star).reshape(-1, problem.n)[0]
    ref = LyapunovReference(problem, network, alpha, eps, y_star=y_star)
    return ref.value(state.x, state.q)


class LyapunovMonitor:
    """Run monitor recording ``||u^k - u*||_G^2`` for k = 0, 1, ..."""

    def __init__(self, reference):
        self.reference = reference
        self.values = []

    def __call__(self, info):
        if not self.values:
            self.values.append(self.reference.value(info.x, info.q))
        val = self.reference.value(info.x_next, info.q_next)
        self.values.append(val)
        return {"lyapunov": val}

    def ratios(self):
        v = np.asarray(self.values)
        return v[1:] / v[:-1]


# -- inequality monitor ---------------------------------------------------------

CHECKS = ("taylor_remainder", "forcing", "error_bound", "error_bound_squared", "descent")


@dataclass
class InequalityRecord:
    k: int
    check: str
    lhs: float
    rhs: float
    scale: float

    @property
    def margin(self):
        return self.rhs - self.lhs


@dataclass
class InequalityReport:
    records: list
    rtol: float = 1e-9
    violations: list = field(default_factory=list)

    def __post_init__(self):
        self.violations = [r for r in self.records
                           if r.margin < -self.rtol * max(r.scale, np.finfo(float).tiny)]

    @property
    def ok(self):
        return not self.violations

    def min_margins(self):
        out = {}
        for r in self.records:
            out[r.check] = min(out.get(r.check, math.inf), r.margin)
        return out

    def counts(self):
        out = {}
        for r in self.records:
            out[r.check] = out.get(r.check, 0) + 1
        return out


class InequalityMonitor:
    """
    Records, at every outer step, both sides of the descent inequalities.

    * ``taylor_remainder``: ``||grad f(x) - grad f(z) + hess f(x)(z - x)||
      <= min(2M, L/2 ||x - z||) ||x - z||`` at ``(x^k, x^{k+1})``;
    * ``forcing``: ``||r^k|| <= eta ||g^k||`` (forcing policies only);
    * ``error_bound``: ``||e^k|| <= min(2M, L/2 ||d||) ||d|| + eta_k ||g^k||``
      where ``eta_k`` is the forcing term, or ``||r^k|| / ||g^k||`` for
      fixed inner counts;
    * ``error_bound_squared``: ``||e^k||^2 <= 8M^2 ||d||^2
      + 4 eta_k^2 (M + 2a)^2 ||x^k - x*||^2 + 8 eta_k^2 ||v^k - v*||^2``;
    * ``descent``: the one-step Lyapunov inequality with parameter `zeta`.

    The last two need a `LyapunovReference`.
    """

    def __init__(self, problem, reference=None, zeta=None):
        self.problem = problem
        self.reference = reference
        m, M = problem.m, problem.M
        self.zeta = (m + M) / (m * M) if zeta is None else float(zeta)
        self.records = []

    def _add(self, k, name, lhs, rhs, *terms):
        scale = sum(abs(t) for t in terms) + abs(lhs) + abs(rhs)
        self.records.append(InequalityRecord(k, name, float(lhs), float(rhs), float(scale)))

    def __call__(self, info):
        p = self.problem
        M, L = p.M, p.L
        alpha, eps = info.config.alpha, info.config.eps
        norm = np.linalg.norm
        d = info.d
        nd = norm(d)
        grad_next = p.gradients(info.x_next)
        hd = block_apply(info.hessians, d)
        taylor = info.grad - grad_next + hd
        # magnitudes that cancel in the computed differences; rounding is
        # relative to these, not to the (possibly tiny) results
        cancel = norm(info.grad) + norm(grad_next) + norm(hd) + norm(info.g)
        factor = min(2.0 * M, 0.5 * L * nd) * nd
        self._add(info.k, "taylor_remainder", norm(taylor), factor, cancel)

        ng = norm(info.g)
        nr = norm(info.r)
        if info.eta is not None:
            resnorm = info.config.residual_norm
            if resnorm == "inf":
                lhs, gg = np.max(np.abs(info.r)), np.max(np.abs(info.g))
            else:
                lhs, gg = nr, ng
            self._add(info.k, "forcing", lhs, info.eta * gg, ng)
            eta_k = info.eta if resnorm == "2" else (nr / ng if ng > 0 else 0.0)
        else:
            eta_k = nr / ng if ng > 0 else 0.0

        e = taylor - info.r
        ne = norm(e)
        self._add(info.k, "error_bound", ne, factor + eta_k * ng, cancel)

        ref = self.reference
        if ref is None:
            return None
        v_now = ref.v_from_q(info.q)
        v_next = ref.v_from_q(info.q_next)
        dv_now, dv_next = norm(v_now - ref.v_star), norm(v_next - ref.v_star)
        dx_now = norm(info.x - ref.x_star)
        dx = info.x_next - ref.x_star
        ndx = norm(dx)
        nvs, nxs, ngs = norm(ref.v_star), norm(ref.x_star), norm(ref.grad_star)

        rhs_sq = 8.0 * M * M * nd * nd + 4.0 * eta_k ** 2 * (M + 2.0 * alpha) ** 2 * dx_now ** 2 \
            + 8.0 * eta_k ** 2 * dv_now ** 2
        self._add(info.k, "error_bound_squared", ne * ne, rhs_sq, ne * cancel)

        m, zeta = p.m, self.zeta
        ae = alpha * eps
        u_now = dv_now ** 2 + ae * dx_now ** 2
        u_next = dv_next ** 2 + ae * ndx ** 2
        dgrad = grad_next - ref.grad_star
        ndg = norm(dgrad)
        lap = float(np.sum(dx * (dx - ref.W @ dx)))
        c2 = 2.0 * alpha * m * M / (m + M) - alpha / zeta
        t1 = 2.0 * alpha / (m + M) * ndg ** 2
        t2 = c2 * ndx ** 2 + alpha * alpha * lap
        t3 = alpha * eps * nd * nd
        t4 = alpha * zeta * ne * ne
        rounding = ((dv_now + dv_next) * (nvs + norm(v_now) + norm(v_next))
                    + (ae + abs(c2) + 2.0 * alpha * alpha) * (dx_now + ndx)
                    * (nxs + norm(info.x) + norm(info.x_next))
                    + 2.0 * alpha / (m + M) * ndg * (ngs + norm(grad_next))
                    + t4 / max(ne, np.finfo(float).tiny) * cancel)
        self._add(info.k, "descent", u_next - u_now, -t1 - t2 - t3 + t4,
                  u_next, u_now, t1, t2, t3, t4, rounding)
        return None

    def report(self, rtol=1e-9):
        return InequalityReport(list(self.records), rtol)


def check_inequalities(monitor, rtol=1e-9):
    """Summarize an `InequalityMonitor` (or its records) into a report."""
    records = monitor.records if hasattr(monitor, "records") else list(monitor)
    return InequalityReport(records, rtol)


# -- rate report ------------------------------------------------------------------

@dataclass
class RateReport:
    gamma_interval: tuple
    practical_gamma: float
    sigma_T: float = None
    sigma_converged: bool = None
    block_norm_T: float = None
    bound_indo: float = None
    bound_esom: float = None
    bound_indo_valid: bool = None
    ell_bound: int = None
    theorem_constants: dict = None

    def to_dict(self):
        out = asdict(self)
        out["gamma_interval"] = list(self.gamma_interval)
        return out


def rate_report(problem, network, config, x_point=None, eta=None, power_max_iter=100000):
    """
    Closed-form and measured rate quantities for one run configuration.

    The inner matrix is measured at `x_point` (zero by default). Splitting
    bounds are only reported for equal diagonal weights; `ell_bound` only
    for INDO with a given `eta`.
    """
    m, M = problem.m, problem.M
    a, e = config.alpha, config.eps
    w_d, w_m = network.w_d, network.w_m
    gi = gamma_interval(m, M, a, e, w_d, w_m)
    pg = practical_gamma(m, M, a, e, w_d)
    rep = RateReport(gi, pg)
    if x_point is None:
        x_point = np.zeros((problem.N, problem.n))
    hess = problem.hessians(x_point)
    if config.variant == "indo":
        gamma = pg if config.gamma is None else config.gamma
        sp = JorSplitting(hess, network.W, a, e, gamma)
    else:
        sp = EsomSplitting(hess, network.W, a, e)
    est = spectral_radius_T(sp, max_iter=power_max_iter) if power_max_iter else None
    if est is not None:
        rep.sigma_T, rep.sigma_converged = est.value, est.converged
    if problem.N * problem.n <= DENSE_LIMIT:
        rep.block_norm_T = block_norm(assemble_T(sp), problem.n)
    if np.ptp(network.weight_diag) == 0.0:
        b = splitting_bounds(m, M, a, e, w_d)
        rep.bound_indo, rep.bound_esom, rep.bound_indo_valid = b.indo, b.esom, b.indo_valid
    if eta is not None and config.variant == "indo" and rep.sigma_T is not None \
            and rep.sigma_T < 1.0 and 0.0 < eta < 1.0:
        rep.ell_bound = ell_bound(eta, m, M, a, e, w_d, w_m, rep.sigma_T)
    tc = best_theorem_constants(m, M, a, e, network.lambda2)
    rep.theorem_constants = asdict(tc)
    return rep
