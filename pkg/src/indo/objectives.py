"""
Local objectives, test problems and error measures.

Primal variables are stored node-stacked: ``X[i]`` is node ``i``'s copy
``x_i`` of the decision variable, so ``X`` has shape (N, n). The flat
vector in R^{nN} is ``X.ravel()``.
"""

import numpy as np
from scipy.special import expit

__all__ = [
    "ProblemInstance", "QuadraticProblem", "LogisticProblem",
    "quadratic_generate", "quadratic_solution", "centralized_solution",
    "logistic_from_arrays", "logistic_load", "read_libsvm",
    "error_E", "error_V", "LibsvmError",
]


class ProblemInstance:
    """
    Sum of N local strongly convex costs f_i over R^n.

    Subclasses supply the per-node evaluators; the node-stacked versions
    below loop over nodes unless overridden by a vectorized form.
    """

    kind = None

    def __init__(self, n, N, m, M, L):
        self.n = n
        self.N = N
        self.m = float(m)
        self.M = float(M)
        self.L = float(L)

    def value(self, i, y):
        raise NotImplementedError

    def gradient(self, i, y):
        raise NotImplementedError

    def hessian(self, i, y):
        raise NotImplementedError

    def hessian_diag(self, i, y):
        return np.diag(self.hessian(i, y)).copy()

    def values(self, X):
        return np.array([self.value(i, X[i]) for i in range(self.N)])

    def gradients(self, X):
        return np.stack([self.gradient(i, X[i]) for i in range(self.N)])

    def hessians(self, X):
        return np.stack([self.hessian(i, X[i]) for i in range(self.N)])

    def hessian_diags(self, X):
        return np.stack([self.hessian_diag(i, X[i]) for i in range(self.N)])

    def aggregate_value(self, y):
        return float(sum(self.value(i, y) for i in range(self.N)))

    def aggregate_gradient(self, y):
        return sum(self.gradient(i, y) for i in range(self.N))

    def aggregate_hessian(self, y):
        return sum(self.hessian(i, y) for i in range(self.N))

    @property
    def constant_hessian(self):
        return False


class QuadraticProblem(ProblemInstance):
    """``f_i(y) = 0.5 (y - b_i)^T B_i (y - b_i)`` with SPD blocks ``B_i``."""

    kind = "quadratic"

    def __init__(self, B, b):
        B = np.asarray(B, dtype=float)
        b = np.asarray(b, dtype=float)
        N, n = b.shape
        if B.shape != (N, n, n):
            raise ValueError("B must have shape (N, n, n) = (%d, %d, %d)" % (N, n, n))
        eig = np.linalg.eigvalsh(B)
        if eig.min() <= 0:
            raise ValueError("quadratic blocks must be positive definite")
        super().__init__(n, N, eig.min(), eig.max(), 0.0)
        self.B = B
        self.b = b
        self.local_m = eig.min(axis=1)
        self.local_M = eig.max(axis=1)

    def value(self, i, y):
        r = y - self.b[i]
        return 0.5 * float(r @ self.B[i] @ r)

    def gradient(self, i, y):
        return self.B[i] @ (y - self.b[i])

    def hessian(self, i, y):
        return self.B[i].copy()

    def hessian_diag(self, i, y):
        return np.diagonal(self.B[i]).copy()

    def values(self, X):
        R = X - self.b
        return 0.5 * np.einsum("ij,ijk,ik->i", R, self.B, R)

    def gradients(self, X):
        return np.matmul(self.B, (X - self.b)[:, :, None])[:, :, 0]

    def hessians(self, X):
        return self.B

    def hessian_diags(self, X):
        return np.diagonal(self.B, axis1=1, axis2=2).copy()

    @property
    def constant_hessian(self):
        return True


def quadratic_generate(n, N, seed):
    """
    Random quadratic test problem.

    For each node: ``b_i ~ U[1, 31]^n``, eigenvalues ``S_i ~ U[1, 101]`` and
    eigenvectors ``P_i`` of the symmetric part of a standard normal matrix,
    giving ``B_i = P_i diag(S_i) P_i^T``.
    """
    if n < 1 or N < 1:
        raise ValueError("n and N must be positive")
    rng = np.random.default_rng(seed)
    B = np.empty((N, n, n))
    b = np.empty((N, n))
    for i in range(N):
        b[i] = rng.uniform(1.0, 31.0, size=n)
        s = rng.uniform(1.0, 101.0, size=n)
        C = rng.standard_normal((n, n))
        _, P = np.linalg.eigh(0.5 * (C + C.T))
        Bi = (P * s) @ P.T
        B[i] = 0.5 * (Bi + Bi.T)
    return QuadraticProblem(B, b)


def quadratic_solution(problem):
    """Exact minimizer of ``sum_i f_i``: solves ``(sum B_i) y = sum B_i b_i``."""
    if problem.kind != "quadratic":
        raise ValueError("quadratic_solution needs a quadratic problem")
    A = problem.B.sum(axis=0)
    rhs = np.einsum("ijk,ik->j", problem.B, problem.b)
    try:
        y = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("aggregate quadratic is singular") from exc
    res = np.linalg.norm(A @ y - rhs)
    if res > 1e-8 * max(np.linalg.norm(rhs), np.finfo(float).tiny):
        raise np.linalg.LinAlgError("aggregate solve residual %.3e too large" % res)
    return y


def centralized_solution(problem, tol=1e-12, max_iter=100):
    """
    Minimizer of the aggregate cost.

    Closed form for quadratics; otherwise a damped centralized Newton
    method (backtracking on the aggregate value) run to gradient norm `tol`
    relative to the starting gradient.
    """
    if problem.kind == "quadratic":
        return quadratic_solution(problem)
    y = np.zeros(problem.n)
    g0 = np.linalg.norm(problem.aggregate_gradient(y))
    for _ in range(max_iter):
        g = problem.aggregate_gradient(y)
        if np.linalg.norm(g) <= tol * max(g0, 1.0):
            return y
        step = -np.linalg.solve(problem.aggregate_hessian(y), g)
        f0 = problem.aggregate_value(y)
        t = 1.0
        while problem.aggregate_value(y + t * step) > f0 + 1e-4 * t * (g @ step) and t > 1e-10:
            t *= 0.5
        y = y + t * step
    raise RuntimeError("centralized Newton did not reach tolerance %g" % tol)


class LogisticProblem(ProblemInstance):
    """
    Regularized logistic regression split over nodes.

    ``f_i(y) = mean_{j in J_i} log(1 + exp(-z_j p_j^T y)) + (reg/2) ||y||^2``.

    Attributes
    ----------
    features : list of ndarray
        Per-node sample matrices of shape (|J_i|, n), already rescaled.
    labels : list of ndarray
        Per-node labels in {-1, +1}.
    index_sets : list of ndarray
        Original sample indices owned by each node.
    scale : float
        Multiplier that was applied to the raw features.
    """

    kind = "logistic"

    def __init__(self, features, labels, reg, index_sets=None, scale=1.0):
        self.features = [np.asarray(P, dtype=float) for P in features]
        self.labels = [np.asarray(z, dtype=float) for z in labels]
        N = len(self.features)
        n = self.features[0].shape[1]
        for z in self.labels:
            if not np.all(np.abs(z) == 1.0):
                raise ValueError("logistic labels must be exactly -1 or +1")
        if reg <= 0:
            raise ValueError("regularization must be positive")
        self.reg = float(reg)
        self.index_sets = index_sets
        self.scale = float(scale)
        self.curvature = np.array([_logistic_curvature(P) for P in self.features])
        cubes = [np.mean(np.linalg.norm(P, axis=1) ** 3) if len(P) else 0.0
                 for P in self.features]
        L = max(cubes) / (6.0 * np.sqrt(3.0))
        super().__init__(n, N, reg, reg + self.curvature.max(), L)

    @property
    def sizes(self):
        return np.array([len(P) for P in self.features])

    def _margins(self, i, y):
        return self.labels[i] * (self.features[i] @ y)

    def value(self, i, y):
        t = self._margins(i, y)
        loss = np.mean(np.logaddexp(0.0, -t)) if len(t) else 0.0
        return float(loss + 0.5 * self.reg * (y @ y))

    def gradient(self, i, y):
        P, z = self.features[i], self.labels[i]
        g = self.reg * y
        if len(z):
            s = expit(-self._margins(i, y))
            g = g - P.T @ (z * s) / len(z)
        return g

    def hessian(self, i, y):
        P = self.features[i]
        H = self.reg * np.eye(self.n)
        if len(P):
            s = expit(self._margins(i, y))
            H += (P.T * (s * (1.0 - s))) @ P / len(P)
        return H

    def hessian_diag(self, i, y):
        P = self.features[i]
        h = np.full(self.n, self.reg)
        if len(P):
            s = expit(self._margins(i, y))
            h += (s * (1.0 - s)) @ (P * P) / len(P)
        return h


def _logistic_curvature(P):
    """Upper bound ``lambda_max(P^T P) / (4 |J|)`` on the loss Hessian."""
    if len(P) == 0:
        return 0.0
    return float(np.linalg.eigvalsh(P.T @ P / len(P))[-1] / 4.0)


def logistic_from_arrays(X, y, N, reg, seed=0, rescale=True):
    """
    Shuffle samples, split them into N contiguous blocks and build f_i.

    With `rescale`, features are multiplied by one global scalar chosen so
    that the largest per-node loss-Hessian bound equals 1, which makes the
    global Lipschitz constant ``M = 1 + reg``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    T = X.shape[0]
    if N < 1:
        raise ValueError("N must be positive")
    perm = np.random.default_rng(seed).permutation(T)
    blocks = np.array_split(perm, N)
    scale = 1.0
    if rescale:
        curv = max(_logistic_curvature(X[J]) for J in blocks)
        if curv > 0:
            scale = 1.0 / np.sqrt(curv)
    features = [scale * X[J] for J in blocks]
    labels = [y[J] for J in blocks]
    return LogisticProblem(features, labels, reg, index_sets=blocks, scale=scale)


class LibsvmError(ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = "line %d: %s" % (line, message)
        super().__init__(message)
        self.line = line


def read_libsvm(path, n_features=None):
    """
    Parse a LIBSVM text file into a dense matrix and {-1, +1} labels.

    Records are ``label idx:val ...`` with 1-based feature indices. The two
    distinct labels are mapped in sorted order to -1 and +1.
    """
    rows, raw_labels, width = [], [], 0
    seen = set()
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            try:
                label = float(tokens[0])
            except ValueError:
                raise LibsvmError("bad label %r" % tokens[0], lineno) from None
            entries = {}
            for tok in tokens[1:]:
                idx, sep, val = tok.partition(":")
                try:
                    idx, val = int(idx), float(val)
                except ValueError:
                    raise LibsvmError("bad feature %r" % tok, lineno) from None
                if not sep or idx < 1:
                    raise LibsvmError("bad feature %r" % tok, lineno)
                entries[idx - 1] = val
                width = max(width, idx)
            if label not in seen:
                if len(seen) == 2:
                    raise LibsvmError("more than two classes (label %g)" % label, lineno)
                seen.add(label)
            rows.append(entries)
            raw_labels.append(label)
    if not rows:
        raise LibsvmError("no samples in %s" % path)
    classes = sorted(seen)
    if len(classes) != 2:
        raise LibsvmError("expected two classes, found %d" % len(classes))
    n = width if n_features is None else n_features
    if width > n:
        raise LibsvmError("feature index %d exceeds n_features=%d" % (width, n))
    X = np.zeros((len(rows), n))
    for r, entries in enumerate(rows):
        for c, v in entries.items():
            X[r, c] = v
    y = np.where(np.asarray(raw_labels) == classes[0], -1.0, 1.0)
    return X, y


def logistic_load(path, N, m, seed=0, n_features=None):
    """Load a LIBSVM dataset as a distributed logistic problem with ``M = 1 + m``."""
    X, y = read_libsvm(path, n_features=n_features)
    return logistic_from_arrays(X, y, N, m, seed=seed)


def error_E(X, y_star):
    """Mean relative distance ``(1/N) sum_i ||x_i - y*|| / ||y*||``."""
    y_star = np.asarray(y_star, dtype=float)
    ref = np.linalg.norm(y_star)
    if ref == 0:
        raise ValueError("relative error undefined for y* = 0")
    X = np.asarray(X, dtype=float).reshape(-1, y_star.size)
    return float(np.mean(np.linalg.norm(X - y_star, axis=1)) / ref)


def error_V(X, problem):
    """Mean over nodes of the aggregate cost at each node's estimate."""
    X = np.asarray(X, dtype=float).reshape(problem.N, problem.n)
    return float(np.mean([problem.aggregate_value(x) for x in X]))
