import numpy as np
import pytest

from indo.network import generate_rgg
from indo.objectives import logistic_from_arrays, quadratic_generate


def dense_H(hessians, W, alpha, eps):
    """``blockdiag(hessians) + alpha (I - W) kron I + eps I`` assembled with kron."""
    N, n, _ = hessians.shape
    H = np.kron(alpha * (np.eye(N) - W), np.eye(n)) + eps * np.eye(N * n)
    for i in range(N):
        H[i * n:(i + 1) * n, i * n:(i + 1) * n] += hessians[i]
    return H


def reference_pmm(problem, W, alpha, eps, iterations, x0=None):
    """
    Exact PMM on flat vectors: Newton direction by dense factorization,
    then primal and dual updates with the kron-assembled Laplacian.
    """
    N, n = problem.N, problem.n
    Lap = np.kron(np.eye(N) - W, np.eye(n))
    x = np.zeros(N * n) if x0 is None else np.array(x0, dtype=float).ravel()
    q = np.zeros(N * n)
    xs, qs = [], []
    for _ in range(iterations):
        X = x.reshape(N, n)
        grad = np.concatenate([problem.gradient(i, X[i]) for i in range(N)])
        hess = np.stack([problem.hessian(i, X[i]) for i in range(N)])
        g = grad + q + alpha * Lap @ x
        d = -np.linalg.solve(dense_H(hess, W, alpha, eps), g)
        x = x + d
        q = q + alpha * Lap @ x
        xs.append(x.reshape(N, n).copy())
        qs.append(q.reshape(N, n).copy())
    return xs, qs


def random_logistic(N, n, samples, reg, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((samples, n))
    w = rng.standard_normal(n)
    y = np.where(X @ w + 0.5 * rng.standard_normal(samples) > 0, 1.0, -1.0)
    return logistic_from_arrays(X, y, N, reg, seed=seed)


@pytest.fixture
def small_quadratic():
    net = generate_rgg(5, 3)
    return quadratic_generate(3, 5, 4), net


@pytest.fixture
def small_logistic():
    net = generate_rgg(5, 3)
    return random_logistic(5, 4, 60, 1e-2, 0), net


# -- acceptance summary ---------------------------------------------------------

ACCEPTANCE = {}


class Criterion:
    """One acceptance line; stays FAIL unless the test reaches `passed`."""

    def __init__(self, number, title):
        self.number = number
        self.title = title
        self.ok = False
        self.detail = "did not complete"

    def check(self, ok, detail):
        self.ok = bool(ok)
        self.detail = detail
        assert self.ok, detail


@pytest.fixture
def criterion():
    def make(number, title):
        c = Criterion(number, title)
        ACCEPTANCE[number] = c
        return c
    return make


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        c = ACCEPTANCE[number]
        terminalreporter.write_line("[%s] %2d. %s: %s" % (
            "PASS" if c.ok else "FAIL", number, c.title, c.detail))
