"""
Communication graphs and consensus weight matrices.

A `Network` bundles the undirected topology, the symmetric doubly
stochastic weight matrix ``W`` and the spectral summaries of ``I - W``
that the solvers and the rate analysis need.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components


ZERO_EIG_TOL = 1e-10
MAX_RGG_ATTEMPTS = 1000


class GraphGenerationError(RuntimeError):
    """No connected sample was found within the retry budget."""

    def __init__(self, message, last_seed):
        super().__init__(message)
        self.last_seed = last_seed


class DisconnectedGraphError(ValueError):
    pass


@dataclass(frozen=True)
class Network:
    """
    Undirected network with consensus weights.

    Attributes
    ----------
    adjacency : ndarray of bool, shape (N, N)
        Symmetric neighbor relation without self-loops.
    W : ndarray, shape (N, N)
        Consensus weight matrix.
    lambda2, lambda_max : float
        Smallest nonzero and largest eigenvalue of ``I - W``.
    w_d, w_m : float
        Largest and smallest diagonal entry of ``W``.
    points : ndarray or None
        Node coordinates when the graph is geometric.
    seed : int or None
        Seed of the accepted sample when randomly generated.
    """

    adjacency: np.ndarray
    W: np.ndarray
    lambda2: float
    lambda_max: float
    w_d: float
    w_m: float
    points: np.ndarray = field(default=None, repr=False)
    seed: int = None

    @property
    def N(self):
        return self.W.shape[0]

    @property
    def degrees(self):
        return self.adjacency.sum(axis=1)

    @property
    def neighbors(self):
        return [np.flatnonzero(row) for row in self.adjacency]

    @property
    def weight_diag(self):
        return np.diag(self.W).copy()

    def laplacian_apply(self, X):
        """Return ``(I - W) X`` for node-stacked rows ``X`` of shape (N, ...)."""
        return X - np.tensordot(self.W, X, axes=1)

    def edges(self):
        i, j = np.nonzero(np.triu(self.adjacency, k=1))
        return list(zip(i.tolist(), j.tolist()))


def metropolis_weights(adjacency):
    """
    Metropolis weights ``w_ij = 1 / (1 + max(deg_i, deg_j))`` on edges.

    The diagonal absorbs the remainder so that each row sums to one. The
    matrix is filled symmetrically, so ``W == W.T`` holds exactly.
    """
    A = np.asarray(adjacency, dtype=bool)
    deg = A.sum(axis=1)
    N = A.shape[0]
    W = np.zeros((N, N))
    for i, j in zip(*np.nonzero(np.triu(A, k=1))):
        w = 1.0 / (1.0 + max(deg[i], deg[j]))
        W[i, j] = w
        W[j, i] = w
    for i in range(N):
        W[i, i] = 1.0 - (W[i].sum() - W[i, i])
    return W


def spectral_summary(W):
    """
    Spectral quantities of ``I - W``.

    Returns
    -------
    lambda2 : float
        Smallest eigenvalue of ``I - W`` above ``ZERO_EIG_TOL``.
    lambda_max : float
        Largest eigenvalue of ``I - W``.
    w_d, w_m : float
        Max and min of the diagonal of `W`.
    """
    W = np.asarray(W, dtype=float)
    N = W.shape[0]
    if N < 2:
        raise ValueError("a network needs at least 2 nodes, got N=%d" % N)
    eig = np.linalg.eigvalsh(np.eye(N) - W)
    zeros = int(np.sum(eig < ZERO_EIG_TOL))
    if zeros != 1:
        raise DisconnectedGraphError(
            "I - W has %d eigenvalues below %g; the graph is not connected"
            % (zeros, ZERO_EIG_TOL))
    diag = np.diag(W)
    return float(eig[zeros]), float(eig[-1]), float(diag.max()), float(diag.min())


def is_connected(adjacency):
    ncomp, _ = connected_components(np.asarray(adjacency, dtype=bool), directed=False)
    return ncomp == 1


def network_from_adjacency(adjacency, W=None, points=None, seed=None):
    """Build a `Network`, using Metropolis weights unless `W` is supplied."""
    A = np.array(adjacency, dtype=bool)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("adjacency must be square")
    if np.any(A != A.T):
        raise ValueError("adjacency must be symmetric")
    np.fill_diagonal(A, False)
    if W is None:
        W = metropolis_weights(A)
    W = np.array(W, dtype=float)
    lambda2, lambda_max, w_d, w_m = spectral_summary(W)
    A.setflags(write=False)
    W.setflags(write=False)
    return Network(A, W, lambda2, lambda_max, w_d, w_m, points=points, seed=seed)


def geometric_adjacency(points, radius):
    """Nodes are adjacent iff their Euclidean distance is strictly below `radius`."""
    P = np.asarray(points, dtype=float)
    dist = np.linalg.norm(P[:, None, :] - P[None, :, :], axis=-1)
    A = dist < radius
    np.fill_diagonal(A, False)
    return A


def rgg_radius(N):
    return np.sqrt(np.log(N) / N)


def rgg_from_points(points, radius=None):
    P = np.asarray(points, dtype=float)
    if radius is None:
        radius = rgg_radius(P.shape[0])
    A = geometric_adjacency(P, radius)
    if not is_connected(A):
        raise DisconnectedGraphError("geometric graph on the given points is not connected")
    return network_from_adjacency(A, points=P)


def generate_rgg(N, seed, max_attempts=MAX_RGG_ATTEMPTS):
    """
    Connected random geometric graph on the unit square.

    Points are drawn uniformly from ``[0, 1]^2`` and joined when closer than
    ``sqrt(log(N) / N)``. Disconnected samples are discarded and the seed is
    advanced by one until a connected sample appears.

    Parameters
    ----------
    N : int
        Number of nodes, at least 2.
    seed : int
        Seed of the first attempt.
    max_attempts : int, optional
        Retry budget before `GraphGenerationError` is raised.
    """
    if N < 2:
        raise ValueError("a network needs at least 2 nodes, got N=%d" % N)
    radius = rgg_radius(N)
    s = seed
    for attempt in range(max_attempts):
        s = seed + attempt
        points = np.random.default_rng(s).uniform(0.0, 1.0, size=(N, 2))
        A = geometric_adjacency(points, radius)
        if is_connected(A):
            return network_from_adjacency(A, points=points, seed=s)
    raise GraphGenerationError(
        "no connected geometric graph with N=%d after %d attempts (last seed %d)"
        % (N, max_attempts, s), last_seed=s)


@dataclass
class WeightReport:
    """Outcome of `validate_weights`: check name -> (passed, max violation)."""

    checks: dict

    @property
    def passed(self):
        return all(ok for ok, _ in self.checks.values())

    def failures(self):
        return [name for name, (ok, _) in self.checks.items() if not ok]


def validate_weights(W, adjacency=None, tol=1e-12):
    """
    Check a weight matrix against the consensus assumptions.

    Checks symmetry, unit row and column sums, the sparsity pattern (positive
    exactly on neighbors and the diagonal, when `adjacency` is given, else
    plain nonnegativity) and connectivity (a simple zero eigenvalue of
    ``I - W``). Never raises; each check reports its largest violation.
    """
    W = np.asarray(W, dtype=float)
    N = W.shape[0]
    checks = {}

    asym = float(np.max(np.abs(W - W.T))) if N else 0.0
    checks["symmetric"] = (asym == 0.0, asym)

    row = float(np.max(np.abs(W.sum(axis=1) - 1.0)))
    checks["row_sums"] = (row <= tol, row)
    col = float(np.max(np.abs(W.sum(axis=0) - 1.0)))
    checks["column_sums"] = (col <= tol, col)

    if adjacency is not None:
        mask = np.asarray(adjacency, dtype=bool) | np.eye(N, dtype=bool)
        bad_zero = float(np.max(np.where(mask, np.maximum(-W, 0.0) + (W == 0), 0.0)))
        bad_pos = float(np.max(np.where(mask, 0.0, np.abs(W))))
        viol = max(bad_zero, bad_pos)
        checks["sparsity"] = (viol == 0.0, viol)
    else:
        neg = float(max(0.0, -W.min()))
        checks["nonnegative"] = (neg == 0.0, neg)

    sym = 0.5 * (W + W.T)
    eig = np.linalg.eigvalsh(np.eye(N) - sym)
    zeros = int(np.sum(np.abs(eig) < ZERO_EIG_TOL))
    checks["connected"] = (zeros == 1, float(abs(zeros - 1)))
    return WeightReport(checks)


def write_edge_list(network, path):
    """Write ``i j w_ij`` per edge (0-based, ``i < j``) with 17 significant digits."""
    with open(path, "w") as fh:
        for i, j in network.edges():
            fh.write("%d %d %.17g\n" % (i, j, network.W[i, j]))


def read_edge_list(path, N):
    """Inverse of `write_edge_list`; the diagonal is rebuilt from row sums."""
    A = np.zeros((N, N), dtype=bool)
    W = np.zeros((N, N))
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            i, j, w = line.split()
            i, j, w = int(i), int(j), float(w)
            A[i, j] = A[j, i] = True
            W[i, j] = W[j, i] = w
    for i in range(N):
        W[i, i] = 1.0 - (W[i].sum() - W[i, i])
    return network_from_adjacency(A, W=W)
