"""Synthetic Gaussian graphical models: precision generators and sampling."""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

#: Default magnitude below which an estimated precision entry counts as zero.
EDGE_TOL = 1e-6

#: Ridge added to the diagonal of the random sparse generator.
SPARSE_RIDGE = 0.1

#: Largest dimension for which a dense factorization of the precision is attempted.
MAX_DENSE_P = 5000


@dataclass(frozen=True)
class EdgeSet:
    """Undirected edges over ``p`` nodes, stored as pairs ``(i, j)`` with ``i < j``."""

    p: int
    edges: frozenset

    def __post_init__(self):
        canon = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop ({i}, {j}) is not an edge")
            if not (0 <= i < self.p and 0 <= j < self.p):
                raise ValueError(f"edge ({i}, {j}) out of range for p={self.p}")
            canon.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(canon))

    def __len__(self):
        return len(self.edges)

    def __contains__(self, pair):
        i, j = pair
        return (min(i, j), max(i, j)) in self.edges

    def sorted(self):
        return sorted(self.edges)

    def to_adjacency(self):
        A = np.zeros((self.p, self.p), dtype=bool)
        for i, j in self.edges:
            A[i, j] = A[j, i] = True
        return A


def check_precision(theta, name="theta"):
    """Validate a precision matrix: square, exactly symmetric, positive definite.

    Returns the matrix as a float array.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 2 or theta.shape[0] != theta.shape[1]:
        raise ValueError(f"{name} must be square, got shape {theta.shape}")
    if not np.array_equal(theta, theta.T):
        raise ValueError(f"{name} must be symmetric")
    min_eig = np.linalg.eigvalsh(theta)[0]
    if not min_eig > 0:
        raise ValueError(f"{name} is not positive definite (smallest eigenvalue {min_eig:.3g})")
    return theta


def chain_precision(p):
    """Tridiagonal chain precision: unit diagonal, 0.5 on the first off-diagonals."""
    if p < 2:
        raise ValueError(f"chain needs p >= 2, got {p}")
    theta = np.eye(p)
    k = np.arange(1, p)
    theta[k, k - 1] = 0.5
    theta[k - 1, k] = 0.5
    return check_precision(theta)


def sparse_random_precision(p, sparsity, seed, value=0.1, ridge=SPARSE_RIDGE):
    """Random sparse precision with uniformly placed off-diagonal entries.

    Parameters
    ----------
    p : int
        Dimension.
    sparsity : float
        Requested fraction of zero off-diagonal entries, in ``[0, 1]``. The
        number of edges is rounded to the nearest integer.
    seed : int
        Seed for the support draw.
    value : float
        Value of every nonzero off-diagonal entry.
    ridge : float
        Added to each diagonal entry on top of the row sum of off-diagonal
        magnitudes so the matrix is strictly diagonally dominant.
    """
    if p < 2:
        raise ValueError(f"need p >= 2, got {p}")
    if not 0.0 <= sparsity <= 1.0:
        raise ValueError(f"sparsity must lie in [0, 1], got {sparsity}")
    if ridge <= 0:
        raise ValueError("ridge must be positive")
    iu, ju = np.triu_indices(p, k=1)
    n_slots = iu.size
    n_edges = int(round((1.0 - sparsity) * n_slots))
    rng = np.random.default_rng(seed)
    chosen = rng.choice(n_slots, size=n_edges, replace=False)
    theta = np.zeros((p, p))
    theta[iu[chosen], ju[chosen]] = value
    theta[ju[chosen], iu[chosen]] = value
    theta[np.diag_indices(p)] = np.abs(theta).sum(axis=1) + ridge
    return check_precision(theta)


def sample_gaussian(theta, n, seed):
    """Draw ``n`` i.i.d. rows from ``N(0, inv(theta))``.

    Uses the Cholesky factor ``L`` of ``theta``: if ``z ~ N(0, I)`` then
    ``L^{-T} z`` has covariance ``inv(theta)``.
    """
    theta = np.asarray(theta, dtype=float)
    p = theta.shape[0]
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    if p > MAX_DENSE_P:
        raise ValueError(f"p={p} exceeds the dense sampling limit {MAX_DENSE_P}")
    try:
        L = linalg.cholesky(theta, lower=True)
    except linalg.LinAlgError as exc:
        raise ValueError("theta is not positive definite; cannot factorize") from exc
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((n, p))
    # rows x = L^{-T} z  <=>  X^T = L^{-T} Z^T
    return linalg.solve_triangular(L, Z.T, lower=True, trans="T").T


def adjacency_of(theta, tol=EDGE_TOL):
    """Edges ``(i, j)``, ``i < j``, with ``|theta_ij| > tol``."""
    if tol < 0:
        raise ValueError("tol must be non-negative")
    theta = np.asarray(theta, dtype=float)
    iu, ju = np.triu_indices(theta.shape[0], k=1)
    mask = np.abs(theta[iu, ju]) > tol
    return EdgeSet(theta.shape[0], frozenset(zip(iu[mask].tolist(), ju[mask].tolist())))


def edge_count(theta, tol=EDGE_TOL):
    theta = np.asarray(theta)
    iu, ju = np.triu_indices(theta.shape[0], k=1)
    return int(np.count_nonzero(np.abs(theta[iu, ju]) > tol))


def offdiag_sparsity(theta, tol=0.0):
    """Fraction of off-diagonal entries with ``|theta_ij| <= tol``."""
    theta = np.asarray(theta)
    p = theta.shape[0]
    off = ~np.eye(p, dtype=bool)
    return float(np.mean(np.abs(theta[off]) <= tol))
