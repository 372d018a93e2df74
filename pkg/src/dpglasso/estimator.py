"""Consumer side: debiased covariance and sparse precision estimation.

Both solvers maximize the penalized log-likelihood

    J(theta; S) = log det theta - tr(S theta) - lam * ||theta||_1

for a (possibly indefinite) covariance surrogate ``S``. The coordinate
descent solver works on the dual (working covariance ``W``) column by
column; the ADMM solver splits off the l1 term.
"""

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .privacy import EncryptedRelease, center, is_centered

logger = logging.getLogger(__name__)


class Kind(str, enum.Enum):
    RAW = "raw"
    ENCRYPTED = "encrypted"
    DEBIASED = "debiased"


class Solver(str, enum.Enum):
    CD = "cd"
    ADMM = "admm"


@dataclass
class CovarianceEstimate:
    entries: np.ndarray
    kind: Kind = Kind.RAW
    indefinite: bool = False

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=float)
        self.kind = Kind(self.kind)
        if not np.allclose(self.entries, self.entries.T, rtol=0, atol=1e-12):
            raise ValueError("covariance estimate must be symmetric")

    @property
    def p(self):
        return self.entries.shape[0]


@dataclass
class LassoConfig:
    lam: float = 0.1
    rho: float = 1.0
    tol: float = 1e-6
    max_outer: int | None = None
    inner_tol: float = 1e-8
    max_inner: int = 1000
    psd_floor: float | None = None
    penalize_diagonal: bool = True
    kkt_tol: float = 1e-4
    adapt_rho: bool = True

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if not (self.tol > 0 and self.inner_tol > 0 and self.kkt_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_outer is not None and self.max_outer < 1:
            raise ValueError("max_outer must be >= 1")
        if self.max_inner < 1:
            raise ValueError("max_inner must be >= 1")


@dataclass
class SolveDiagnostics:
    solver: str
    iterations: int = 0
    objective_trace: list = field(default_factory=list)
    primal_residual: float | None = None
    dual_residual: float | None = None
    kkt_residual: float | None = None
    converged: bool = False
    psd_repaired: bool = False
    returned_iterate: str | None = None

    def to_dict(self):
        return {k: v for k, v in self.__dict__.items() if k != "state"}


def _entries(S):
    if isinstance(S, CovarianceEstimate):
        return S.entries
    return np.asarray(S, dtype=float)


# ---------------------------------------------------------------------------
# covariance construction


def empirical_covariance(X, assume_centered=False):
    """``X^T X / n`` for column-centered ``X``."""
    X = np.asarray(X, dtype=float)
    if not assume_centered and not is_centered(X):
        raise ValueError("empirical_covariance expects column-centered data")
    S = X.T @ X / X.shape[0]
    return 0.5 * (S + S.T)


def encrypted_covariance(release, recenter=True):
    X = release.data
    if recenter:
        X = center(X)
    return CovarianceEstimate(empirical_covariance(X, assume_centered=True), Kind.ENCRYPTED)


def debias(s_tilde, release_or_shift):
    """Subtract the noise variance from the diagonal of an encrypted covariance.

    ``release_or_shift`` is an :class:`EncryptedRelease` (continuous: sigma^2,
    discrete: the exact discrete variance) or a plain number.
    """
    if isinstance(release_or_shift, EncryptedRelease):
        shift = release_or_shift.noise_variance
    else:
        shift = float(release_or_shift)
    S = _entries(s_tilde).copy()
    S[np.diag_indices_from(S)] -= shift
    indefinite = bool(np.linalg.eigvalsh(S)[0] < 0)
    return CovarianceEstimate(S, Kind.DEBIASED, indefinite)


def psd_repair(S, floor=None):
    """Floor the eigenvalues of ``S`` at ``floor`` (default 1e-4 * mean diagonal).

    Returns ``(S_repaired, changed)``; ``S`` is returned untouched when it is
    already positive definite.
    """
    S = _entries(S)
    d, Q = np.linalg.eigh(S)
    if d[0] > 0:
        return S, False
    if floor is None:
        floor = 1e-4 * abs(float(np.mean(np.diag(S))))
        if floor == 0:
            floor = 1e-8
    d = np.maximum(d, floor)
    R = (Q * d) @ Q.T
    return 0.5 * (R + R.T), True


# ---------------------------------------------------------------------------
# objective and optimality


def _penalty_weights(p, lam, penalize_diagonal):
    P = np.full((p, p), float(lam))
    if not penalize_diagonal:
        P[np.diag_indices(p)] = 0.0
    return P


def objective(theta, S, lam, penalize_diagonal=True):
    """``log det theta - tr(S theta) - lam ||theta||_1``."""
    theta = np.asarray(theta, dtype=float)
    try:
        L = np.linalg.cholesky(theta)
    except np.linalg.LinAlgError:
        raise ValueError("theta is not positive definite") from None
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    S = _entries(S)
    P = _penalty_weights(theta.shape[0], lam, penalize_diagonal)
    return float(logdet - np.sum(S * theta) - np.sum(P * np.abs(theta)))


def soft_threshold(x, kappa):
    """``sign(x) * max(|x| - kappa, 0)``, elementwise."""
    if np.any(np.asarray(kappa) < 0):
        raise ValueError("kappa must be non-negative")
    x = np.asarray(x, dtype=float)
    out = np.sign(x) * np.maximum(np.abs(x) - kappa, 0.0)
    return float(out) if out.ndim == 0 else out


def kkt_residual(theta, S, lam, penalize_diagonal=True):
    """Largest violation of the stationarity / subgradient conditions.

    With ``G = inv(theta) - S``: on the support ``|G_ij - lam sign(theta_ij)|``,
    off the support ``max(0, |G_ij| - lam)``.
    """
    theta = np.asarray(theta, dtype=float)
    G = np.linalg.inv(theta) - _entries(S)
    P = _penalty_weights(theta.shape[0], lam, penalize_diagonal)
    on = theta != 0
    res = np.where(on, np.abs(G - P * np.sign(theta)), np.maximum(0.0, np.abs(G) - P))
    return float(res.max())


# ---------------------------------------------------------------------------
# coordinate descent


def lasso_subproblem(W11, s12, lam, cfg=None, beta0=None):
    """Solve ``min_b 0.5 b' W11 b - s12' b + lam ||b||_1`` by cyclic coordinate descent.

    This is the same minimizer as the square-root least-squares form
    ``0.5 ||W11^{1/2} b - W11^{-1/2} s12||^2 + lam ||b||_1``; no matrix square
    root is formed.
    """
    cfg = cfg or LassoConfig(lam=lam)
    W11 = np.ascontiguousarray(W11, dtype=float)
    s12 = np.ascontiguousarray(s12, dtype=float)
    if np.linalg.eigvalsh(W11)[0] <= 0:
        raise ValueError("W11 must be positive definite")
    beta = np.zeros_like(s12) if beta0 is None else np.array(beta0, dtype=float)
    _kernels.lasso_cd(W11, s12, lam, beta, cfg.inner_tol, cfg.max_inner)
    return beta


def _theta_from_dual(W, B):
    """Rebuild the precision from the working covariance and column coefficients."""
    p = W.shape[0]
    theta = np.empty((p, p))
    for j in range(p):
        beta = B[:, j]
        t22 = 1.0 / (W[j, j] - W[:, j] @ beta)
        theta[:, j] = -beta * t22
        theta[j, j] = t22
    return 0.5 * (theta + theta.T)


@dataclass
class CDState:
    """Warm-start state of the coordinate descent solver."""

    W: np.ndarray
    B: np.ndarray


def glasso_cd(s_hat, cfg, warm_start=None):
    """Graphical lasso by block coordinate descent on the working covariance.

    ``W`` starts at ``S + lam I`` (its diagonal then stays fixed); each column
    solves a lasso in the remaining block and updates the off-diagonal part of
    ``W``. Sweeps stop when the largest change in ``W`` drops below
    ``tol * mean |off-diagonal S|`` and the KKT residual is at most ``kkt_tol``.

    Returns ``(theta, diagnostics)``; the final :class:`CDState` is attached
    to the diagnostics as ``diag.state`` for warm starts along a path.
    """
    S = np.ascontiguousarray(_entries(s_hat), dtype=float)
    p = S.shape[0]
    if p < 2:
        raise ValueError("need p >= 2")
    if not np.allclose(S, S.T, rtol=0, atol=1e-10):
        raise ValueError("s_hat must be symmetric")
    max_sweeps = cfg.max_outer or 100
    diag = SolveDiagnostics(solver=Solver.CD.value)

    S, diag.psd_repaired = psd_repair(S, cfg.psd_floor)
    if diag.psd_repaired:
        logger.info("covariance surrogate is indefinite; eigenvalues floored before coordinate descent")
    S = np.ascontiguousarray(S)
    diag_w = np.diag(S) + (cfg.lam if cfg.penalize_diagonal else 0.0)
    if warm_start is not None:
        W = np.array(warm_start.W, dtype=float)
        B = np.array(warm_start.B, dtype=float)
        W[np.diag_indices(p)] = diag_w
    else:
        W = S.copy()
        W[np.diag_indices(p)] = diag_w
        B = np.zeros((p, p))

    off = ~np.eye(p, dtype=bool)
    scale = float(np.mean(np.abs(S[off])))
    threshold = cfg.tol * scale
    best = None
    for sweep in range(max_sweeps):
        dw = _kernels.glasso_sweep(S, W, B, cfg.lam, cfg.inner_tol, cfg.max_inner)
        diag.iterations = sweep + 1
        theta = _theta_from_dual(W, B)
        try:
            diag.objective_trace.append(objective(theta, S, cfg.lam, cfg.penalize_diagonal))
            best = theta
        except ValueError:
            diag.objective_trace.append(-math.inf)
        if dw <= threshold and best is theta:
            diag.kkt_residual = kkt_residual(theta, S, cfg.lam, cfg.penalize_diagonal)
            if diag.kkt_residual <= cfg.kkt_tol:
                diag.converged = True
                break

    if best is None or np.linalg.eigvalsh(best)[0] <= 0:
        # intermediate coefficients can be inconsistent; fall back to the dual iterate
        theta = np.linalg.inv(W)
        theta = 0.5 * (theta + theta.T)
        diag.returned_iterate = "inverse_working_covariance"
    else:
        theta = best
        diag.returned_iterate = "coefficients"
    diag.kkt_residual = kkt_residual(theta, S, cfg.lam, cfg.penalize_diagonal)
    if not diag.converged:
        logger.warning("coordinate descent did not converge in %d sweeps", max_sweeps)
    diag.state = CDState(W, B)
    return theta, diag


# ---------------------------------------------------------------------------
# ADMM


def _admm_theta_step(M, rho):
    """Closed-form theta update.

    Minimizes ``-log det T + tr(S T) + rho/2 ||T - Z + U||_F^2`` given
    ``M = rho (Z - U) - S``: eigenvalues map as ``(d + sqrt(d^2 + 4 rho)) / (2 rho)``.
    """
    d, Q = np.linalg.eigh(M)
    t = (d + np.sqrt(d * d + 4.0 * rho)) / (2.0 * rho)
    T = (Q * t) @ Q.T
    return 0.5 * (T + T.T)


def glasso_admm(s_hat, cfg, warm_start=None):
    """Graphical lasso by ADMM on the split ``theta = Z``.

    Stops when ``||theta - Z||_F`` and ``rho ||Z_new - Z_old||_F`` are both
    below ``tol * p`` and the KKT residual of the returned matrix is at most
    ``kkt_tol``. With ``adapt_rho`` the penalty is doubled or halved every
    10 iterations when one residual exceeds the other tenfold.

    Returns the sparse iterate ``Z`` when it is positive definite, otherwise
    the (always PD) ``theta`` iterate with entries below 1e-8 in magnitude
    set to zero. ``diag.state`` is ``(Z, U)`` with ``U`` scaled to ``cfg.rho``.
    """
    S = _entries(s_hat)
    p = S.shape[0]
    if p < 2:
        raise ValueError("need p >= 2")
    if not np.allclose(S, S.T, rtol=0, atol=1e-10):
        raise ValueError("s_hat must be symmetric")
    rho, lam = cfg.rho, cfg.lam
    max_iter = cfg.max_outer or 2000
    diag = SolveDiagnostics(solver=Solver.ADMM.value)
    weights = _penalty_weights(p, lam, cfg.penalize_diagonal)

    if warm_start is not None:
        Z, U = (np.array(a, dtype=float) for a in warm_start)
    else:
        S_rep, _ = psd_repair(S, cfg.psd_floor)
        Z = np.diag(1.0 / np.diag(S_rep))
        U = np.zeros((p, p))
    stop = cfg.tol * p

    def finish(Z, theta):
        Z = 0.5 * (Z + Z.T)
        if np.linalg.eigvalsh(Z)[0] > 0:
            return Z, "Z"
        return np.where(np.abs(theta) > 1e-8, theta, 0.0), "theta"

    out = kkt = None
    for k in range(max_iter):
        theta = _admm_theta_step(rho * (Z - U) - S, rho)
        Z_old = Z
        Z = soft_threshold(theta + U, weights / rho)
        U = U + theta - Z
        r = float(np.linalg.norm(theta - Z))
        s = float(rho * np.linalg.norm(Z - Z_old))
        diag.iterations = k + 1
        diag.primal_residual, diag.dual_residual = r, s
        diag.objective_trace.append(objective(theta, S, lam, cfg.penalize_diagonal))
        if r < stop and s < stop:
            out, which = finish(Z, theta)
            kkt = kkt_residual(out, S, lam, cfg.penalize_diagonal)
            if kkt <= cfg.kkt_tol:
                diag.converged = True
                break
        if cfg.adapt_rho and (k + 1) % 10 == 0:
            if r > 10.0 * s:
                rho, U = 2.0 * rho, U / 2.0
            elif s > 10.0 * r:
                rho, U = rho / 2.0, U * 2.0
    if not diag.converged:
        logger.warning("ADMM did not converge in %d iterations", max_iter)
        out, which = finish(Z, theta)
        kkt = kkt_residual(out, S, lam, cfg.penalize_diagonal)
    diag.returned_iterate = which
    diag.kkt_residual = kkt
    diag.state = (0.5 * (Z + Z.T), U * (rho / cfg.rho))
    return out, diag


def solve(s_hat, cfg, solver=Solver.CD, warm_start=None):
    solver = Solver(solver)
    if solver is Solver.CD:
        return glasso_cd(s_hat, cfg, warm_start)
    return glasso_admm(s_hat, cfg, warm_start)


def estimate_from_release(release, cfg, solver=Solver.ADMM):
    """Center the released data, form its covariance, debias, and solve."""
    s_tilde = encrypted_covariance(release)
    s_hat = debias(s_tilde, release)
    return solve(s_hat, cfg, solver)


def vanilla_glasso(X, cfg, solver=Solver.CD):
    """Graphical lasso on raw data (no noise correction)."""
    S = empirical_covariance(center(X), assume_centered=True)
    return solve(S, cfg, solver)
