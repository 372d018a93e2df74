"""K-fold cross-validation of the l1 penalty on (encrypted) data."""

import enum
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .estimator import LassoConfig, Solver, debias, empirical_covariance, solve
from .graph_model import EDGE_TOL, edge_count
from .privacy import EncryptedRelease, center

logger = logging.getLogger(__name__)


class Rule(str, enum.Enum):
    MIN_MSE = "min_mse"
    DROP_KNEE = "drop_knee"


@dataclass
class CvResult:
    lambda_grid: list
    mse_mean: list
    mse_std: list
    edge_counts: list
    chosen_lambda: float
    rule: Rule
    min_mse_lambda: float
    drop_knee_lambda: float
    k_folds: int
    n_failed: list = field(default_factory=list)

    def to_dict(self):
        d = dict(self.__dict__)
        d["rule"] = Rule(self.rule).value
        return d

    def table(self):
        """Rows ``(lambda, mean MSE, std MSE, edge count)``."""
        return list(zip(self.lambda_grid, self.mse_mean, self.mse_std, self.edge_counts))


def default_grid(s_hat, num=15, lo_exp=-2.5):
    """``num`` log-spaced values over ``[10^lo_exp, 1] * max |off-diagonal s_hat|``, descending."""
    S = np.asarray(s_hat)
    off = ~np.eye(S.shape[0], dtype=bool)
    top = float(np.max(np.abs(S[off])))
    if top <= 0:
        raise ValueError("covariance has no off-diagonal signal; cannot build a lambda grid")
    return (top * np.logspace(0.0, lo_exp, num)).tolist()


def fold_indices(n, k_folds, seed):
    """Seeded shuffle of ``range(n)`` split into ``k_folds`` validation folds."""
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k_folds)]


def _cov(X, shift):
    S = empirical_covariance(center(X), assume_centered=True)
    return debias(S, shift).entries if shift else S


def _path(S, grid, cfg, solver):
    """Fit along a descending grid with warm starts; yields (theta, diagnostics)."""
    warm = None
    for lam in grid:
        c = LassoConfig(**{**cfg.__dict__, "lam": lam})
        theta, diag = solve(S, c, solver, warm_start=warm)
        warm = diag.state
        yield theta, diag


def knee_lambda(grid, mse_mean, edge_counts, band=0.05):
    """Largest lambda whose mean MSE is within ``band`` of the post-drop plateau.

    Scans from the largest lambda down and returns the first one with
    ``mse <= plateau + band * (max mse - plateau)`` and a nonempty graph,
    where ``plateau`` is the smallest mean MSE on the grid.
    """
    mse = np.asarray(mse_mean, dtype=float)
    finite = np.isfinite(mse)
    plateau, top = np.min(mse[finite]), np.max(mse[finite])
    cut = plateau + band * (top - plateau)
    for lam, m, e in zip(grid, mse, edge_counts):
        if np.isfinite(m) and m <= cut and e > 0:
            return lam
    return None


def cv_data(X, shift, grid=None, k_folds=5, solver=Solver.CD, seed=0, cfg=None,
            rule=Rule.MIN_MSE, band=0.05, n_jobs=1):
    """Cross-validate the penalty on data ``X`` whose covariance is debiased by ``shift``.

    For every fold the model is fit on the debiased covariance of the training
    rows and scored by the mean squared entrywise difference between the
    fitted covariance ``inv(theta)`` and the debiased validation covariance.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if k_folds < 2:
        raise ValueError("need at least 2 folds")
    if n < k_folds:
        raise ValueError(f"n={n} rows cannot fill {k_folds} folds")
    cfg = cfg or LassoConfig()
    S_full = _cov(X, shift)
    if grid is None:
        grid = default_grid(S_full)
    grid = [float(g) for g in grid]
    if any(a < b for a, b in zip(grid, grid[1:])):
        raise ValueError("lambda grid must be sorted in descending order")

    folds = fold_indices(n, k_folds, seed)

    def run_fold(val):
        mask = np.ones(n, dtype=bool)
        mask[val] = False
        S_tr, S_val = _cov(X[mask], shift), _cov(X[val], shift)
        out = []
        for theta, diag in _path(S_tr, grid, cfg, solver):
            if not diag.converged:
                out.append(np.nan)
                continue
            out.append(float(np.mean((np.linalg.inv(theta) - S_val) ** 2)))
        return out

    if n_jobs == 1:
        scores = [run_fold(v) for v in folds]
    else:
        from joblib import Parallel, delayed

        scores = Parallel(n_jobs=n_jobs)(delayed(run_fold)(v) for v in folds)
    scores = np.array(scores)  # folds x grid
    n_failed = np.sum(np.isnan(scores), axis=0).astype(int).tolist()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN columns stay NaN
        mse_mean = np.nanmean(scores, axis=0)
        mse_std = np.nanstd(scores, axis=0)

    edges = [edge_count(theta, EDGE_TOL) for theta, _ in _path(S_full, grid, cfg, solver)]
    if not any(edges):
        raise ValueError("every lambda on the grid gives an empty graph; use smaller lambda values")

    valid = [i for i, (m, e) in enumerate(zip(mse_mean, edges)) if np.isfinite(m) and e > 0]
    if not valid:
        raise ValueError("no lambda with a converged, nonempty fit")
    min_lam = grid[min(valid, key=lambda i: mse_mean[i])]
    knee = knee_lambda(grid, mse_mean, edges, band)
    if knee is None:
        knee = min_lam
    rule = Rule(rule)
    chosen = min_lam if rule is Rule.MIN_MSE else knee
    return CvResult(
        lambda_grid=grid,
        mse_mean=[float(m) for m in mse_mean],
        mse_std=[float(s) for s in mse_std],
        edge_counts=edges,
        chosen_lambda=chosen,
        rule=rule,
        min_mse_lambda=min_lam,
        drop_knee_lambda=knee,
        k_folds=k_folds,
        n_failed=n_failed,
    )


def cv_lambda(release, grid=None, k_folds=5, solver=Solver.CD, seed=0, cfg=None,
              rule=Rule.MIN_MSE, band=0.05, n_jobs=1):
    """Cross-validate the penalty on an encrypted release.

    Training and validation covariances are both debiased with the public
    noise variance of the release.
    """
    if not isinstance(release, EncryptedRelease):
        raise TypeError("cv_lambda expects an EncryptedRelease")
    return cv_data(release.data, release.noise_variance, grid, k_folds, solver, seed, cfg,
                   rule, band, n_jobs)
