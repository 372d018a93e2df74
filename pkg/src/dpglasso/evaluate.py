"""Edge-recovery scoring and repeated-seed experiments."""

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import graph_model as gm
from .estimator import LassoConfig, Solver, solve, debias, empirical_covariance, vanilla_glasso
from .modelselect import Rule, cv_data
from .privacy import Family, NoiseSpec, center, encrypt, snr_accounting

logger = logging.getLogger(__name__)


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float

    @property
    def points(self):
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def _pair_scores(theta_hat, truth):
    theta_hat = np.asarray(theta_hat, dtype=float)
    p = theta_hat.shape[0]
    if truth.p != p:
        raise ValueError(f"dimension mismatch: estimate has p={p}, truth has p={truth.p}")
    iu, ju = np.triu_indices(p, k=1)
    scores = np.abs(theta_hat[iu, ju])
    labels = truth.to_adjacency()[iu, ju]
    return scores, labels


def roc_from_scores(scores, labels):
    """ROC over all thresholds, tied scores entering together."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs at least one edge and one non-edge in the truth")
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], labels[order]
    tp = np.cumsum(y)
    fp = np.cumsum(~y)
    # last index of each run of equal scores
    ends = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    tpr = np.r_[0.0, tp[ends] / n_pos]
    fpr = np.r_[0.0, fp[ends] / n_neg]
    # trapezoid area from integer counts: each tie group adds neg_g * (2 tp_before + pos_g) / 2
    tp_g, fp_g = np.r_[0, tp[ends]], np.r_[0, fp[ends]]
    twice_u = int(np.sum(np.diff(fp_g) * (tp_g[1:] + tp_g[:-1])))
    auc = twice_u / (2 * n_pos * n_neg)
    return RocCurve(fpr, tpr, auc)


def roc_auc(theta_hat, truth):
    """ROC/AUC of ``|theta_hat_ij|`` (i < j) as a score for ``(i, j)`` being an edge."""
    return roc_from_scores(*_pair_scores(theta_hat, truth))


@dataclass
class ProxyTruth:
    edges: gm.EdgeSet
    lam: float
    low_confidence: bool


def proxy_truth(X, cfg=None, solver=Solver.CD, lam=None, grid=None, k_folds=5, seed=0,
                rule=Rule.MIN_MSE):
    """Edge set of vanilla glasso on raw data, used when no ground truth exists.

    ``lam`` defaults to the cross-validated choice on the raw data. When
    ``n < p`` or cross-validation cannot run, the result is flagged
    ``low_confidence``.
    """
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    cfg = cfg or LassoConfig()
    low = n < p
    if lam is None:
        try:
            lam = cv_data(X, 0.0, grid, min(k_folds, n), solver, seed, cfg, rule).chosen_lambda
        except ValueError as exc:
            logger.warning("cross-validation failed for proxy truth (%s); using a default penalty", exc)
            S = empirical_covariance(center(X), assume_centered=True)
            off = np.abs(S[~np.eye(p, dtype=bool)])
            lam = float(0.1 * off.max()) if off.size and off.max() > 0 else 1e-3
            low = True
    theta, _ = vanilla_glasso(X, LassoConfig(**{**cfg.__dict__, "lam": lam}), solver)
    return ProxyTruth(gm.adjacency_of(theta, gm.EDGE_TOL), float(lam), low)


# ---------------------------------------------------------------------------
# repeated trials


@dataclass
class Scenario:
    """One table row group: generator, sample size, noise levels, seeds.

    ``snr_db`` entries of ``None`` mean "no noise" (vanilla glasso on the raw
    data). ``lam`` may be a number or ``"cv"``. ``truth`` is ``"true"`` (the
    generator's edge set) or ``"proxy"`` (vanilla glasso on the raw data at
    the same penalty rule).
    """

    generator: str = "chain"
    p: int = 50
    n: int = 5000
    sparsity: float = 0.99
    snr_db: list = field(default_factory=lambda: [None, 40.0, 20.0])
    seeds: list = field(default_factory=lambda: list(range(10)))
    family: str = "continuous"
    solver: str = "cd"
    lam: object = "cv"
    rule: str = "min_mse"
    k_folds: int = 5
    grid: list | None = None
    truth: str = "true"
    integer_scale: float | None = None

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("need at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        if self.generator not in ("chain", "sparse"):
            raise ValueError(f"unknown generator {self.generator!r}")
        if self.truth not in ("true", "proxy"):
            raise ValueError("truth must be 'true' or 'proxy'")
        Family(self.family)
        Solver(self.solver)
        Rule(self.rule)


@dataclass
class TrialReport:
    scenario: dict
    snr_db: float | None
    seeds: list
    aucs: list
    mean: float
    std: float
    epsilon_simple: float | None
    runtimes: list
    lambdas: list
    failures: list = field(default_factory=list)

    def to_dict(self):
        return dict(self.__dict__)


def make_precision(scenario, seed):
    if scenario.generator == "chain":
        return gm.chain_precision(scenario.p)
    return gm.sparse_random_precision(scenario.p, scenario.sparsity, seed)


def make_data(scenario, seed):
    """Generator precision and raw data for one seed (integer-valued when ``integer_scale`` is set)."""
    data_seed, _, _ = np.random.SeedSequence(seed).generate_state(3)
    theta = make_precision(scenario, seed)
    X = gm.sample_gaussian(theta, scenario.n, int(data_seed))
    if scenario.integer_scale:
        X = np.round(X * scenario.integer_scale)
    return theta, X


def _fit(X, shift, scenario, cv_seed):
    cfg = LassoConfig()
    if scenario.lam == "cv":
        cv = cv_data(X, shift, scenario.grid, scenario.k_folds, scenario.solver, cv_seed, cfg,
                     scenario.rule)
        lam = cv.chosen_lambda
    else:
        lam = float(scenario.lam)
    S = empirical_covariance(center(X), assume_centered=True)
    if shift:
        S = debias(S, shift).entries
    theta, _ = solve(S, LassoConfig(lam=lam), scenario.solver)
    return theta, lam


def run_one(scenario, snr_db, seed):
    """One (noise level, seed) trial. Returns ``(auc, lam, epsilon_simple, seconds)``."""
    t0 = time.perf_counter()
    _, noise_seed, cv_seed = (int(s) for s in np.random.SeedSequence(seed).generate_state(3))
    theta, X = make_data(scenario, seed)
    Xc = center(X)
    if scenario.truth == "true":
        truth = gm.adjacency_of(theta, 0.0)
    else:
        _, lam0 = _fit(X, 0.0, scenario, cv_seed)
        t_hat, _ = vanilla_glasso(X, LassoConfig(lam=lam0), scenario.solver)
        truth = gm.adjacency_of(t_hat, gm.EDGE_TOL)
    if snr_db is None:
        data, shift, eps = X, 0.0, None
    else:
        sigma, eps = snr_accounting(Xc, snr_db)
        spec = NoiseSpec(scenario.family, sigma, noise_seed)
        release = encrypt(X if spec.family is Family.DISCRETE else Xc, spec)
        data, shift = release.data, release.noise_variance
    theta_hat, lam = _fit(data, shift, scenario, cv_seed)
    auc = roc_auc(theta_hat, truth).auc
    return auc, lam, eps, time.perf_counter() - t0


def run_trials(scenario, n_jobs=1):
    """Run every (noise level, seed) pair and aggregate per noise level.

    Failed trials are recorded in ``failures`` and left out of the mean;
    the standard deviation is the population one over the successful seeds.
    """
    tasks = [(snr, seed) for snr in scenario.snr_db for seed in scenario.seeds]

    def safe(snr, seed):
        try:
            return run_one(scenario, snr, seed)
        except (ValueError, np.linalg.LinAlgError) as exc:
            return exc

    if n_jobs == 1:
        results = [safe(*t) for t in tasks]
    else:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=n_jobs)(delayed(safe)(*t) for t in tasks)

    reports = []
    echo = dict(scenario.__dict__)
    for snr in scenario.snr_db:
        rows = [(seed, r) for (s, seed), r in zip(tasks, results) if s == snr]
        ok = [(seed, r) for seed, r in rows if not isinstance(r, Exception)]
        aucs = [r[0] for _, r in ok]
        eps = [r[2] for _, r in ok if r[2] is not None]
        reports.append(TrialReport(
            scenario=echo,
            snr_db=snr,
            seeds=[seed for seed, _ in ok],
            aucs=aucs,
            mean=float(np.mean(aucs)) if aucs else float("nan"),
            std=float(np.std(aucs)) if aucs else float("nan"),
            epsilon_simple=float(np.mean(eps)) if eps else None,
            runtimes=[r[3] for _, r in ok],
            lambdas=[r[1] for _, r in ok],
            failures=[[seed, str(r)] for seed, r in rows if isinstance(r, Exception)],
        ))
    return reports
