import math

import numpy as np
import pytest

from dpglasso import graph_model as gm
from dpglasso.estimator import (
    CovarianceEstimate,
    LassoConfig,
    Solver,
    debias,
    empirical_covariance,
    encrypted_covariance,
    estimate_from_release,
    glasso_admm,
    glasso_cd,
    kkt_residual,
    lasso_subproblem,
    objective,
    psd_repair,
    soft_threshold,
    solve,
    vanilla_glasso,
)
from dpglasso.evaluate import roc_auc
from dpglasso.privacy import EncryptedRelease, NoiseSpec, center, discrete_variance, encrypt

from conftest import TOY_THETA, TOY_THETA_NOISY, random_spd

TIGHT = dict(tol=1e-8, max_outer=20000)


def _random_instance(rng, p_max=15):
    p = int(rng.integers(3, p_max + 1))
    return random_spd(rng, p), float(rng.uniform(0.02, 0.4))


# ---------------------------------------------------------------------------
# covariance


def test_empirical_covariance_examples():
    np.testing.assert_array_equal(empirical_covariance([[1.0], [-1.0]]), [[1.0]])
    np.testing.assert_array_equal(empirical_covariance([[1.0, 0.0], [-1.0, 0.0]]),
                                  [[1.0, 0.0], [0.0, 0.0]])
    with pytest.raises(ValueError, match="centered"):
        empirical_covariance([[1.0], [2.0]])


def test_debias_examples():
    S = np.array([[2.0, 0.3], [0.3, 2.0]])
    rel = EncryptedRelease(np.zeros((2, 2)), "continuous", 1.0)
    out = debias(S, rel)
    np.testing.assert_array_equal(out.entries, [[1.0, 0.3], [0.3, 1.0]])
    assert out.kind == "debiased" and not out.indefinite
    np.testing.assert_array_equal(debias(S, 0.0).entries, S)
    drel = EncryptedRelease(np.zeros((2, 2)), "discrete", 1.0, discrete_variance(1.0))
    shift = S[0, 0] - debias(S, drel).entries[0, 0]
    assert shift == pytest.approx(discrete_variance(1.0), abs=1e-15) and shift < 1.0
    assert debias(np.eye(2) * 0.5, 1.0).indefinite


def test_encrypted_covariance_recenters(rng):
    X = rng.standard_normal((50, 3)) + 4.0
    rel = EncryptedRelease(X, "continuous", 1.0)
    S = encrypted_covariance(rel)
    np.testing.assert_allclose(S.entries, np.cov(X.T, bias=True), atol=1e-12)


def test_psd_repair():
    S = np.diag([1.0, 2.0, -0.1])
    R, changed = psd_repair(S)
    assert changed and np.linalg.eigvalsh(R)[0] > 0
    R2, changed2 = psd_repair(np.eye(3))
    assert not changed2 and np.array_equal(R2, np.eye(3))


# ---------------------------------------------------------------------------
# objective, threshold, KKT


def test_objective_identity():
    p = 5
    assert objective(np.eye(p), np.eye(p), 0.0) == pytest.approx(-p)
    assert objective(np.eye(p), np.eye(p), 1.0) == pytest.approx(-2 * p)


def test_objective_eigen_oracle(rng):
    theta = random_spd(rng, 4)
    S = random_spd(rng, 4)
    lam = 0.3
    ref = np.sum(np.log(np.linalg.eigvalsh(theta))) - np.trace(S @ theta) - lam * np.abs(theta).sum()
    assert objective(theta, S, lam) == pytest.approx(ref, rel=1e-12)
    off = ref + lam * np.abs(np.diag(theta)).sum()
    assert objective(theta, S, lam, penalize_diagonal=False) == pytest.approx(off, rel=1e-12)


def test_objective_rejects_non_pd():
    with pytest.raises(ValueError):
        objective(-np.eye(2), np.eye(2), 0.1)


def test_soft_threshold():
    assert soft_threshold(3.0, 1.0) == 2.0
    assert soft_threshold(-0.5, 1.0) == 0.0
    assert soft_threshold(-2.5, 0.0) == -2.5
    np.testing.assert_array_equal(soft_threshold(np.array([-3.0, 0.2, 4.0]), 1.0), [-2.0, 0.0, 3.0])


def test_kkt_exact_scalar_solution():
    lam = 0.1
    theta = np.eye(3) / (1.0 + lam)
    assert kkt_residual(theta, np.eye(3), lam) < 1e-10


def test_kkt_detects_perturbation(rng):
    S, lam = random_spd(rng, 6), 0.1
    theta, diag = glasso_cd(S, LassoConfig(lam=lam, tol=1e-8))
    assert diag.converged
    base = kkt_residual(theta, S, lam)
    bumped = theta.copy()
    bumped[0, 1] += 0.1
    bumped[1, 0] += 0.1
    assert kkt_residual(bumped, S, lam) > base


# ---------------------------------------------------------------------------
# lasso subproblem


def _ista_oracle(W11, s12, lam, iters=200_000):
    """Proximal gradient on 1/2 b'Wb - s'b + lam |b|_1, step 1/L."""
    L = np.linalg.eigvalsh(W11)[-1]
    b = np.zeros_like(s12)
    for _ in range(iters):
        b_new = soft_threshold(b - (W11 @ b - s12) / L, lam / L)
        if np.max(np.abs(b_new - b)) < 1e-15:
            break
        b = b_new
    return b


def test_lasso_subproblem_trivial_cases(rng):
    W = random_spd(rng, 5)
    np.testing.assert_array_equal(lasso_subproblem(W, np.zeros(5), 0.2), np.zeros(5))
    s = rng.standard_normal(6)
    np.testing.assert_allclose(lasso_subproblem(np.eye(6), s, 0.3), soft_threshold(s, 0.3), atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_lasso_subproblem_vs_oracle(seed):
    rng = np.random.default_rng(seed)
    W = random_spd(rng, 5)
    s = rng.standard_normal(5)
    lam = 0.2
    beta = lasso_subproblem(W, s, lam, LassoConfig(inner_tol=1e-12, max_inner=100_000))
    np.testing.assert_allclose(beta, _ista_oracle(W, s, lam), atol=1e-5)
    g = W @ beta - s
    on = beta != 0
    assert np.all(np.abs(g[on] + lam * np.sign(beta[on])) <= 1e-8)
    assert np.all(np.abs(g[~on]) <= lam + 1e-8)


# ---------------------------------------------------------------------------
# solvers


@pytest.mark.parametrize("solver", list(Solver))
@pytest.mark.parametrize("lam", [0.01, 0.1, 1.0])
def test_identity_covariance(solver, lam):
    theta, diag = solve(np.eye(4), LassoConfig(lam=lam, tol=1e-10), solver)
    np.testing.assert_allclose(theta, np.eye(4) / (1 + lam), atol=1e-8)
    assert diag.converged


@pytest.mark.parametrize("solver", list(Solver))
def test_full_shrinkage(solver, rng):
    for _ in range(5):
        S, _ = _random_instance(rng)
        off = np.abs(S[~np.eye(S.shape[0], dtype=bool)]).max()
        theta, _ = solve(S, LassoConfig(lam=off * 1.0001, **TIGHT), solver)
        assert gm.edge_count(theta, 0.0) == 0


def test_chain_exact_covariance_solvers_agree():
    S = np.linalg.inv(gm.chain_precision(10))
    cfg = LassoConfig(lam=0.05, **TIGHT)
    t_cd, d_cd = glasso_cd(S, cfg)
    t_ad, d_ad = glasso_admm(S, cfg)
    assert d_cd.converged and d_ad.converged
    assert np.max(np.abs(t_cd - t_ad)) <= 1e-3
    chain = gm.adjacency_of(gm.chain_precision(10), 0.0)
    est = gm.adjacency_of(t_cd)
    assert chain.edges <= est.edges
    assert gm.adjacency_of(t_ad).edges == est.edges
    assert roc_auc(t_cd, chain).auc == 1.0


@pytest.mark.xfail(strict=True, reason="lasso keeps weak second-neighbour edges for the chain "
                                       "covariance at every penalty that keeps the chain")
def test_chain_exact_covariance_recovers_chain_exactly():
    S = np.linalg.inv(gm.chain_precision(10))
    theta, _ = glasso_cd(S, LassoConfig(lam=0.05, tol=1e-8))
    assert gm.adjacency_of(theta) == gm.adjacency_of(gm.chain_precision(10), 0.0)


def test_sklearn_reference(rng):
    from sklearn.covariance import graphical_lasso

    for _ in range(3):
        S, lam = _random_instance(rng, 8)
        cov_ref, prec_ref = graphical_lasso(S, alpha=lam, tol=1e-10, max_iter=1000)
        cfg = LassoConfig(lam=lam, penalize_diagonal=False, **TIGHT)
        for solver in Solver:
            theta, _ = solve(S, cfg, solver)
            np.testing.assert_allclose(theta, prec_ref, atol=2e-5)


def test_solver_agreement_and_kkt_random():
    rng = np.random.default_rng(2024)
    for _ in range(20):
        S, lam = _random_instance(rng)
        cfg = LassoConfig(lam=lam, **TIGHT)
        t_cd, d_cd = glasso_cd(S, cfg)
        t_ad, d_ad = glasso_admm(S, cfg)
        assert d_cd.converged and d_ad.converged
        assert np.max(np.abs(t_cd - t_ad)) <= 1e-3
        assert d_cd.kkt_residual <= 1e-4 and d_ad.kkt_residual <= 1e-4
        for t in (t_cd, t_ad):
            assert np.array_equal(t, t.T) and np.linalg.eigvalsh(t)[0] > 0


def _shrinkage_paths():
    rng = np.random.default_rng(77)
    for _ in range(20):
        p = int(rng.integers(4, 13))
        theta0 = gm.sparse_random_precision(p, 0.7, int(rng.integers(1 << 30)))
        X = gm.sample_gaussian(theta0, 200, int(rng.integers(1 << 30)))
        S = empirical_covariance(center(X), assume_centered=True)
        top = np.abs(S[~np.eye(p, dtype=bool)]).max()
        grid = top * np.logspace(0, -2, 10)
        yield {solver: [gm.edge_count(solve(S, LassoConfig(lam=l, **TIGHT), solver)[0]) for l in grid]
               for solver in Solver}


@pytest.mark.xfail(strict=True, reason="the graphical lasso support is not nested along the "
                                       "penalty path; 2 of these 20 certified paths drop an edge")
def test_monotone_shrinkage():
    for counts in _shrinkage_paths():
        for c in counts.values():
            assert all(a <= b for a, b in zip(c, c[1:])), c


def test_shrinkage_path_same_for_both_solvers():
    for counts in _shrinkage_paths():
        assert counts[Solver.CD] == counts[Solver.ADMM]
        assert counts[Solver.CD][0] == 0


def test_cd_objective_trace_nondecreasing(rng):
    for _ in range(5):
        S, lam = _random_instance(rng)
        _, diag = glasso_cd(S, LassoConfig(lam=lam, tol=1e-10))
        tr = np.array(diag.objective_trace)
        assert np.all(np.diff(tr) >= -1e-8)


def test_admm_objective_improves_on_start(rng):
    for _ in range(5):
        S, lam = _random_instance(rng)
        theta, diag = glasso_admm(S, LassoConfig(lam=lam, **TIGHT))
        start = np.diag(1.0 / np.diag(S))
        assert objective(theta, S, lam) >= objective(start, S, lam)


def test_admm_indefinite_input(rng):
    S = random_spd(rng, 6)
    d, Q = np.linalg.eigh(S)
    d[0] = -0.05
    S = (Q * d) @ Q.T
    S = 0.5 * (S + S.T)
    theta, diag = glasso_admm(S, LassoConfig(lam=0.2, **TIGHT))
    assert diag.converged and np.linalg.eigvalsh(theta)[0] > 0
    theta_cd, diag_cd = glasso_cd(S, LassoConfig(lam=0.2))
    assert diag_cd.psd_repaired and np.linalg.eigvalsh(theta_cd)[0] > 0


def test_warm_start_same_solution(rng):
    S, _ = _random_instance(rng)
    for solver in Solver:
        _, d1 = solve(S, LassoConfig(lam=0.3, **TIGHT), solver)
        warm, _ = solve(S, LassoConfig(lam=0.1, **TIGHT), solver, warm_start=d1.state)
        cold, _ = solve(S, LassoConfig(lam=0.1, **TIGHT), solver)
        assert np.max(np.abs(warm - cold)) < 1e-5


def test_nonconvergence_reported(rng):
    S = random_spd(rng, 8)
    _, diag = glasso_admm(S, LassoConfig(lam=0.01, max_outer=2))
    assert not diag.converged and diag.iterations == 2


def test_config_validation():
    with pytest.raises(ValueError):
        LassoConfig(lam=0.0)
    with pytest.raises(ValueError):
        LassoConfig(rho=-1.0)
    with pytest.raises(ValueError):
        LassoConfig(tol=0.0)


# ---------------------------------------------------------------------------
# pipeline


def test_tiny_noise_release_matches_vanilla():
    X = gm.sample_gaussian(gm.chain_precision(8), 500, 1)
    Xc = center(X)
    rel = encrypt(Xc, NoiseSpec("continuous", 1e-12, 2))
    cfg = LassoConfig(lam=0.1, tol=1e-10)
    for solver in Solver:
        a, _ = estimate_from_release(rel, cfg, solver)
        b, _ = vanilla_glasso(X, cfg, solver)
        np.testing.assert_allclose(a, b, atol=1e-9)


def test_structure_destruction_chain():
    theta = gm.chain_precision(4)
    sigma2 = 0.3
    assert sigma2 < 1.0 / np.linalg.norm(theta, 2)
    noisy = np.linalg.inv(np.linalg.inv(theta) + sigma2 * np.eye(4))
    assert np.all(np.abs(noisy) > 1e-8)


def test_structure_destruction_toy_pair():
    noisy = np.linalg.inv(np.linalg.inv(TOY_THETA) + 0.3 * np.eye(4))
    assert np.max(np.abs(noisy - TOY_THETA_NOISY)) <= 0.005
    assert np.all(np.abs(noisy) > 1e-8)


def test_unbiased_debiased_covariance_small():
    rng = np.random.default_rng(5)
    X = center(rng.standard_normal((200, 5)))
    S = empirical_covariance(X, assume_centered=True)
    m = 500
    acc = np.empty((m, 5, 5))
    for k in range(m):
        rel = encrypt(X, NoiseSpec("continuous", 1.0, k))
        acc[k] = debias(CovarianceEstimate(rel.data.T @ rel.data / 200, "encrypted"), rel).entries
    assert np.all(np.abs(acc.mean(axis=0) - S) <= 6 * acc.std(axis=0) / math.sqrt(m))
