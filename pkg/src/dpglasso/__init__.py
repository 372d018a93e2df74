"""Privacy-preserving publication of Gaussian data and debiased graphical lasso recovery."""

from .estimator import (
    CovarianceEstimate,
    LassoConfig,
    Solver,
    SolveDiagnostics,
    debias,
    empirical_covariance,
    encrypted_covariance,
    estimate_from_release,
    glasso_admm,
    glasso_cd,
    kkt_residual,
    objective,
    solve,
    vanilla_glasso,
)
from .evaluate import RocCurve, Scenario, TrialReport, proxy_truth, roc_auc, run_trials
from .graph_model import EdgeSet, adjacency_of, chain_precision, sample_gaussian, sparse_random_precision
from .modelselect import CvResult, Rule, cv_data, cv_lambda
from .privacy import (
    EncryptedRelease,
    Family,
    NoiseSpec,
    PrivacyReport,
    delta_of_epsilon,
    discrete_variance,
    encrypt,
    gdp_mu_continuous,
    gdp_mu_discrete,
    privacy_report,
    sample_discrete_gaussian,
    snr_accounting,
)

__version__ = "0.1.0"
