"""Publisher side: noise injection and privacy accounting.

The publisher adds i.i.d. noise to a centered data matrix, either continuous
Gaussian or discrete Gaussian on the integers, and releases the noisy matrix
together with the noise scale. Accounting follows Gaussian differential
privacy (mu-GDP) and its (epsilon, delta) dual.
"""

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

#: Rows per independent RNG stream when drawing encryption noise.
ROW_BLOCK = 1024

#: Discrete noise needs sigma above this for the tail bound used in its GDP analysis.
DISCRETE_SIGMA_MIN = 1.0 / math.sqrt(2.0 * math.pi)

#: The discrete Gaussian is tabulated on [-ceil(TAIL_SIGMAS*sigma), +ceil(TAIL_SIGMAS*sigma)].
TAIL_SIGMAS = 12

SNR_CONVENTION = "signal power = mean squared entry of the column-centered data"


class Family(str, enum.Enum):
    CONTINUOUS = "continuous"
    DISCRETE = "discrete"


@dataclass(frozen=True)
class NoiseSpec:
    family: Family
    sigma: float
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.family is Family.DISCRETE and not self.sigma > DISCRETE_SIGMA_MIN:
            raise ValueError(
                f"discrete noise requires sigma > 1/sqrt(2*pi) ~ {DISCRETE_SIGMA_MIN:.4f}, "
                f"got {self.sigma}"
            )
        if int(self.seed) < 0:
            raise ValueError("seed must be non-negative")


@dataclass(frozen=True)
class EncryptedRelease:
    """What the publisher hands out: noisy data plus the public noise scale.

    The seed is deliberately absent.
    """

    data: np.ndarray
    family: Family
    sigma: float
    sigma_bar: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if not self.sigma >= 0:
            raise ValueError("sigma must be non-negative")
        if self.family is Family.DISCRETE:
            if self.sigma_bar is None:
                raise ValueError("discrete release needs sigma_bar")
            if not self.sigma_bar < self.sigma**2:
                raise ValueError("sigma_bar must be below sigma**2")

    @property
    def noise_variance(self):
        """Diagonal shift that makes the encrypted covariance unbiased."""
        if self.family is Family.DISCRETE:
            return float(self.sigma_bar)
        return float(self.sigma) ** 2

    def sidecar(self):
        out = {"family": self.family.value, "sigma": float(self.sigma)}
        if self.sigma_bar is not None:
            out["sigma_bar"] = float(self.sigma_bar)
        return out


@dataclass
class PrivacyReport:
    family: str
    sigma: float
    mu: float
    delta_f: float
    C: float | None
    K: float | None
    epsilon_simple: float
    snr_db: float
    signal_power: float
    snr_convention: str = SNR_CONVENTION
    delta_curve: list = field(default_factory=list)

    def to_dict(self):
        d = dict(self.__dict__)
        d["delta_curve"] = [[float(e), float(dl)] for e, dl in self.delta_curve]
        return d


# ---------------------------------------------------------------------------
# centering


def is_centered(X, rtol=1e-10):
    X = np.asarray(X, dtype=float)
    means = X.mean(axis=0)
    return bool(np.all(np.abs(means) <= rtol * (X.std(axis=0) + 1.0)))


def center(X):
    """Subtract column means."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("need a 2-d array with at least one row")
    return X - X.mean(axis=0)


# ---------------------------------------------------------------------------
# noise streams


def _block_rng(seed, block):
    return np.random.default_rng([int(seed), int(block)])


def noise_rows(spec, row_start, row_stop, p):
    """Noise for rows ``[row_start, row_stop)`` of a release.

    Each block of ``ROW_BLOCK`` rows has its own RNG stream derived from
    ``(seed, block index)``, so any row range can be produced independently
    and concatenating ranges reproduces the full noise matrix.
    """
    if row_stop < row_start:
        raise ValueError("row_stop < row_start")
    out = np.empty((row_stop - row_start, p), dtype=np.int64 if spec.family is Family.DISCRETE else float)
    first, last = row_start // ROW_BLOCK, (row_stop - 1) // ROW_BLOCK if row_stop > row_start else -1
    for block in range(first, last + 1):
        b0 = block * ROW_BLOCK
        hi = min(row_stop, b0 + ROW_BLOCK)
        rng = _block_rng(spec.seed, block)
        if spec.family is Family.DISCRETE:
            chunk = _discrete_draw(spec.sigma, (hi - b0, p), rng)
        else:
            chunk = rng.standard_normal((hi - b0, p)) * spec.sigma
        lo = max(row_start, b0)
        out[lo - row_start : hi - row_start] = chunk[lo - b0 :]
    return out


def encrypt_continuous(X, spec):
    """Release ``X + E`` with ``E`` i.i.d. ``N(0, sigma^2)``; ``X`` must be centered."""
    spec = spec if isinstance(spec, NoiseSpec) else NoiseSpec(**spec)
    if spec.family is not Family.CONTINUOUS:
        raise ValueError("encrypt_continuous needs a continuous NoiseSpec")
    X = np.asarray(X, dtype=float)
    if not is_centered(X):
        raise ValueError("data must be column-centered before encryption")
    E = noise_rows(spec, 0, X.shape[0], X.shape[1])
    return EncryptedRelease(X + E, Family.CONTINUOUS, spec.sigma)


def encrypt_discrete(X, spec):
    """Release ``center(X) + E`` with ``E`` i.i.d. discrete Gaussian on the integers.

    ``X`` is the raw integer-valued data; it is centered here, so the noise
    added to each entry is an exact integer.
    """
    spec = spec if isinstance(spec, NoiseSpec) else NoiseSpec(**spec)
    if spec.family is not Family.DISCRETE:
        raise ValueError("encrypt_discrete needs a discrete NoiseSpec")
    X = np.asarray(X, dtype=float)
    if not np.all(np.abs(X - np.round(X)) <= 1e-9):
        raise ValueError("discrete encryption requires integer-valued raw data")
    Xc = center(X)
    E = noise_rows(spec, 0, X.shape[0], X.shape[1])
    return EncryptedRelease(Xc + E, Family.DISCRETE, spec.sigma, discrete_variance(spec.sigma))


def encrypt(X, spec):
    spec = spec if isinstance(spec, NoiseSpec) else NoiseSpec(**spec)
    if spec.family is Family.DISCRETE:
        return encrypt_discrete(X, spec)
    return encrypt_continuous(X, spec)


# ---------------------------------------------------------------------------
# discrete Gaussian


def discrete_support(sigma):
    half = int(math.ceil(TAIL_SIGMAS * sigma))
    return np.arange(-half, half + 1)


def discrete_pmf(sigma):
    """Support and probabilities of the discrete Gaussian, truncated at 12 sigma."""
    z = discrete_support(sigma)
    w = np.exp(-(z.astype(float) ** 2) / (2.0 * sigma * sigma))
    return z, w / w.sum()


def _discrete_draw(sigma, size, rng):
    z, pmf = discrete_pmf(sigma)
    cdf = np.cumsum(pmf)
    cdf[-1] = 1.0
    u = rng.random(size)
    idx = np.searchsorted(cdf, u, side="right")
    return z[np.minimum(idx, z.size - 1)]


def sample_discrete_gaussian(sigma, size, seed=None):
    """Exact inverse-CDF draws from the discrete Gaussian ``N_Z(0, sigma^2)``.

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return _discrete_draw(sigma, size, rng)


def discrete_variance(sigma):
    """Variance of ``N_Z(0, sigma^2)`` by exact series summation.

    For ``sigma < 1`` the series over the integers is summed directly on
    ``[-ceil(12 sigma)-1, ceil(12 sigma)+1]``. For ``sigma >= 1`` the dual
    (Poisson-summation) series is used instead: it gives the deficit
    ``sigma^2 - Var`` to full relative precision, where the direct sum loses
    it to cancellation. The variance is strictly below ``sigma^2``; when the
    deficit is below one ulp the result is rounded toward zero so that the
    strict inequality survives in floating point.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    s2 = float(sigma) ** 2
    if sigma < 1.0:
        half = int(math.ceil(TAIL_SIGMAS * sigma)) + 1
        z = np.arange(-half, half + 1, dtype=float)
        w = np.exp(-(z**2) / (2.0 * s2))
        var = float(np.sum(z**2 * w) / np.sum(w))
    else:
        k = np.arange(1, 6, dtype=float)
        q = np.exp(-2.0 * math.pi**2 * s2 * k**2)
        deficit = 4.0 * math.pi**2 * s2 * 2.0 * np.sum(k**2 * q) / (1.0 + 2.0 * np.sum(q))
        var = s2 * (1.0 - deficit)
    return min(var, float(np.nextafter(s2, 0.0)))


def discrete_variance_bound(sigma):
    """Upper bound ``sigma^2 (1 - 4 pi^2 sigma^2 / (exp(4 pi^2 sigma^2) - 1))``."""
    a = 4.0 * math.pi**2 * sigma**2
    # a / (e^a - 1) written with e^-a so large sigma does not overflow
    return sigma**2 * (1.0 - a * math.exp(-a) / -math.expm1(-a))


# ---------------------------------------------------------------------------
# accounting


def sensitivity_default(X):
    """``2 (max X - min X)^2 / n`` over all entries."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if n < 1:
        raise ValueError("need n >= 1")
    return 2.0 * (X.max() - X.min()) ** 2 / n


def min_column_energy(X):
    """``C = min_k (1/n^2) sum_l X_lk^2``."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    return float(np.min(np.sum(X**2, axis=0)) / n**2)


def min_magnitude(X):
    """``K = (1/n) min |x_li|``."""
    X = np.asarray(X, dtype=float)
    return float(np.min(np.abs(X)) / X.shape[0])


def gdp_mu_continuous(X, sigma, delta_f=None):
    """GDP parameter ``delta_f / (sigma sqrt(2C))`` of continuous encryption."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if delta_f is None:
        delta_f = sensitivity_default(X)
    C = min_column_energy(X)
    if C <= 0:
        raise ValueError("privacy bound undefined: some column is identically zero (C = 0)")
    return delta_f / (sigma * math.sqrt(2.0 * C))


def gdp_mu_discrete(X, sigma, delta_f=None):
    """GDP parameter ``(delta_f + 2K) / (sqrt(2n) K sigma)`` of discrete encryption."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    X = np.asarray(X, dtype=float)
    if delta_f is None:
        delta_f = sensitivity_default(X)
    K = min_magnitude(X)
    if K <= 0:
        raise ValueError(
            "discrete privacy bound assumes every data entry is nonzero (K > 0); "
            "shift the data away from zero first"
        )
    n = X.shape[0]
    return (delta_f + 2.0 * K) / (math.sqrt(2.0 * n) * K * sigma)


def delta_of_epsilon(mu, epsilon):
    """Dual (epsilon, delta) curve of mu-GDP.

    ``delta = Phi(-eps/mu + mu/2) - exp(eps) Phi(-eps/mu - mu/2)``, evaluated
    as ``Phi(a) * (1 - exp(eps + log Phi(b) - log Phi(a)))`` so that neither
    the ``exp(eps)`` factor nor the cancellation between the terms
    overflows or loses precision.
    """
    if not mu > 0:
        raise ValueError("mu must be positive")
    eps = np.asarray(epsilon, dtype=float)
    if np.any(eps < 0):
        raise ValueError("epsilon must be non-negative")
    a = -eps / mu + mu / 2.0
    b = -eps / mu - mu / 2.0
    log_a = special.log_ndtr(a)
    log_ratio = eps + special.log_ndtr(b) - log_a
    delta = np.exp(log_a) * -np.expm1(log_ratio)
    delta = np.clip(delta, 0.0, 1.0)
    return float(delta) if delta.ndim == 0 else delta


def signal_power(X):
    Xc = center(X)
    return float(np.mean(Xc**2))


def snr_accounting(X, snr_db, delta_f=None):
    """Noise scale for a target SNR and the matching ``epsilon = delta_f / sigma_n``.

    Returns ``(sigma_n, epsilon_simple)``.
    """
    power = signal_power(X)
    if power <= 0:
        raise ValueError("data has zero signal power; SNR is undefined")
    sigma_n = math.sqrt(power) * 10.0 ** (-snr_db / 20.0)
    if delta_f is None:
        delta_f = sensitivity_default(X)
    eps = delta_f / sigma_n if sigma_n > 0 else math.inf
    return sigma_n, eps


def privacy_report(X, family, sigma, delta_f=None, epsilons=None):
    """Audit record for releasing centered ``X`` with noise scale ``sigma``."""
    family = Family(family)
    X = np.asarray(X, dtype=float)
    if delta_f is None:
        delta_f = sensitivity_default(X)
    if family is Family.DISCRETE:
        mu = gdp_mu_discrete(X, sigma, delta_f)
        C, K = None, min_magnitude(X)
    else:
        mu = gdp_mu_continuous(X, sigma, delta_f)
        C, K = min_column_energy(X), None
    power = signal_power(X)
    snr_db = 10.0 * math.log10(power / sigma**2) if power > 0 else -math.inf
    if epsilons is None:
        epsilons = np.linspace(0.0, max(4.0 * mu + mu**2, 1.0), 41)
    deltas = delta_of_epsilon(mu, epsilons) if mu > 0 else np.zeros(len(epsilons))
    return PrivacyReport(
        family=family.value,
        sigma=float(sigma),
        mu=float(mu),
        delta_f=float(delta_f),
        C=C,
        K=K,
        epsilon_simple=float(delta_f / sigma),
        snr_db=float(snr_db),
        signal_power=power,
        delta_curve=list(zip(np.asarray(epsilons).tolist(), np.atleast_1d(deltas).tolist())),
    )
