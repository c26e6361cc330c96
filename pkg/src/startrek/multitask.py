"""Hub-response selection in multitask linear regression.

Each response is fit by the scaled Lasso, debiased with a decorrelating
matrix ``M`` shared by all responses, and tested row-wise with Gaussian
quantiles of ``N(0, sigma_j^2 M Sigma M')``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput
from .quantile import _seed_key, gaussian_ensemble_from_factor, psd_factor
from .select import HypothesisConfig, startrek
from .solvers import DEFAULT_CONFIG, default_lambda0, default_mu, m_program, scaled_lasso


@dataclass
class MultitaskFit:
    theta_d: np.ndarray
    theta_hat: np.ndarray
    sigma: np.ndarray
    M: np.ndarray
    Sigma_hat: np.ndarray
    n: int
    m_fallback: np.ndarray
    degenerate: np.ndarray


def fit_multitask(X, Y, cfg=DEFAULT_CONFIG):
    """Debiased scaled-Lasso estimates for every response column of ``Y``.

    Parameters
    ----------
    X : ndarray, shape (n, d2)
        Shared design.
    Y : ndarray, shape (n, d1)
        One column per response.
    cfg : SolverConfig
        ``cfg.lam`` / ``cfg.mu`` override the defaults
        ``lambda0 = c sqrt(log d2 / n)`` and ``mu = a sqrt(log d2 / n)``.

    Returns
    -------
    MultitaskFit
        ``theta_d[j] = theta_hat[j] + M X'(Y_j - X theta_hat[j]) / n``.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.ndim != 2 or Y.shape[0] != X.shape[0]:
        raise InvalidInput("X and Y must have the same number of rows")
    n, d2 = X.shape
    if n < 2:
        raise InvalidInput("need at least two observations")
    d1 = Y.shape[1]
    Sigma_hat = X.T @ X / n
    mu = cfg.mu if cfg.mu is not None else default_mu(n, d2, cfg.mu_const)
    lambda0 = cfg.lam if cfg.lam is not None else default_lambda0(n, d2, cfg.lambda_const)
    M, fallback = m_program(Sigma_hat, mu, cfg)
    theta_hat = np.empty((d1, d2))
    theta_d = np.empty((d1, d2))
    sigma = np.empty(d1)
    degenerate = np.zeros(d1, dtype=bool)
    for j in range(d1):
        fit = scaled_lasso(X, Y[:, j], lambda0, cfg)
        theta_hat[j] = fit.beta
        sigma[j] = fit.sigma
        degenerate[j] = fit.degenerate
        theta_d[j] = fit.beta + M @ (X.T @ (Y[:, j] - X @ fit.beta)) / n
    return MultitaskFit(theta_d, theta_hat, sigma, M, Sigma_hat, n, fallback, degenerate)


class MultitaskRows:
    """Row provider: response ``j`` gets ``|Z|`` draws, ``Z ~ N(0, sigma_j^2 M Sigma M')``.

    Response ``j`` uses the random streams keyed by ``(*seed, j)``.
    """

    def __init__(self, fit, B, seed):
        self.fit = fit
        self.B = B
        self.seed = tuple(_seed_key(seed))
        self.factor = psd_factor(fit.M @ fit.Sigma_hat @ fit.M.T)
        self.partners = np.arange(fit.theta_d.shape[1])

    def ensemble(self, j):
        return gaussian_ensemble_from_factor(
            self.factor, float(self.fit.sigma[j]), self.B, self.seed + (int(j),)
        )

    def __call__(self, j):
        return self.partners, self.ensemble(j).draws


def select_hub_responses(fit, cfg, B=4000, seed=0, threads=1):
    """StarTrek selection of responses with at least ``cfg.k_tau`` active predictors."""
    if not isinstance(cfg, HypothesisConfig):
        raise InvalidInput("cfg must be a HypothesisConfig")
    provider = MultitaskRows(fit, B, seed)
    return startrek(fit.theta_d, provider, cfg, fit.n, threads=threads)
