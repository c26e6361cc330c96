"""One-step debiasing of a precision-matrix estimate and bootstrap scores."""

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .errors import DegenerateDenominator, InvalidInput
from .quantile import multipliers
from .solvers import DEFAULT_CONFIG, glasso, glasso_cv

DENOM_FLOOR = 1e-10


@dataclass
class DebiasedMatrix:
    """One-step estimate, its standardized version and the input estimate."""

    theta_d: np.ndarray
    theta_std: np.ndarray
    theta_raw: np.ndarray
    n: int


def onestep_debias(theta_hat, sigma_hat, n=0):
    """Debias ``theta_hat`` with one Newton-type correction.

    ``theta_d[j, k] = theta[j, k] - theta_j'(S theta_k - e_k) / (theta_j' S_j)``,
    symmetrized as ``(A + A') / 2`` and standardized to unit diagonal.

    Parameters
    ----------
    theta_hat : ndarray, shape (d, d)
        Initial precision estimate, e.g. from :func:`startrek.solvers.glasso`.
    sigma_hat : ndarray, shape (d, d)
        Sample covariance ``X'X/n``.
    n : int
        Sample size, stored on the result.
    """
    theta = np.asarray(theta_hat, dtype=float)
    S = np.asarray(sigma_hat, dtype=float)
    if theta.ndim != 2 or theta.shape[0] != theta.shape[1] or theta.shape != S.shape:
        raise InvalidInput("theta_hat and sigma_hat must be square with matching shapes")
    if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(S))):
        raise InvalidInput("non-finite input")
    bad = np.flatnonzero(np.diag(theta) <= 0)
    if bad.size:
        raise DegenerateDenominator("theta_hat diagonal must be positive", int(bad[0]))
    TS = theta @ S
    denom = np.diag(TS)
    small = np.flatnonzero(np.abs(denom) < DENOM_FLOOR)
    if small.size:
        raise DegenerateDenominator("theta_j' S_j is numerically zero", int(small[0]))
    resid = TS @ theta.T - theta
    theta_d = theta - resid / denom[:, None]
    theta_d = 0.5 * (theta_d + theta_d.T)
    diag = np.diag(theta_d)
    bad = np.flatnonzero(diag <= 0)
    if bad.size:
        raise DegenerateDenominator("debiased diagonal is not positive", int(bad[0]))
    scale = np.sqrt(diag)
    theta_std = theta_d / np.outer(scale, scale)
    np.fill_diagonal(theta_std, 1.0)
    return DebiasedMatrix(theta_d, theta_std, theta, int(n))


def standardize_precision(theta):
    """``theta[j, k] / sqrt(theta[j, j] * theta[k, k])``."""
    theta = np.asarray(theta, dtype=float)
    s = np.sqrt(np.diag(theta))
    out = theta / np.outer(s, s)
    np.fill_diagonal(out, 1.0)
    return out


def upper_edges(d):
    """All unordered pairs ``(j, k)`` with ``j < k`` in row-major order."""
    j, k = np.triu_indices(d, 1)
    return list(zip(j.tolist(), k.tolist()))


@dataclass
class ScoreTensor:
    """Per-observation bootstrap scores, one column per edge.

    ``scores[i, e]`` is ``theta_j'(X_i X_i' theta_k - e_k) / sqrt(theta_jj theta_kk)``
    for ``edge_universe[e] = (j, k)``.
    """

    scores: np.ndarray
    edge_universe: List[Tuple[int, int]]

    @property
    def n(self):
        return self.scores.shape[0]


def _check_theta_diag(theta):
    bad = np.flatnonzero(np.diag(theta) <= 0)
    if bad.size:
        raise DegenerateDenominator("theta_hat diagonal must be positive", int(bad[0]))


def build_scores(theta_hat, X, edge_universe=None):
    """Score matrix of shape ``(n, len(edge_universe))``.

    Uses the identity ``theta_j' X_i X_i' theta_k = (X_i'theta_j)(X_i'theta_k)``,
    so the cost is one ``n x d`` product plus ``n`` operations per edge.
    Defaults to all unordered pairs.
    """
    theta = np.asarray(theta_hat, dtype=float)
    X = np.asarray(X, dtype=float)
    d = theta.shape[0]
    if X.ndim != 2 or X.shape[1] != d:
        raise InvalidInput("X must have one column per node")
    _check_theta_diag(theta)
    edges = upper_edges(d) if edge_universe is None else [tuple(map(int, e)) for e in edge_universe]
    if len(set(edges)) != len(edges):
        raise InvalidInput("edge universe contains duplicates")
    if not edges:
        raise InvalidInput("edge universe is empty")
    ej = np.array([e[0] for e in edges])
    ek = np.array([e[1] for e in edges])
    if ej.min() < 0 or ek.min() < 0 or ej.max() >= d or ek.max() >= d:
        raise InvalidInput("edge universe references invalid node indices")
    A = X @ theta.T  # A[i, j] = X_i' theta_j
    scale = np.sqrt(np.diag(theta))
    scores = (A[:, ej] * A[:, ek] - theta[ej, ek][None, :]) / (scale[ej] * scale[ek])[None, :]
    return ScoreTensor(scores, edges)


def row_scores(theta_hat, X, j, A=None):
    """Scores for the edges ``(j, l)``, ``l != j``, in increasing ``l``."""
    theta = np.asarray(theta_hat, dtype=float)
    if A is None:
        A = np.asarray(X, dtype=float) @ theta.T
    d = theta.shape[0]
    others = np.delete(np.arange(d), j)
    scale = np.sqrt(np.diag(theta))
    out = (A[:, [j]] * A[:, others] - theta[j, others][None, :]) / (scale[j] * scale[others])[None, :]
    return others, out


class GGMBootstrap:
    """Row provider for the multiplier bootstrap of a graphical model.

    Multipliers ``xi`` (shape ``(B, n)``) are drawn once; row ``j`` draws are
    ``|xi @ scores_j| / sqrt(n)`` over the edges ``(j, l)``, ``l != j``. Every
    row therefore shares the same multipliers, as in a single bootstrap over
    the whole edge set, but the full ``B x d(d-1)/2`` array is never stored.
    """

    def __init__(self, theta_hat, X, B, seed):
        self.theta = np.asarray(theta_hat, dtype=float)
        X = np.asarray(X, dtype=float)
        _check_theta_diag(self.theta)
        if B < 1:
            raise InvalidInput("B must be >= 1")
        self.n = X.shape[0]
        self.A = X @ self.theta.T
        self.xi = multipliers(seed, B, self.n)

    @property
    def B(self):
        return self.xi.shape[0]

    def __call__(self, j):
        others, sc = row_scores(self.theta, None, j, A=self.A)
        return others, np.abs(self.xi @ sc) / np.sqrt(self.n)


@dataclass
class GGMFit:
    debiased: DebiasedMatrix
    theta_hat: np.ndarray
    sigma_hat: np.ndarray
    lam: float


def fit_ggm(X, lam="cv", cfg=None, lambda_grid=None):
    """Graphical Lasso (cross-validated or fixed penalty) followed by debiasing."""
    cfg = DEFAULT_CONFIG if cfg is None else cfg
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    S = X.T @ X / n
    if isinstance(lam, str):
        if lam != "cv":
            raise InvalidInput(f"lambda policy must be 'cv' or a number, got {lam!r}")
        theta_hat, lam_val = glasso_cv(X, lambda_grid, cfg)
    else:
        lam_val = float(lam)
        theta_hat = glasso(S, lam_val, cfg).theta
    return GGMFit(onestep_debias(theta_hat, S, n), theta_hat, S, lam_val)
