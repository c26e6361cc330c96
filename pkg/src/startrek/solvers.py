"""Coordinate-descent kernels for the convex programs used by the pipeline.

All four problems share one inner routine, :func:`_cd_quadratic`, which
minimizes ``0.5 * b'Qb - c'b + lam * ||b||_1`` by cyclic coordinate descent:

* the Lasso (``Q = X'X/n``, ``c = X'y/n``),
* each column subproblem of the graphical Lasso (``Q = W_11``, ``c = s_12``),
* the scaled Lasso (a Lasso at penalty ``sigma * lambda0``),
* each row of the decorrelating matrix ``M``. The box-constrained program
  ``min m'Sm  s.t. ||Sm - e_i||_inf <= mu`` has the Lasso-type problem with
  ``Q = S``, ``c = e_i``, ``lam = mu`` as its dual, and the dual solution is
  primal optimal.
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
from numba import njit

from .errors import ConvergenceError, InvalidInput

SIGMA_FLOOR = 1e-8


@dataclass(frozen=True)
class SolverConfig:
    """Tuning and stopping parameters shared by the solvers.

    ``lam`` and ``mu`` are optional overrides; when left as ``None`` the
    callers derive them from ``lambda_const`` / ``mu_const`` and the data
    dimensions.
    """

    lam: Optional[float] = None
    mu: Optional[float] = None
    max_iter: int = 10_000
    tol: float = 1e-7
    cv_folds: int = 5
    cv_seed: int = 0
    lambda_const: float = 1.1
    mu_const: float = 1.0

    def __post_init__(self):
        if not self.tol > 0:
            raise InvalidInput(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise InvalidInput(f"max_iter must be >= 1, got {self.max_iter}")
        if self.cv_folds < 2:
            raise InvalidInput(f"cv_folds must be >= 2, got {self.cv_folds}")
        if self.lam is not None and self.lam < 0:
            raise InvalidInput("lam must be nonnegative")
        if self.mu is not None and self.mu < 0:
            raise InvalidInput("mu must be nonnegative")


DEFAULT_CONFIG = SolverConfig()


# ---------------------------------------------------------------------------
# numba kernels


@njit(cache=True, nogil=True)
def _soft(z, t):
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


@njit(cache=True, nogil=True)
def _kkt_residual(beta, grad, lam):
    res = 0.0
    for k in range(beta.shape[0]):
        g = grad[k]
        if beta[k] > 0.0:
            v = abs(g + lam)
        elif beta[k] < 0.0:
            v = abs(g - lam)
        else:
            v = abs(g) - lam
        if v > res:
            res = v
    return res


@njit(cache=True, nogil=True)
def _cd_quadratic(Q, c, lam, beta, max_iter, tol, blowup):
    """Cyclic coordinate descent; ``beta`` is updated in place.

    Returns (sweeps, kkt_residual, status) with status 0 = converged,
    1 = max_iter reached, 2 = iterates exceeded ``blowup`` in magnitude.
    """
    p = beta.shape[0]
    grad = Q @ beta - c
    res = _kkt_residual(beta, grad, lam)
    if res <= tol:
        return 0, res, 0
    for sweep in range(1, max_iter + 1):
        for k in range(p):
            qkk = Q[k, k]
            if qkk <= 0.0:
                continue
            old = beta[k]
            new = _soft(qkk * old - grad[k], lam) / qkk
            if new != old:
                diff = new - old
                beta[k] = new
                for m in range(p):
                    grad[m] += Q[m, k] * diff
                if abs(new) > blowup:
                    return sweep, np.inf, 2
        res = _kkt_residual(beta, grad, lam)
        if res <= tol:
            # confirm against a freshly computed gradient (drift guard)
            grad = Q @ beta - c
            res = _kkt_residual(beta, grad, lam)
            if res <= tol:
                return sweep, res, 0
    grad = Q @ beta - c
    return max_iter, _kkt_residual(beta, grad, lam), 1


@njit(cache=True, nogil=True)
def _glasso_kernel(S, lam, W, Bm, max_iter, tol, inner_max, inner_tol):
    """Block coordinate descent over columns with an unpenalized diagonal.

    ``W`` (covariance estimate) and ``Bm`` (column j holds the regression
    coefficients of node j, zero at position j) are updated in place.
    Returns (sweeps, max_abs_change_of_last_sweep).
    """
    d = S.shape[0]
    u = np.empty(d)
    delta = np.inf
    for it in range(1, max_iter + 1):
        delta = 0.0
        for j in range(d):
            u[:] = 0.0
            for m in range(d):
                b = Bm[m, j]
                if m != j and b != 0.0:
                    for k in range(d):
                        u[k] += W[k, m] * b
            # full passes alternate with passes over the active set only
            full = True
            for inner in range(inner_max):
                maxchg = 0.0
                for k in range(d):
                    if k == j or (not full and Bm[k, j] == 0.0):
                        continue
                    wkk = W[k, k]
                    old = Bm[k, j]
                    z = S[k, j] - (u[k] - wkk * old)
                    new = _soft(z, lam) / wkk
                    if new != old:
                        diff = new - old
                        Bm[k, j] = new
                        for m in range(d):
                            u[m] += W[m, k] * diff
                        if abs(diff) > maxchg:
                            maxchg = abs(diff)
                if maxchg < inner_tol:
                    if full:
                        break
                    full = True
                else:
                    full = False
            for k in range(d):
                if k == j:
                    continue
                chg = abs(u[k] - W[k, j])
                if chg > delta:
                    delta = chg
                W[k, j] = u[k]
                W[j, k] = u[k]
        if delta < tol:
            return it, delta
    return max_iter, delta


# ---------------------------------------------------------------------------
# public API


def _check_finite(name, a):
    if not np.all(np.isfinite(a)):
        raise InvalidInput(f"{name} contains non-finite entries")


def _as_cov(S, name="S"):
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1] or S.shape[0] < 1:
        raise InvalidInput(f"{name} must be a square matrix, got shape {S.shape}")
    _check_finite(name, S)
    scale = max(1.0, float(np.max(np.abs(S))))
    if np.max(np.abs(S - S.T)) > 1e-12 * scale:
        raise InvalidInput(f"{name} is not symmetric")
    if np.any(np.diag(S) <= 0):
        raise InvalidInput(f"{name} must have a strictly positive diagonal")
    return 0.5 * (S + S.T)


def lasso_gram(Q, c, lam, cfg=DEFAULT_CONFIG, beta0=None):
    """Lasso in Gram form: minimize ``0.5 b'Qb - c'b + lam ||b||_1``."""
    Q = np.ascontiguousarray(Q, dtype=float)
    c = np.ascontiguousarray(c, dtype=float)
    beta = np.zeros(c.shape[0]) if beta0 is None else np.array(beta0, dtype=float)
    sweeps, res, status = _cd_quadratic(Q, c, float(lam), beta, cfg.max_iter, cfg.tol, 1e300)
    if status != 0:
        raise ConvergenceError("lasso coordinate descent did not converge", sweeps, res)
    return beta


def lasso(X, y, lam, cfg=DEFAULT_CONFIG, beta0=None):
    """Solve ``min_b (1/2n)||y - Xb||^2 + lam ||b||_1``.

    Stops once the largest subgradient (KKT) violation is at most ``cfg.tol``.

    Parameters
    ----------
    X : ndarray, shape (n, p)
    y : ndarray, shape (n,)
    lam : float
        Nonnegative penalty level.

    Returns
    -------
    beta : ndarray, shape (p,)
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise InvalidInput(f"X must be a nonempty 2-d array, got shape {X.shape}")
    if y.shape[0] != X.shape[0]:
        raise InvalidInput("X and y have inconsistent numbers of rows")
    if lam < 0:
        raise InvalidInput("lam must be nonnegative")
    _check_finite("X", X)
    _check_finite("y", y)
    n = X.shape[0]
    return lasso_gram(X.T @ X / n, X.T @ y / n, lam, cfg, beta0)


def lasso_kkt_residual(X, y, beta, lam):
    """Largest subgradient violation of ``beta`` for the Lasso problem."""
    n = X.shape[0]
    grad = X.T @ (X @ beta - y) / n
    return float(_kkt_residual(np.asarray(beta, dtype=float), grad, float(lam)))


class GlassoFit(NamedTuple):
    theta: np.ndarray
    W: np.ndarray


def glasso(S, lam, cfg=DEFAULT_CONFIG, init=None):
    """Graphical Lasso with penalty on off-diagonal entries only.

    Minimizes ``-logdet(T) + tr(S T) + lam * sum_{j != k} |T_jk|`` by block
    coordinate descent over columns of the covariance estimate ``W``.

    Parameters
    ----------
    S : ndarray, shape (d, d)
        Sample covariance.
    lam : float
    init : (theta, W), optional
        Warm start, e.g. the solution at a neighbouring penalty.

    Returns
    -------
    GlassoFit
        ``theta`` is the symmetric positive definite precision estimate and
        ``W`` the matching covariance estimate.
    """
    S = _as_cov(S)
    if lam < 0:
        raise InvalidInput("lam must be nonnegative")
    d = S.shape[0]
    if init is None:
        W = S.copy()
        Bm = np.zeros((d, d))
    else:
        theta0, W0 = init
        W = np.array(W0, dtype=float)
        np.fill_diagonal(W, np.diag(S))
        Bm = -np.asarray(theta0, dtype=float) / np.diag(theta0)[None, :]
        np.fill_diagonal(Bm, 0.0)
    if d > 1:
        sweeps, delta = _glasso_kernel(
            S, float(lam), W, Bm, cfg.max_iter, cfg.tol, 1000, cfg.tol * 0.1
        )
        if not delta < cfg.tol:
            raise ConvergenceError("graphical lasso did not converge", sweeps, delta)
    theta = np.empty((d, d))
    for j in range(d):
        bj = Bm[:, j]
        denom = W[j, j] - W[:, j] @ bj
        if not denom > 0:
            raise ConvergenceError("graphical lasso lost positive definiteness", 0, denom)
        theta[:, j] = -bj / denom
        theta[j, j] = 1.0 / denom
    theta = 0.5 * (theta + theta.T)
    W = 0.5 * (W + W.T)
    try:
        np.linalg.cholesky(theta)
    except np.linalg.LinAlgError:
        raise ConvergenceError("graphical lasso estimate is not positive definite", 0, np.nan)
    return GlassoFit(theta, W)


def default_lambda_grid(S, n_lambda=20, ratio=0.01):
    """Log-spaced descending grid from the largest off-diagonal |S_jk|."""
    S = np.asarray(S, dtype=float)
    off = np.abs(S - np.diag(np.diag(S)))
    lam_max = float(off.max()) if S.shape[0] > 1 else 1.0
    if lam_max <= 0:
        lam_max = 1.0
    return np.geomspace(lam_max, ratio * lam_max, n_lambda)


def fold_partition(n, folds, seed):
    """Deterministic split of ``range(n)`` into ``folds`` test index sets."""
    if n < folds:
        raise InvalidInput(f"n={n} is smaller than the number of folds {folds}")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, folds)]


def gaussian_loglik(theta, S):
    """Held-out Gaussian log-likelihood (up to constants): logdet - tr(S theta)."""
    sign, logdet = np.linalg.slogdet(theta)
    if sign <= 0:
        return -np.inf
    return float(logdet - np.sum(S * theta))


def cv_scores(X, lambda_grid, cfg=DEFAULT_CONFIG):
    """Held-out log-likelihood for each (fold, lambda); shape (folds, len(grid))."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    grid = np.asarray(lambda_grid, dtype=float)
    scores = np.empty((cfg.cv_folds, grid.size))
    for f, test in enumerate(fold_partition(n, cfg.cv_folds, cfg.cv_seed)):
        train = np.setdiff1d(np.arange(n), test, assume_unique=True)
        Xtr, Xte = X[train], X[test]
        S_tr = Xtr.T @ Xtr / Xtr.shape[0]
        S_te = Xte.T @ Xte / Xte.shape[0]
        init = None
        for i, lam in enumerate(grid):
            fit = glasso(S_tr, lam, cfg, init=init)
            init = fit
            scores[f, i] = gaussian_loglik(fit.theta, S_te)
    return scores


def glasso_cv(X, lambda_grid=None, cfg=DEFAULT_CONFIG):
    """Graphical Lasso with the penalty chosen by K-fold cross-validation.

    The criterion is the held-out Gaussian log-likelihood averaged over folds;
    the winning penalty is refit on the full data. ``X`` is assumed centred:
    the sample covariance is ``X'X/n``.

    Returns
    -------
    theta : ndarray, shape (d, d)
    lambda_star : float
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise InvalidInput("X must be 2-d")
    _check_finite("X", X)
    n = X.shape[0]
    if n < cfg.cv_folds:
        raise InvalidInput(f"n={n} is smaller than cv_folds={cfg.cv_folds}")
    S = X.T @ X / n
    grid = default_lambda_grid(S) if lambda_grid is None else np.asarray(lambda_grid, dtype=float)
    if grid.size == 0 or np.any(grid <= 0):
        raise InvalidInput("lambda grid must be nonempty and strictly positive")
    if np.any(np.diff(grid) >= 0):
        raise InvalidInput("lambda grid must be sorted in strictly descending order")
    if grid.size == 1:
        lam_star = float(grid[0])
    else:
        mean_scores = cv_scores(X, grid, cfg).mean(axis=0)
        lam_star = float(grid[int(np.argmax(mean_scores))])
    return glasso(S, lam_star, cfg).theta, lam_star


class ScaledLassoFit(NamedTuple):
    beta: np.ndarray
    sigma: float
    degenerate: bool
    n_iter: int


def scaled_lasso(X, y, lambda0, cfg=DEFAULT_CONFIG):
    """Joint estimate of coefficients and noise level.

    Alternates a Lasso at penalty ``sigma * lambda0`` with the update
    ``sigma = ||y - X beta|| / sqrt(n)`` until ``sigma`` moves by at most
    ``cfg.tol``. A residual norm below ``SIGMA_FLOOR`` is clamped and flagged
    via ``degenerate``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if not lambda0 > 0:
        raise InvalidInput("lambda0 must be positive")
    _check_finite("X", X)
    _check_finite("y", y)
    n, p = X.shape
    Q = X.T @ X / n
    c = X.T @ y / n
    beta = np.zeros(p)
    sigma = float(np.linalg.norm(y) / np.sqrt(n))
    if sigma < SIGMA_FLOOR:
        return ScaledLassoFit(beta, SIGMA_FLOOR, True, 0)
    for it in range(1, cfg.max_iter + 1):
        beta = lasso_gram(Q, c, sigma * lambda0, cfg, beta0=beta)
        new_sigma = float(np.linalg.norm(y - X @ beta) / np.sqrt(n))
        if new_sigma < SIGMA_FLOOR:
            return ScaledLassoFit(beta, SIGMA_FLOOR, True, it)
        if abs(new_sigma - sigma) <= cfg.tol:
            return ScaledLassoFit(beta, new_sigma, False, it)
        sigma = new_sigma
    raise ConvergenceError("scaled lasso did not converge", cfg.max_iter, abs(new_sigma - sigma))


class MProgramFit(NamedTuple):
    M: np.ndarray
    fallback: np.ndarray


def m_program(Sigma_hat, mu, cfg=DEFAULT_CONFIG):
    """Rows ``m_i = argmin m'Sm  s.t. ||S m - e_i||_inf <= mu``.

    A row whose program cannot be solved (infeasible or divergent) is set to
    ``e_i / S_ii`` and marked in ``fallback``.
    """
    S = _as_cov(Sigma_hat, "Sigma_hat")
    if not mu > 0:
        raise InvalidInput("mu must be positive")
    d = S.shape[0]
    tol = min(cfg.tol, 1e-10)
    M = np.zeros((d, d))
    fallback = np.zeros(d, dtype=bool)
    for i in range(d):
        e = np.zeros(d)
        e[i] = 1.0
        m = np.zeros(d)
        _, _, status = _cd_quadratic(S, e, float(mu), m, cfg.max_iter, tol, 1e12)
        if status == 0 and np.max(np.abs(S @ m - e)) <= mu + 1e-9:
            M[i] = m
        else:
            M[i] = e / S[i, i]
            fallback[i] = True
    return MProgramFit(M, fallback)


def default_mu(n, d2, a=1.0):
    """``a * sqrt(log d2 / n)``, with ``d2`` floored at 2 so the level stays positive."""
    return a * np.sqrt(np.log(max(d2, 2)) / n)


def default_lambda0(n, d2, c=1.1):
    """Scale-free Lasso level ``c * sqrt(log d2 / n)`` (multiplied by sigma inside the scaled Lasso)."""
    return c * np.sqrt(np.log(max(d2, 2)) / n)
