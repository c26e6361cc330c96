"""Bootstrap ensembles of edge-wise maxima and their quantile / p-value queries.

An ensemble stores, for every draw ``b`` and every edge ``e`` of a fixed
edge universe, the absolute bootstrap statistic ``draws[b, e]``. The maximum
statistic over any sub-edge-set ``E`` is then the row-wise maximum over the
columns of ``E``, so one ensemble answers quantile queries for every subset.

Random streams are keyed per chunk of ``CHUNK`` consecutive draws: chunk
``c`` (draws ``c * CHUNK`` to ``(c + 1) * CHUNK - 1``) uses
``numpy.random.Generator(PCG64(SeedSequence([*seed, c])))``. The chunk
partition depends only on ``B``, so results do not depend on how chunks are
distributed over threads.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import InvalidCovariance, InvalidInput

RNG_SCHEME = "numpy.random.PCG64 seeded by SeedSequence([*seed, chunk_index]), 64 draws per chunk"
CHUNK = 64
EIG_FLOOR = 1e-12

Seed = Union[int, Sequence[int]]


def _seed_key(seed):
    if seed is None:
        raise InvalidInput("a seed is required")
    if np.isscalar(seed):
        return [int(seed)]
    return [int(s) for s in seed]


def stream_rng(seed, index):
    """Generator for stream ``index`` under ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(_seed_key(seed) + [int(index)])))


def chunk_normals(seed, lo, hi, width):
    """Standard normal rows ``lo..hi-1`` of a ``(B, width)`` draw matrix; ``[lo, hi)`` must be one chunk."""
    return stream_rng(seed, lo // CHUNK).standard_normal((hi - lo, width))


def multipliers(seed, B, n):
    """Multiplier matrix ``xi`` of shape ``(B, n)`` built chunk by chunk."""
    key = _seed_key(seed)
    return np.vstack([chunk_normals(key, lo, min(lo + CHUNK, B), n) for lo in range(0, B, CHUNK)])


def _chunked(B, fn, threads):
    """Run ``fn(lo, hi)`` over fixed-size draw chunks; the partition ignores ``threads``."""
    bounds = [(lo, min(lo + CHUNK, B)) for lo in range(0, B, CHUNK)]
    if threads is None or threads <= 1 or len(bounds) == 1:
        return [fn(lo, hi) for lo, hi in bounds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda b: fn(*b), bounds))


@dataclass
class BootstrapEnsemble:
    """``B`` draws of absolute edge statistics over an ordered edge universe."""

    draws: np.ndarray
    edge_universe: List[Tuple[int, int]]
    seed: Optional[Tuple[int, ...]] = None
    _index: Dict[Tuple[int, int], int] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.draws = np.asarray(self.draws, dtype=float)
        self.edge_universe = [tuple(map(int, e)) for e in self.edge_universe]
        if self.draws.ndim != 2 or self.draws.shape[0] < 1:
            raise InvalidInput("draws must be a (B, |E|) array with B >= 1")
        if self.draws.shape[1] != len(self.edge_universe):
            raise InvalidInput("draws columns do not match the edge universe")
        self._index = {e: i for i, e in enumerate(self.edge_universe)}
        if len(self._index) != len(self.edge_universe):
            raise InvalidInput("edge universe contains duplicates")

    @property
    def B(self):
        return self.draws.shape[0]

    def columns(self, edge_set):
        if len(edge_set) == 0:
            raise InvalidInput("edge set is empty")
        try:
            return np.array([self._index[tuple(map(int, e))] for e in edge_set])
        except KeyError as exc:
            raise InvalidInput(f"edge {exc.args[0]} is not in the edge universe") from None

    def max_stat(self, edge_set=None):
        """Per-draw maximum ``T_b`` over ``edge_set`` (all edges when ``None``)."""
        if edge_set is None:
            return self.draws.max(axis=1)
        return self.draws[:, self.columns(edge_set)].max(axis=1)


def build_ensemble(scores, B, seed, threads=1):
    """Gaussian multiplier bootstrap over the score columns.

    ``draws[b, e] = |sum_i xi_{b,i} scores[i, e]| / sqrt(n)`` with
    ``xi_b ~ N(0, I_n)``.
    """
    if B < 1:
        raise InvalidInput("B must be >= 1")
    S = np.asarray(scores.scores, dtype=float)
    n = S.shape[0]
    key = _seed_key(seed)

    def block(lo, hi):
        xi = chunk_normals(key, lo, hi, n)
        return np.abs(xi @ S) / np.sqrt(n)

    draws = np.vstack(_chunked(B, block, threads))
    return BootstrapEnsemble(draws, scores.edge_universe, tuple(key))


def _allowed_exceedances(alpha, B):
    # floor(alpha * B), robust to representation error such as 0.7 * 10
    return int(np.floor(alpha * B + 1e-9))


def quantile_of(T, alpha):
    """Empirical upper quantile: the ``ceil((1 - alpha) B)``-th smallest of ``T``.

    ``alpha == 1`` returns 0.
    """
    if not 0 < alpha <= 1:
        raise InvalidInput(f"alpha must lie in (0, 1], got {alpha}")
    T = np.sort(np.asarray(T, dtype=float))
    B = T.size
    m = B - _allowed_exceedances(alpha, B)
    if m <= 0:
        return 0.0
    return float(T[m - 1])


def pvalue_of(T, t):
    """Exceedance fraction ``#{b : T_b >= t} / B``."""
    T = np.asarray(T, dtype=float)
    return float(np.count_nonzero(T >= t)) / T.size


def c_hat(ens, alpha, edge_set):
    """Bootstrap quantile of the maximum statistic over ``edge_set``."""
    return quantile_of(ens.max_stat(edge_set), alpha)


def c_hat_inv(ens, t, edge_set):
    """Bootstrap p-value of statistic value ``t`` over ``edge_set``.

    For ``t`` not equal to any draw, ``c_hat_inv(t) <= alpha`` iff
    ``t > c_hat(alpha)``.
    """
    return pvalue_of(ens.max_stat(edge_set), t)


def psd_factor(cov, floor=EIG_FLOOR, negative_tol=1e-6):
    """Factor ``F`` with ``F F' = cov`` after symmetrizing and flooring eigenvalues.

    Raises :class:`InvalidCovariance` for eigenvalues below ``-negative_tol``.
    """
    cov = np.asarray(cov, dtype=float)
    cov = 0.5 * (cov + cov.T)
    w, V = np.linalg.eigh(cov)
    if w.min() < -negative_tol * max(1.0, abs(w.max())):
        raise InvalidCovariance(f"covariance has a negative eigenvalue {w.min():.3e}")
    w = np.maximum(w, floor)
    try:
        return np.linalg.cholesky((V * w) @ V.T)
    except np.linalg.LinAlgError:
        return V * np.sqrt(w)


def gaussian_quantile_ensemble(M, Sigma_hat, sigma_hat, B, seed, edge_universe=None, threads=1):
    """Ensemble of ``|Z|`` with ``Z ~ N(0, sigma^2 M Sigma M')``.

    Draw ``b`` is ``sigma * L g_b`` with ``g_b`` standard normal and ``L`` a
    Cholesky factor of the eigenvalue-floored covariance ``M Sigma M'``.
    Columns default to edges ``(0, k)``.
    """
    if not sigma_hat > 0:
        raise InvalidInput("sigma_hat must be positive")
    if B < 1:
        raise InvalidInput("B must be >= 1")
    M = np.asarray(M, dtype=float)
    S = np.asarray(Sigma_hat, dtype=float)
    L = psd_factor(M @ S @ M.T)
    return gaussian_ensemble_from_factor(L, sigma_hat, B, seed, edge_universe, threads)


def gaussian_ensemble_from_factor(L, sigma_hat, B, seed, edge_universe=None, threads=1):
    """As :func:`gaussian_quantile_ensemble` with a precomputed factor ``L``."""
    d2 = L.shape[0]
    key = _seed_key(seed)
    edges = [(0, k) for k in range(d2)] if edge_universe is None else edge_universe

    def block(lo, hi):
        g = chunk_normals(key, lo, hi, L.shape[1])
        return np.abs(sigma_hat * (g @ L.T))

    draws = np.vstack(_chunked(B, block, threads))
    return BootstrapEnsemble(draws, edges, tuple(key))


class EnsembleRows:
    """Row provider backed by a full ensemble over unordered edges ``(j, k)``, ``j < k``."""

    def __init__(self, ens, d):
        self.ens = ens
        self.d = d

    def __call__(self, j):
        others = np.delete(np.arange(self.d), j)
        cols = self.ens.columns([(min(j, l), max(j, l)) for l in others])
        return others, self.ens.draws[:, cols]
