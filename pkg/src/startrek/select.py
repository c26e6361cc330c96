"""Per-node combinatorial p-values, the skip-down degree test and BH selection.

A *row provider* is any callable ``provider(j) -> (partners, draws)`` where
``partners`` lists the nodes ``l`` of the row-``j`` edge universe and
``draws`` is a ``(B, len(partners))`` array of bootstrap absolute statistics
in the same column order. Row-wise maxima of ``draws`` over a column subset
give the bootstrap law of the maximum statistic over that edge subset.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .errors import InvalidInput
from .quantile import pvalue_of, quantile_of


@dataclass(frozen=True)
class HypothesisConfig:
    """Degree threshold ``k_tau`` and nominal FDR level ``q``."""

    k_tau: int = 3
    q: float = 0.1

    def __post_init__(self):
        if int(self.k_tau) != self.k_tau or self.k_tau < 1:
            raise InvalidInput(f"k_tau must be a positive integer, got {self.k_tau}")
        if not 0 < self.q < 1:
            raise InvalidInput(f"q must lie in (0, 1), got {self.q}")

    def check_dimension(self, m):
        """``m`` is the size of a row edge universe (``d - 1`` for graphs)."""
        if self.k_tau > m:
            raise InvalidInput(f"k_tau={self.k_tau} exceeds the row size {m}")


@dataclass
class SelectionResult:
    alpha: np.ndarray
    selected: List[int] = field(default_factory=list)
    j_max: int = 0
    bh_threshold: float = 0.0


def row_alpha(stats, draws, k_tau):
    """Combinatorial p-value of one row.

    Parameters
    ----------
    stats : ndarray, shape (m,)
        Row statistics ``sqrt(n) |theta_jl|`` in provider column order.
    draws : ndarray, shape (B, m)
        Bootstrap absolute statistics, same column order.
    k_tau : int

    Returns
    -------
    float
        ``max_{s <= k_tau} p(stat_(s), E_s)`` where ``stat_(s)`` is the s-th
        largest statistic and ``E_s`` the columns whose statistic is at most
        ``stat_(s)`` (ties included).
    """
    stats = np.asarray(stats, dtype=float)
    m = stats.size
    if k_tau > m:
        raise InvalidInput(f"k_tau={k_tau} exceeds the row size {m}")
    asc = np.argsort(stats, kind="stable")
    sorted_stats = stats[asc]
    # cummax[:, i] = bootstrap max over the i + 1 smallest statistics
    cummax = np.maximum.accumulate(draws[:, asc], axis=1)
    B = draws.shape[0]
    best = 0.0
    for s in range(1, k_tau + 1):
        v = sorted_stats[m - s]
        size = int(np.searchsorted(sorted_stats, v, side="right"))
        p = np.count_nonzero(cummax[:, size - 1] >= v) / B
        best = max(best, p)
    return float(best)


def _row_stats(theta_std, partners, j, n):
    return np.sqrt(n) * np.abs(np.asarray(theta_std)[j, partners])


def node_alpha(theta_std, provider, j, k_tau, n):
    """p-value ``alpha_j`` of node ``j`` against ``H0: degree(j) < k_tau``."""
    partners, draws = provider(j)
    return row_alpha(_row_stats(theta_std, partners, j, n), draws, k_tau)


def bh_select(alpha, q):
    """Benjamini-Hochberg step on the node p-values.

    ``j_max = max{0 <= j <= d : alpha_(j) <= q j / d}`` with ``alpha_(0) = 0``;
    selects ``{j : alpha_j <= alpha_(j_max)}`` when ``j_max > 0``.
    """
    alpha = np.asarray(alpha, dtype=float)
    d = alpha.size
    srt = np.sort(alpha)
    ok = np.flatnonzero(srt <= q * np.arange(1, d + 1) / d)
    if ok.size == 0:
        return SelectionResult(alpha, [], 0, 0.0)
    j_max = int(ok[-1]) + 1
    thr = float(srt[j_max - 1])
    return SelectionResult(alpha, np.flatnonzero(alpha <= thr).tolist(), j_max, thr)


def skipdown_test(theta_std, provider, j, k_tau, alpha, n):
    """Iterative skip-down degree test at level ``alpha``; returns True on rejection."""
    partners, draws = provider(j)
    stats = _row_stats(theta_std, partners, j, n)
    if k_tau > stats.size:
        raise InvalidInput(f"k_tau={k_tau} exceeds the row size {stats.size}")
    remaining = np.arange(stats.size)
    rejected = 0
    while True:
        c = quantile_of(draws[:, remaining].max(axis=1), alpha)
        hit = stats[remaining] > c
        if not hit.any():
            return False
        rejected += int(hit.sum())
        remaining = remaining[~hit]
        if rejected >= k_tau:
            return True


def startrek(theta_std, provider, cfg, n, nodes=None, threads=1):
    """StarTrek filter: per-node p-values followed by the BH step.

    Parameters
    ----------
    theta_std : ndarray, shape (d1, m)
        Standardized estimate whose rows are tested.
    provider : callable
        Row provider (see module docstring).
    cfg : HypothesisConfig
    n : int
        Sample size; statistics are ``sqrt(n) |theta_std|``.
    nodes : sequence of int, optional
        Rows to test; defaults to all rows.
    threads : int
        Rows are processed concurrently; results do not depend on this.
    """
    theta_std = np.asarray(theta_std, dtype=float)
    rows = range(theta_std.shape[0]) if nodes is None else list(nodes)

    def one(j):
        partners, draws = provider(j)
        cfg.check_dimension(len(partners))
        return row_alpha(_row_stats(theta_std, partners, j, n), draws, cfg.k_tau)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            alpha = list(pool.map(one, rows))
    else:
        alpha = [one(j) for j in rows]
    return bh_select(np.array(alpha), cfg.q)
