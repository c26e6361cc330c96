"""Replicated synthetic experiments and Monte-Carlo comparison of Gaussian maxima.

Replicate ``r`` of an experiment with seed ``s`` is fully determined by
``(config, s + r)``: the graph (or coefficient matrix) uses ``s + r``, the
data stream ``[s + r, 1]`` and the bootstrap stream ``(s + r, 2)``.
Replicates may run concurrently; records are always assembled in replicate
order.
"""

import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from typing import List, Optional

import numpy as np

from ._version import __version__
from .errors import ConfigError, InvalidCovariance, InvalidInput, StarTrekError
from .ggm import GGMBootstrap, fit_ggm
from .graphgen import generate_graph, ground_truth, normalize_kind, sample_gaussian
from .multitask import fit_multitask, select_hub_responses
from .quantile import RNG_SCHEME, stream_rng
from .select import HypothesisConfig, bh_select, startrek
from .solvers import SolverConfig

log = logging.getLogger(__name__)

SPEC_VERSION = 1
MODES = ("ggm", "multitask")


@dataclass
class ExperimentConfig:
    """Everything that determines an experiment; serialized with ``"spec_version": 1``.

    ``lambda_`` is ``"cv"`` or a fixed penalty (key ``"lambda"`` in JSON).
    Multitask runs use ``d1``, ``d2``, ``n_hubs``, ``hub_degree``,
    ``null_degree``, ``signal`` and ``noise_sd``; graph runs use ``kind``,
    ``d``, ``p_groups``, ``v``, ``u``, ``connect_prob`` and ``knn_k``.
    """

    mode: str = "ggm"
    kind: str = "hub"
    d: int = 100
    p_groups: int = 10
    v: float = 0.4
    u: float = 0.1
    connect_prob: float = 0.15
    knn_k: Optional[int] = None
    n: int = 400
    k_tau: int = 3
    q: float = 0.1
    B: int = 500
    replicates: int = 16
    seed: int = 0
    lambda_: object = "cv"
    cv_folds: int = 5
    d1: int = 40
    d2: int = 60
    n_hubs: int = 10
    hub_degree: Optional[int] = None
    null_degree: Optional[int] = None
    signal: float = 4.0
    noise_sd: float = 1.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        try:
            self.kind = normalize_kind(self.kind)
        except InvalidInput as exc:
            raise ConfigError(str(exc)) from None
        for name in ("d", "p_groups", "n", "k_tau", "B", "replicates", "cv_folds", "d1", "d2"):
            val = getattr(self, name)
            if isinstance(val, bool) or not isinstance(val, (int, np.integer)) or val < 1:
                raise ConfigError(f"{name} must be a positive integer, got {val!r}")
        for name in ("v", "u", "connect_prob", "signal", "noise_sd"):
            val = getattr(self, name)
            if isinstance(val, bool) or not isinstance(val, (int, float)) or not val > 0:
                raise ConfigError(f"{name} must be a positive number, got {val!r}")
        if not self.connect_prob <= 1:
            raise ConfigError("connect_prob must not exceed 1")
        if self.knn_k is not None and (isinstance(self.knn_k, bool) or not isinstance(self.knn_k, int) or self.knn_k < 1):
            raise ConfigError(f"knn_k must be a positive integer, got {self.knn_k!r}")
        for name in ("hub_degree", "null_degree"):
            val = getattr(self, name)
            if val is not None and (isinstance(val, bool) or not isinstance(val, int) or val < 0):
                raise ConfigError(f"{name} must be a nonnegative integer, got {val!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise ConfigError(f"seed must be a nonnegative integer, got {self.seed!r}")
        if isinstance(self.q, bool) or not isinstance(self.q, (int, float)) or not 0 < self.q < 1:
            raise ConfigError(f"q must lie in (0, 1), got {self.q}")
        if isinstance(self.lambda_, str):
            if self.lambda_ != "cv":
                raise ConfigError(f"lambda must be 'cv' or a positive number, got {self.lambda_!r}")
        elif isinstance(self.lambda_, bool) or not isinstance(self.lambda_, (int, float)) or not self.lambda_ > 0:
            raise ConfigError(f"lambda must be 'cv' or a positive number, got {self.lambda_!r}")
        if self.mode == "ggm":
            if self.p_groups > self.d:
                raise ConfigError("p_groups must not exceed d")
            if self.k_tau > self.d - 1:
                raise ConfigError("k_tau must not exceed d - 1")
            if self.lambda_ == "cv" and self.n < self.cv_folds:
                raise ConfigError("n must be at least cv_folds for cross-validation")
        else:
            if self.n_hubs < 0 or self.n_hubs > self.d1:
                raise ConfigError("n_hubs must lie in [0, d1]")
            if self.k_tau > self.d2:
                raise ConfigError("k_tau must not exceed d2")
            if self.resolved_hub_degree() > self.d2 or self.resolved_null_degree() >= self.k_tau:
                raise ConfigError("need hub_degree <= d2 and null_degree < k_tau")
            if self.resolved_hub_degree() < self.k_tau:
                raise ConfigError("hub_degree must be at least k_tau")

    def resolved_hub_degree(self):
        return self.k_tau + 2 if self.hub_degree is None else int(self.hub_degree)

    def resolved_null_degree(self):
        return self.k_tau - 1 if self.null_degree is None else int(self.null_degree)

    def to_dict(self):
        out = {"spec_version": SPEC_VERSION}
        for f in fields(self):
            out["lambda" if f.name == "lambda_" else f.name] = getattr(self, f.name)
        return out

    @classmethod
    def from_dict(cls, data):
        """Strict parse: unknown keys and a missing or wrong ``spec_version`` raise :class:`ConfigError`."""
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        data = dict(data)
        version = data.pop("spec_version", None)
        if version != SPEC_VERSION:
            raise ConfigError(f"spec_version must be {SPEC_VERSION}, got {version!r}")
        known = {("lambda" if f.name == "lambda_" else f.name): f.name for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
        return cls(**{known[k]: v for k, v in data.items()})

    def replace(self, **changes):
        d = self.to_dict()
        d.update({("lambda" if k == "lambda_" else k): v for k, v in changes.items()})
        return ExperimentConfig.from_dict(d)


@dataclass
class ReplicateRecord:
    """One replicate: node p-values, truth and the scored selection at the report's ``q``."""

    replicate: int
    seed: int
    alpha: List[float]
    hubs: List[int]
    d0: int
    selected: List[int]
    fdp: float
    power: float
    power_defined: bool

    @property
    def n_selected(self):
        return len(self.selected)


def score_selection(selected, hubs, d):
    """``(fdp, power, power_defined)``; power is 0 with ``power_defined=False`` when there are no hubs."""
    sel = set(int(j) for j in selected)
    hub_set = set(int(j) for j in hubs)
    false = len(sel - hub_set)
    fdp = false / max(1, len(sel))
    if not hub_set:
        return fdp, 0.0, False
    return fdp, len(sel & hub_set) / len(hub_set), True


def _record(r, seed, alpha, hubs, q):
    alpha = np.asarray(alpha, dtype=float)
    res = bh_select(alpha, q)
    fdp, power, defined = score_selection(res.selected, hubs, alpha.size)
    return ReplicateRecord(
        r, seed, alpha.tolist(), [int(h) for h in hubs], int(alpha.size - len(hubs)),
        list(res.selected), fdp, power, defined,
    )


def _se(x):
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return 0.0
    return float(x.std(ddof=1) / np.sqrt(x.size))


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    records: List[ReplicateRecord]
    failures: List[dict] = field(default_factory=list)
    runtime_ms: List[float] = field(default_factory=list)
    timestamp: str = ""

    @property
    def fdp(self):
        return np.array([r.fdp for r in self.records])

    @property
    def power(self):
        return np.array([r.power for r in self.records])

    @property
    def mean_fdp(self):
        return float(np.mean(self.fdp)) if self.records else float("nan")

    @property
    def mean_power(self):
        return float(np.mean(self.power)) if self.records else float("nan")

    @property
    def se_fdp(self):
        return _se(self.fdp)

    @property
    def se_power(self):
        return _se(self.power)

    @property
    def reference_level(self):
        """Mean of ``q d0 / d`` over replicates."""
        if not self.records:
            return float("nan")
        return float(np.mean([self.config.q * r.d0 / len(r.alpha) for r in self.records]))

    def rescore(self, q):
        """Same replicates scored at another FDR level (p-values are reused)."""
        cfg = self.config.replace(q=q)
        recs = [_record(r.replicate, r.seed, r.alpha, r.hubs, q) for r in self.records]
        return ExperimentReport(cfg, recs, list(self.failures), list(self.runtime_ms), self.timestamp)

    def summary(self):
        return {
            "mean_fdp": self.mean_fdp,
            "se_fdp": self.se_fdp,
            "mean_power": self.mean_power,
            "se_power": self.se_power,
            "reference_level": self.reference_level,
            "n_replicates": len(self.records),
            "n_failed": len(self.failures),
            "power_undefined": sum(not r.power_defined for r in self.records),
        }

    def to_dict(self):
        """JSON document; everything non-reproducible lives under ``"metadata"``."""
        return {
            "config": self.config.to_dict(),
            "version": __version__,
            "rng": RNG_SCHEME,
            "summary": self.summary(),
            "replicates": [
                {**asdict(r), "n_selected": r.n_selected} for r in self.records
            ],
            "failures": self.failures,
            "metadata": {
                "timestamp": self.timestamp,
                "runtime_ms": self.runtime_ms,
                "total_runtime_ms": float(np.sum(self.runtime_ms)) if self.runtime_ms else 0.0,
            },
        }

    @classmethod
    def from_dict(cls, data):
        cfg = ExperimentConfig.from_dict(data["config"])
        recs = []
        for r in data["replicates"]:
            r = dict(r)
            r.pop("n_selected", None)
            recs.append(ReplicateRecord(**r))
        meta = data.get("metadata", {})
        return cls(cfg, recs, list(data.get("failures", [])), list(meta.get("runtime_ms", [])),
                   meta.get("timestamp", ""))

    def write_csv(self, path):
        """Flat per-replicate rows: replicate, fdp, power, n_selected, d0, runtime_ms."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["replicate", "fdp", "power", "n_selected", "d0", "runtime_ms"])
            for rec, ms in zip(self.records, self.runtime_ms):
                w.writerow([rec.replicate, repr(rec.fdp), repr(rec.power), rec.n_selected, rec.d0,
                            f"{ms:.3f}"])


def _ggm_replicate(cfg, r):
    seed = cfg.seed + r
    model = generate_graph(cfg.kind, cfg.d, cfg.p_groups, seed=seed, v=cfg.v, u=cfg.u,
                           connect_prob=cfg.connect_prob, knn_k=cfg.knn_k)
    truth = ground_truth(model, cfg.k_tau)
    X = sample_gaussian(model.precision, cfg.n, [seed, 1])
    fit = fit_ggm(X, cfg.lambda_, SolverConfig(cv_folds=cfg.cv_folds))
    provider = GGMBootstrap(fit.theta_hat, X, cfg.B, (seed, 2))
    res = startrek(fit.debiased.theta_std, provider, HypothesisConfig(cfg.k_tau, cfg.q), cfg.n)
    return _record(r, seed, res.alpha, truth.hubs, cfg.q)


def plant_multitask(cfg, seed):
    """Coefficient matrix, hub rows and data ``(X, Y)`` for one multitask replicate.

    Hub rows get ``hub_degree`` nonzeros and the others ``null_degree``, each of
    magnitude ``signal * sqrt(log d2 / n)`` with a random sign; ``X`` has iid
    standard normal entries and the noise is iid ``N(0, noise_sd^2)``.
    """
    rng = np.random.default_rng([seed, 1])
    d1, d2, n = cfg.d1, cfg.d2, cfg.n
    hubs = np.sort(rng.choice(d1, size=cfg.n_hubs, replace=False))
    is_hub = np.zeros(d1, dtype=bool)
    is_hub[hubs] = True
    size = cfg.signal * np.sqrt(np.log(max(d2, 2)) / n)
    theta = np.zeros((d1, d2))
    for j in range(d1):
        k = cfg.resolved_hub_degree() if is_hub[j] else cfg.resolved_null_degree()
        cols = rng.choice(d2, size=k, replace=False)
        theta[j, cols] = size * rng.choice([-1.0, 1.0], size=k)
    X = rng.standard_normal((n, d2))
    Y = X @ theta.T + cfg.noise_sd * rng.standard_normal((n, d1))
    return theta, hubs, X, Y


def _multitask_replicate(cfg, r):
    seed = cfg.seed + r
    theta, hubs, X, Y = plant_multitask(cfg, seed)
    solver_cfg = SolverConfig() if cfg.lambda_ == "cv" else SolverConfig(lam=float(cfg.lambda_))
    fit = fit_multitask(X, Y, solver_cfg)
    res = select_hub_responses(fit, HypothesisConfig(cfg.k_tau, cfg.q), B=cfg.B, seed=(seed, 2))
    return _record(r, seed, res.alpha, hubs, cfg.q)


def run_experiment(cfg, threads=1):
    """Run every replicate of ``cfg``; failed replicates are recorded and excluded."""
    one = _ggm_replicate if cfg.mode == "ggm" else _multitask_replicate

    def timed(r):
        t0 = time.perf_counter()
        try:
            rec, err = one(cfg, r), None
        except (StarTrekError, ValueError, np.linalg.LinAlgError) as exc:
            rec, err = None, f"{type(exc).__name__}: {exc}"
        return rec, err, 1000.0 * (time.perf_counter() - t0)

    reps = range(cfg.replicates)
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(timed, reps))
    else:
        out = [timed(r) for r in reps]
    records, failures, runtimes = [], [], []
    for r, (rec, err, ms) in zip(reps, out):
        if err is not None:
            failures.append({"replicate": r, "seed": cfg.seed + r, "error": err})
            continue
        records.append(rec)
        runtimes.append(ms)
    if failures:
        log.warning("%d of %d replicates failed and were excluded", len(failures), cfg.replicates)
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return ExperimentReport(cfg, records, failures, runtimes, stamp)


def run_ggm_experiment(cfg, threads=1):
    if cfg.mode != "ggm":
        raise ConfigError("run_ggm_experiment needs mode='ggm'")
    return run_experiment(cfg, threads)


def run_multitask_experiment(cfg, threads=1):
    if cfg.mode != "multitask":
        raise ConfigError("run_multitask_experiment needs mode='multitask'")
    return run_experiment(cfg, threads)


# ---------------------------------------------------------------------------
# comparison of Gaussian maxima

CCB_BATCH = 1 << 15


@dataclass
class CCBTable:
    """Tail probabilities of ``||U||_inf`` and ``||V||_inf`` on a grid of thresholds.

    ``ratio_dev = |p_u / p_v - 1|`` with a delta-method standard error; grid
    points where ``p_v < 10 / mc_samples`` are unstable and left out of
    :attr:`sup_deviation`.
    """

    t: np.ndarray
    p_u: np.ndarray
    p_v: np.ndarray
    ratio_dev: np.ndarray
    se: np.ndarray
    stable: np.ndarray
    mc_samples: int

    @property
    def sup_deviation(self):
        if not self.stable.any():
            return float("nan")
        return float(self.ratio_dev[self.stable].max())

    def rows(self):
        return [
            (float(t), float(r), float(s), bool(ok))
            for t, r, s, ok in zip(self.t, self.ratio_dev, self.se, self.stable)
        ]

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "ratio_dev", "se", "stable"])
            for t, r, s, ok in self.rows():
                w.writerow([repr(t), repr(r), repr(s), str(ok).lower()])


def _factor(cov):
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise InvalidCovariance("covariance must be square")
    cov = 0.5 * (cov + cov.T)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    # positive semidefinite: keep the numerically nonzero spectrum
    w, V = np.linalg.eigh(cov)
    if w.min() < -1e-8 * max(1.0, w.max()):
        raise InvalidCovariance(f"covariance has a negative eigenvalue {w.min():.3e}")
    keep = w > 1e-10 * max(1.0, w.max())
    return V[:, keep] * np.sqrt(w[keep])


def default_t_grid(d, c0=1.5, points=40):
    return np.linspace(0.0, c0 * np.sqrt(np.log(d)), points)


def verify_ccb(cov_u, cov_v, t_grid=None, mc_samples=1_000_000, seed=0, c0=1.5, threads=1):
    """Monte-Carlo tail ratios of two centred Gaussian vectors' maximum norms.

    ``U = F_u g`` and ``V = F_v g`` share the standard normal ``g`` (common
    random numbers), with ``F`` a Cholesky factor, or a spectral factor for
    singular covariances. Batch ``i`` of ``CCB_BATCH`` samples uses stream
    ``(seed, i)`` regardless of ``threads``.
    """
    Fu, Fv = _factor(cov_u), _factor(cov_v)
    d = Fu.shape[0]
    if Fv.shape[0] != d:
        raise InvalidInput("covariances must have the same dimension")
    if mc_samples < 1:
        raise InvalidInput("mc_samples must be positive")
    width = max(Fu.shape[1], Fv.shape[1])
    Fu = np.pad(Fu, ((0, 0), (0, width - Fu.shape[1])))
    Fv = np.pad(Fv, ((0, 0), (0, width - Fv.shape[1])))
    t = default_t_grid(d, c0) if t_grid is None else np.asarray(t_grid, dtype=float)
    if t.size and (t.min() < 0 or t.max() > c0 * np.sqrt(np.log(max(d, 2))) + 1e-12):
        raise InvalidInput("t_grid must lie in [0, c0 sqrt(log d)]")

    def batch(i):
        m = min(CCB_BATCH, mc_samples - i * CCB_BATCH)
        g = stream_rng(seed, i).standard_normal((m, width))
        mu = np.abs(g @ Fu.T).max(axis=1)
        mv = np.abs(g @ Fv.T).max(axis=1)
        a = mu[:, None] > t[None, :]
        b = mv[:, None] > t[None, :]
        return a.sum(axis=0), b.sum(axis=0), (a & b).sum(axis=0)

    n_batches = -(-mc_samples // CCB_BATCH)
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(batch, range(n_batches)))
    else:
        parts = [batch(i) for i in range(n_batches)]
    ca = sum(p[0] for p in parts)
    cb = sum(p[1] for p in parts)
    cab = sum(p[2] for p in parts)
    m = float(mc_samples)
    pu, pv, puv = ca / m, cb / m, cab / m
    stable = cb >= 10
    with np.errstate(divide="ignore", invalid="ignore"):
        R = np.where(stable, pu / pv, np.nan)
        # var of mean(a - R b), the linearization of the ratio estimator
        v = np.maximum(pu - 2 * R * puv + R * R * pv, 0.0)
        se = np.where(stable, np.sqrt(v / m) / pv, np.nan)
    return CCBTable(t, pu, pv, np.abs(R - 1), se, stable, int(mc_samples))


def counterexample_pair(d, rho=0.9):
    """Covariances of ``(X1, X2, Z, ..., Z)`` with ``corr(X1, X2) = rho`` and of ``(Y1, Y2, Z, ..., Z)`` with independent ``Y``."""
    if d < 3:
        raise InvalidInput("need d >= 3")

    def build(r):
        c = np.zeros((d, d))
        c[:2, :2] = [[1.0, r], [r, 1.0]]
        c[2:, 2:] = 1.0
        return c

    return build(rho), build(0.0)


def ar1_perturbed_pair(d, rho=0.5, delta=0.01):
    """AR(1) covariance ``rho^|i-j|`` and a copy whose (0, 1) entry is shifted by ``delta``."""
    idx = np.arange(d)
    base = rho ** np.abs(idx[:, None] - idx[None, :])
    pert = base.copy()
    pert[0, 1] += delta
    pert[1, 0] += delta
    return pert, base


def ccb_delta_study(d=50, rho=0.5, deltas=(0.1, 0.01, 0.001), mc_samples=1_000_000, seed=0, c0=1.5, threads=1):
    """Sup ratio deviation for a shrinking sequence of max-norm covariance differences.

    Every ``delta`` reuses the same random numbers, so the trend is not masked
    by independent Monte-Carlo noise.
    """
    out = []
    for delta in deltas:
        cu, cv = ar1_perturbed_pair(d, rho, delta)
        table = verify_ccb(cu, cv, None, mc_samples, seed, c0, threads)
        out.append((float(delta), table.sup_deviation, table))
    return out
