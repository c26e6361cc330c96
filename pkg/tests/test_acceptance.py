"""Acceptance criteria, one test per criterion, each at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v`` (a summary section lists one
PASS/FAIL line per criterion) or directly with ``python tests/test_acceptance.py``.
"""

import csv
import functools
import io
import json
import os
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from oracles import brute_S, glasso_proximal, naive_debias  # noqa: E402
from startrek.ggm import build_scores, fit_ggm, onestep_debias  # noqa: E402
from startrek.graphgen import generate_graph, ground_truth, sample_gaussian  # noqa: E402
from startrek.harness import (  # noqa: E402
    ExperimentConfig,
    ccb_delta_study,
    counterexample_pair,
    run_ggm_experiment,
    verify_ccb,
)
from startrek.quantile import BootstrapEnsemble, EnsembleRows, build_ensemble, c_hat  # noqa: E402
from startrek.select import node_alpha, skipdown_test  # noqa: E402
from startrek.solvers import SolverConfig, glasso, lasso  # noqa: E402

THREADS = os.cpu_count() or 1
KINDS = ("hub", "random", "scalefree", "knn")


def _line(log, num, name, ok, detail):
    log(f"[{'PASS' if ok else 'FAIL'}] criterion {num} {name}: {detail}")
    return ok


@functools.lru_cache(maxsize=None)
def _ggm_report(kind, n):
    cfg = ExperimentConfig(kind=kind, d=100, p_groups=10, n=n, k_tau=3, q=0.1, B=500,
                           replicates=16, seed=20_000)
    return run_ggm_experiment(cfg, threads=THREADS)


def check_fdr(log):
    ok, parts = True, []
    for kind in KINDS:
        base = _ggm_report(kind, 400)
        for q in (0.1, 0.2):
            rep = base.rescore(q)
            bound = q + 2 * rep.se_fdp
            good = len(rep.records) == 16 and rep.mean_fdp <= bound
            ok &= good
            parts.append(f"{kind}/q={q}: {rep.mean_fdp:.4f}<={bound:.4f}")
    return _line(log, 1, "FDR control", ok, "; ".join(parts))


def check_power(log):
    hub = _ggm_report("hub", 400).mean_power
    powers = [_ggm_report("random", n).mean_power for n in (200, 400, 800)]
    ok = hub >= 0.6 and powers[0] <= powers[1] <= powers[2]
    detail = f"hub power {hub:.4f} (>=0.6); random power n=200/400/800: " + "/".join(f"{p:.4f}" for p in powers)
    return _line(log, 2, "power trend", ok, detail)


def check_S(log):
    rng = np.random.default_rng(3)
    mismatches = 0
    for _ in range(500):
        d = int(rng.integers(2, 9))
        A = np.triu(rng.random((d, d)) < rng.uniform(0.05, 0.8), 1).astype(int)
        A = A + A.T
        if ground_truth(A, 3).S_count != brute_S(A, 3):
            mismatches += 1
    star = np.zeros((6, 6), dtype=int)
    star[0, 1:] = star[1:, 0] = 1
    ring = np.zeros((6, 6), dtype=int)
    for i in range(6):
        ring[i, (i + 1) % 6] = ring[(i + 1) % 6, i] = 1
    s_star, s_ring = ground_truth(star, 3).S_count, ground_truth(ring, 3).S_count
    ok = mismatches == 0 and s_star == 10 and s_ring == 51
    return _line(log, 3, "|S| oracle", ok,
                 f"{mismatches} mismatches on 500 graphs; star={s_star} (10), 6-cycle={s_ring} (51)")


def check_coverage(log):
    alphas = (0.05, 0.1, 0.2)
    hits = np.zeros(len(alphas))
    reps, d, n, B = 200, 50, 400, 1000
    for r in range(reps):
        model = generate_graph("random", d, 5, seed=30_000 + r)
        X = sample_gaussian(model.precision, n, [30_000 + r, 1])
        fit = fit_ggm(X, "cv")
        j, k = np.triu_indices(d, 1)
        null = model.precision[j, k] == 0
        edges = list(zip(j[null].tolist(), k[null].tolist()))
        ens = build_ensemble(build_scores(fit.theta_hat, X, edges), B, (30_000 + r, 2))
        T = np.sqrt(n) * np.max(np.abs(fit.debiased.theta_std[j[null], k[null]]))
        for i, a in enumerate(alphas):
            hits[i] += T > c_hat(ens, a, edges)
    cover = hits / reps
    dev = np.abs(cover - np.array(alphas))
    ok = bool(np.all(dev <= 0.05))
    detail = ", ".join(f"alpha={a}: {c:.3f}" for a, c in zip(alphas, cover))
    return _line(log, 4, "quantile calibration", ok, f"{detail} (|dev| max {dev.max():.3f} <= 0.05)")


def check_equivalence(log):
    rng = np.random.default_rng(5)
    violations = checked = ties = 0
    for _ in range(200):
        d = int(rng.integers(5, 12))
        B = int(rng.integers(50, 400))
        n = int(rng.integers(50, 500))
        k_tau = int(rng.integers(1, 4))
        edges = [(a, b) for a in range(d) for b in range(a + 1, d)]
        ens = BootstrapEnsemble(np.abs(rng.standard_normal((B, len(edges)))) * rng.uniform(0.5, 2), edges)
        theta = np.zeros((d, d))
        for a, b in edges:
            if rng.random() < 0.4:
                theta[a, b] = theta[b, a] = rng.uniform(0, 0.4)
        prov = EnsembleRows(ens, d)
        for node in range(d):
            partners, draws = prov(node)
            stats = np.sqrt(n) * np.abs(theta[node, partners])
            if np.isin(stats[stats > 0], draws).any():
                ties += 1
                continue
            a_j = node_alpha(theta, prov, node, k_tau, n)
            for level in (0.01, 0.05, 0.1, 0.2, 0.3):
                checked += 1
                violations += skipdown_test(theta, prov, node, k_tau, level, n) != (a_j <= level)
    ok = violations == 0
    return _line(log, 5, "skip-down equivalence", ok,
                 f"{violations} violations in {checked} checks over 200 instances ({ties} tie rows skipped)")


def check_ccb(log):
    sups = []
    for d in (10, 50, 200):
        cu, cv = counterexample_pair(d, 0.9)
        sups.append(verify_ccb(cu, cv, mc_samples=1_000_000, seed=7, threads=THREADS).sup_deviation)
    study = ccb_delta_study(d=50, rho=0.5, deltas=(0.1, 0.01, 0.001), mc_samples=1_000_000, seed=8,
                            threads=THREADS)
    trend = [s for _, s, _ in study]
    ok = all(s >= 0.05 for s in sups) and trend[0] > trend[1] > trend[2]
    detail = ("counterexample sup dev d=10/50/200: " + "/".join(f"{s:.4f}" for s in sups)
              + "; AR(1) delta 0.1/0.01/0.001: " + "/".join(f"{s:.2e}" for s in trend))
    return _line(log, 6, "CCB", ok, detail)


def check_solvers(log):
    rng = np.random.default_rng(9)
    worst_kkt = 0.0
    cfg = SolverConfig(tol=1e-9)
    for _ in range(100):
        n, p = int(rng.integers(20, 100)), int(rng.integers(5, 150))
        X = rng.standard_normal((n, p))
        y = X[:, : min(5, p)] @ rng.standard_normal(min(5, p)) + rng.standard_normal(n)
        lam = rng.uniform(0.02, 0.5) * np.max(np.abs(X.T @ y / n))
        beta = lasso(X, y, lam, cfg)
        g = X.T @ (y - X @ beta) / n
        viol = np.where(beta != 0, np.abs(g - lam * np.sign(beta)), np.maximum(np.abs(g) - lam, 0))
        worst_kkt = max(worst_kkt, viol.max())
    worst_gl = 0.0
    for _ in range(20):
        Z = rng.standard_normal((30, 4)) @ rng.standard_normal((4, 4))
        S = Z.T @ Z / 30
        lam = rng.uniform(0.02, 0.3) * np.max(np.abs(S))
        worst_gl = max(worst_gl, np.max(np.abs(glasso(S, lam, SolverConfig(tol=1e-10)).theta
                                               - glasso_proximal(S, lam))))
    worst_db = 0.0
    for _ in range(30):
        d = int(rng.integers(2, 7))
        X = rng.standard_normal((40, d))
        S = X.T @ X / 40
        theta = glasso(S, 0.1).theta
        dm = onestep_debias(theta, S)
        sym, std = naive_debias(theta, S)
        worst_db = max(worst_db, np.max(np.abs(dm.theta_d - sym)), np.max(np.abs(dm.theta_std - std)))
    ok = worst_kkt <= 1e-8 and worst_gl <= 1e-4 and worst_db <= 1e-12
    return _line(log, 7, "solver oracles", ok,
                 f"lasso KKT max {worst_kkt:.1e} (<=1e-8); glasso vs oracle {worst_gl:.1e} (<=1e-4); "
                 f"debias vs loops {worst_db:.1e} (<=1e-12)")


def _masked(path):
    """File bytes with non-reproducible fields removed: JSON ``metadata`` and the CSV ``runtime_ms`` column."""
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        doc.pop("metadata", None)
        return json.dumps(doc, sort_keys=True).encode()
    if path.suffix == ".csv":
        rows = list(csv.reader(io.StringIO(path.read_text())))
        if rows and "runtime_ms" in rows[0]:
            c = rows[0].index("runtime_ms")
            rows = [r[:c] + r[c + 1:] for r in rows]
        return json.dumps(rows).encode()
    return path.read_bytes()


def _cli(args):
    proc = subprocess.run([sys.executable, "-m", "startrek.cli", *args], capture_output=True, text=True)
    if proc.returncode != 0:
        raise RuntimeError(f"startrek {' '.join(args)} failed: {proc.stderr}")


def check_determinism(log):
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        _cli(["graphgen", "--kind", "hub", "--d", "15", "--p-groups", "3", "--n-samples", "200",
              "--seed", "4", "--out", str(tmp / "data")])
        cfg = ExperimentConfig(kind="random", d=20, p_groups=2, n=200, B=100, replicates=3, seed=1)
        (tmp / "exp.json").write_text(json.dumps(cfg.to_dict()))
        mt = ExperimentConfig(mode="multitask", d1=8, d2=20, n_hubs=2, n=150)
        from startrek.harness import plant_multitask
        from startrek.io import save_matrix

        _, _, Xm, Ym = plant_multitask(mt, 3)
        save_matrix(tmp / "x.csv", Xm)
        save_matrix(tmp / "y.csv", Ym)
        data = str(tmp / "data" / "data.csv")
        commands = {
            "select": ["select", "--data", data, "--k-tau", "3", "--boot", "300", "--seed", "11"],
            "select-multitask": ["select-multitask", "--x", str(tmp / "x.csv"), "--y", str(tmp / "y.csv"),
                                 "--k-tau", "3", "--boot", "300", "--seed", "11"],
            "simulate": ["simulate", "--config", str(tmp / "exp.json")],
            "graphgen": ["graphgen", "--kind", "knn", "--d", "20", "--p-groups", "2", "--n-samples", "30",
                         "--seed", "11"],
            "ccb-verify": ["ccb-verify", "--pair", "ar1", "--d", "20", "--mc-samples", "100000", "--seed", "11"],
            "ensemble-cache": ["ensemble-cache", "--data", data, "--boot", "150", "--lambda", "0.1",
                               "--seed", "11"],
        }
        differing, compared = [], 0
        for name, args in commands.items():
            outs = []
            for threads in ("1", "4", "1"):
                out = tmp / f"{name}-{threads}-{len(outs)}"
                _cli(args + ["--threads", threads, "--out", str(out)])
                outs.append(out)
            ref = {p.name: _masked(p) for p in sorted(outs[0].iterdir())}
            for other in outs[1:]:
                got = {p.name: _masked(p) for p in sorted(other.iterdir())}
                compared += len(ref)
                if got != ref:
                    differing.append(name)
    ok = not differing
    return _line(log, 8, "CLI determinism", ok,
                 f"{compared} file comparisons across --threads 1/4 and repeats; differing: {differing or 'none'}")


CRITERIA = [check_fdr, check_power, check_S, check_coverage, check_equivalence, check_ccb,
            check_solvers, check_determinism]


def test_criterion_1_fdr(acceptance_log):
    assert check_fdr(acceptance_log)


def test_criterion_2_power(acceptance_log):
    assert check_power(acceptance_log)


def test_criterion_3_S_oracle(acceptance_log):
    assert check_S(acceptance_log)


def test_criterion_4_quantile_calibration(acceptance_log):
    assert check_coverage(acceptance_log)


def test_criterion_5_skipdown_equivalence(acceptance_log):
    assert check_equivalence(acceptance_log)


def test_criterion_6_ccb(acceptance_log):
    assert check_ccb(acceptance_log)


def test_criterion_7_solver_oracles(acceptance_log):
    assert check_solvers(acceptance_log)


def test_criterion_8_cli_determinism(acceptance_log):
    assert check_determinism(acceptance_log)


if __name__ == "__main__":
    results = [check(print) for check in CRITERIA]
    sys.exit(0 if all(results) else 1)
