import csv
import json

import numpy as np
import pytest

from startrek.cli import main
from startrek.harness import ExperimentConfig, plant_multitask
from startrek.io import save_matrix, write_json


def _json(path):
    return json.loads(path.read_text())


@pytest.fixture(scope="module")
def identity_csv(tmp_path_factory):
    p = tmp_path_factory.mktemp("data") / "iid.csv"
    X = np.random.default_rng(0).standard_normal((300, 5))
    save_matrix(p, X, [f"g{j}" for j in range(5)])
    return p


def test_select_identity_selects_nothing(identity_csv, tmp_path):
    out = tmp_path / "o"
    code = main(["select", "--data", str(identity_csv), "--k-tau", "3", "--q", "0.1",
                 "--boot", "300", "--seed", "1", "--out", str(out), "--threads", "1"])
    assert code == 0
    doc = _json(out / "selection.json")
    assert doc["selected"] == []
    assert len(doc["alpha"]) == 5
    assert doc["config"]["seed"] == 1 and "timestamp" in doc["metadata"]
    rows = list(csv.DictReader(open(out / "alpha.csv")))
    assert [r["label"] for r in rows] == [f"g{j}" for j in range(5)]


def test_missing_k_tau_is_usage_error(identity_csv, tmp_path, capsys):
    code = main(["select", "--data", str(identity_csv), "--out", str(tmp_path)])
    assert code == 2
    assert "--k-tau" in capsys.readouterr().err


def test_k_tau_too_large_is_usage_error(identity_csv, tmp_path):
    assert main(["select", "--data", str(identity_csv), "--k-tau", "9", "--out", str(tmp_path)]) == 2


def test_runtime_failure_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n3,NaN\n")
    code = main(["select", "--data", str(bad), "--k-tau", "1", "--out", str(tmp_path / "o")])
    assert code == 1
    assert "line 3" in capsys.readouterr().err
    assert main(["select", "--data", str(tmp_path / "none.csv"), "--k-tau", "1",
                 "--out", str(tmp_path / "o")]) == 1


def test_select_repeat_is_identical(identity_csv, tmp_path):
    docs = []
    for i, threads in enumerate(["1", "2"]):
        out = tmp_path / str(i)
        assert main(["select", "--data", str(identity_csv), "--k-tau", "2", "--boot", "200",
                     "--seed", "5", "--out", str(out), "--threads", threads]) == 0
        d = _json(out / "selection.json")
        d.pop("metadata")
        docs.append((d, (out / "alpha.csv").read_bytes()))
    assert docs[0] == docs[1]


def test_simulate_minimal(tmp_path):
    cfg = ExperimentConfig(d=20, p_groups=2, n=200, B=100, replicates=2).to_dict()
    write_json(tmp_path / "c.json", cfg)
    assert main(["simulate", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "o")]) == 0
    rows = list(csv.reader(open(tmp_path / "o" / "replicates.csv")))
    assert rows[0] == ["replicate", "fdp", "power", "n_selected", "d0", "runtime_ms"]
    assert len(rows) == 3
    rep = _json(tmp_path / "o" / "report.json")
    assert rep["config"] == cfg


def test_simulate_unknown_field(tmp_path, capsys):
    cfg = ExperimentConfig(d=20, p_groups=2, replicates=2).to_dict()
    cfg["colour"] = "blue"
    write_json(tmp_path / "c.json", cfg)
    assert main(["simulate", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "o")]) == 2
    assert "colour" in capsys.readouterr().err


def test_simulate_malformed_json(tmp_path):
    (tmp_path / "c.json").write_text("{")
    assert main(["simulate", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "o")]) == 2


def test_graphgen_hub_d4(tmp_path):
    assert main(["graphgen", "--kind", "hub", "--d", "4", "--out", str(tmp_path)]) == 0
    doc = _json(tmp_path / "graph.json")
    assert len(doc["edges"]) == 3
    P = np.loadtxt(tmp_path / "precision.csv", delimiter=",")
    assert P.shape == (4, 4)


def test_graphgen_samples(tmp_path):
    assert main(["graphgen", "--kind", "knn", "--d", "12", "--p-groups", "2", "--n-samples", "50",
                 "--out", str(tmp_path)]) == 0
    assert (tmp_path / "data.csv").exists()


def test_ccb_identical_null_case(tmp_path):
    assert main(["ccb-verify", "--pair", "identical", "--d", "10", "--mc-samples", "20000",
                 "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "ccb.csv")))
    assert len(rows) == 40
    for r in rows:
        if r["stable"] == "true":
            assert float(r["ratio_dev"]) <= 3 * float(r["se"])


def test_ccb_files_pair(tmp_path):
    save_matrix(tmp_path / "u.csv", np.eye(3))
    save_matrix(tmp_path / "v.csv", np.eye(3))
    assert main(["ccb-verify", "--pair", "files", "--cov-u", str(tmp_path / "u.csv"),
                 "--cov-v", str(tmp_path / "v.csv"), "--mc-samples", "1000",
                 "--out", str(tmp_path / "o")]) == 0
    assert main(["ccb-verify", "--pair", "files", "--out", str(tmp_path / "o")]) == 2


def test_select_multitask_tiny_q(tmp_path):
    cfg = ExperimentConfig(mode="multitask", d1=10, d2=30, n_hubs=3, n=300)
    _, hubs, X, Y = plant_multitask(cfg, 2)
    save_matrix(tmp_path / "x.csv", X, [f"x{j}" for j in range(30)])
    save_matrix(tmp_path / "y.csv", Y, [f"y{j}" for j in range(10)])
    assert main(["select-multitask", "--x", str(tmp_path / "x.csv"), "--y", str(tmp_path / "y.csv"),
                 "--k-tau", "3", "--q", "0.001", "--boot", "500", "--out", str(tmp_path / "o")]) == 0
    assert main(["select-multitask", "--x", str(tmp_path / "x.csv"), "--y", str(tmp_path / "y.csv"),
                 "--k-tau", "3", "--q", "0.2", "--boot", "500", "--out", str(tmp_path / "o2")]) == 0
    tiny = set(_json(tmp_path / "o" / "selection.json")["selected"])
    loose = set(_json(tmp_path / "o2" / "selection.json")["selected"])
    assert tiny <= loose <= {f"y{j}" for j in range(10)}


def test_ensemble_cache(identity_csv, tmp_path):
    from startrek.io import load_ensemble

    assert main(["ensemble-cache", "--data", str(identity_csv), "--boot", "64", "--lambda", "0.1",
                 "--out", str(tmp_path)]) == 0
    ens = load_ensemble(tmp_path / "ensemble.stkb")
    assert ens.draws.shape == (64, 10)


def test_threads_env_fallback(identity_csv, tmp_path, monkeypatch):
    monkeypatch.setenv("STARTREK_THREADS", "2")
    assert main(["select", "--data", str(identity_csv), "--k-tau", "2", "--boot", "50",
                 "--out", str(tmp_path)]) == 0
    monkeypatch.setenv("STARTREK_THREADS", "zero")
    assert main(["select", "--data", str(identity_csv), "--k-tau", "2", "--boot", "50",
                 "--out", str(tmp_path)]) == 2
