import json

import pytest

from consensus_density.cli import main
from consensus_density.core import ClusterEnsemble, read_ensemble, read_labels, write_ensemble, write_labels

from conftest import ROOT
from test_bench import blobs_csv


@pytest.fixture
def e0_dir(tmp_path, E0):
    d = tmp_path / "e0"
    write_ensemble(d, E0)
    return d


def test_consensus_writes_labels_and_sidecar(e0_dir, tmp_path):
    out = tmp_path / "star.txt"
    assert main(["consensus", str(e0_dir), "--algo", "KM", "--k", "2", "--out", str(out)]) == 0
    assert read_labels(out).labels.tolist() == [0, 0, 1, 1]
    side = json.loads((tmp_path / "star.txt.json").read_text())
    assert side["algorithm"] == "eac_km" and "loss" in side


@pytest.mark.parametrize("algo", ["eac_km", "R-SL", "E-AL", "SEC", "mcla"])
def test_consensus_accepts_both_name_styles(e0_dir, capsys, algo):
    assert main(["consensus", str(e0_dir), "--algo", algo, "--k", "2"]) == 0
    assert capsys.readouterr().out.split() == ["0", "0", "1", "1"]


def test_consensus_linkage_flag(e0_dir, capsys):
    assert main(["consensus", str(e0_dir), "--algo", "hier", "--linkage", "ML", "--k", "2"]) == 0
    assert capsys.readouterr().out.split() == ["0", "0", "1", "1"]


def test_bad_input_exits_1(e0_dir, tmp_path, capsys):
    assert main(["consensus", str(e0_dir), "--algo", "nope", "--k", "2"]) == 1
    assert "unknown algorithm" in capsys.readouterr().err
    assert main(["consensus", str(e0_dir), "--algo", "KM", "--k", "1"]) == 1
    assert main(["nmi", str(tmp_path / "missing.txt"), str(tmp_path / "missing.txt")]) == 1


def test_density_verb(e0_dir, tmp_path, capsys):
    lab = tmp_path / "l.txt"
    write_labels(lab, [0, 0, 1, 1])
    assert main(["density", str(e0_dir), str(lab), "--csv", str(tmp_path / "d.csv")]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[-1] == "score,1.000000"
    assert (tmp_path / "d.csv").exists()


def test_nmi_verb(tmp_path, capsys):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    write_labels(a, [0, 0, 1, 1])
    write_labels(b, [0, 1, 2, 2])
    assert main(["nmi", str(a), str(b)]) == 0
    assert capsys.readouterr().out.strip() == "0.800000"


def test_partition_graph_verb(tmp_path, capsys):
    src = ROOT / "tests" / "fixtures" / "graphs" / "two_cliques_4.txt"
    out = tmp_path / "parts.txt"
    assert main(["partition-graph", str(src), "--k", "2", "--out", str(out)]) == 0
    labels = read_labels(out).labels.tolist()
    assert sorted(labels) == [0, 0, 1, 1]
    assert "edge_cut=0 " in capsys.readouterr().err


def test_ensemble_verb(tmp_path):
    blobs_csv(tmp_path / "b.csv")
    spec = tmp_path / "b.json"
    spec.write_text('{"name": "b", "path": "b.csv", "label": "cls"}')
    out = tmp_path / "ens"
    assert main(["ensemble", str(spec), "--p", "4", "--seed", "1", "--restarts", "1", "--out", str(out)]) == 0
    ens = read_ensemble(out)
    assert isinstance(ens, ClusterEnsemble) and ens.p == 4 and ens.n == 60


def test_run_verb(tmp_path, capsys):
    blobs_csv(tmp_path / "b.csv")
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "datasets": [{"name": "b", "path": "b.csv", "label": "cls"}],
        "repetitions": 1, "ensemble_size": 4, "k_out": 3, "base_restarts": 1,
        "algorithms": [{"name": "KM", "algorithm": "eac_km"}],
    }))
    assert main(["run", str(cfg), "--out", str(tmp_path / "res"), "--seed", "5"]) == 0
    for f in ("records.csv", "timings.csv", "summary.csv", "nmi_table.md", "density_table.csv"):
        assert (tmp_path / "res" / f).exists()
    assert "records written" in capsys.readouterr().out
