import json
import subprocess
import sys

import pytest

from higen.cli import main
from higen.datasets import toy_graph
from higen.graph import build_hg, read_hg_jsonl, write_hg_jsonl


def cli(*argv):
    return main([str(a) for a in argv])


def run(capsys, *argv):
    code = cli(*argv)
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """synth -> split -> build-hg -> train -> generate, shared by the tests below."""
    d = tmp_path_factory.mktemp("pipe")
    assert cli("synth-sbm", "--out", d / "all.txt", "--num", "12", "--communities", "2", "2",
               "--sizes", "5", "7", "--p-intra", "0.6", "--p-inter", "0.1", "--seed", "1",
               "--blocks", d / "blocks.json") == 0
    assert cli("split", "--input", d / "all.txt", "--out", d, "--seed", "0") == 0
    assert cli("build-hg", "--input", d / "train.txt", "--depth", "2", "--out", d / "train.jsonl") == 0
    (d / "cfg.json").write_text(json.dumps({"model": {"hidden_dim": 8, "layers": 2, "k_eig": 4, "k_rw": 4,
                                                      "mixtures": 3},
                                            "train": {"steps": 15, "batch_size": 4, "lr": 1e-3}}))
    assert cli("train", "--hg", d / "train.jsonl", "--config", d / "cfg.json", "--out", d / "run") == 0
    assert cli("generate", "--ckpt", d / "run", "--num", "6", "--seed", "3", "--out", d / "gen.txt",
               "--trace", d / "gen.jsonl") == 0
    return d


def test_pipeline_outputs(pipeline):
    d = pipeline
    assert (d / "train.txt").exists() and (d / "test.txt").exists()
    for name in ("config.json", "train_log.csv", "model.json", "loss.png"):
        assert (d / "run" / name).stat().st_size > 0
    assert len(read_hg_jsonl(d / "gen.jsonl")) == 6


def test_eval_report(pipeline, capsys):
    d = pipeline
    code, out, _ = run(capsys, "eval", "--samples", d / "gen.txt", "--reference", d / "test.txt",
                       "--metrics", "degree,clustering,orbit,spectral", "--kernel", "tv", "--out", d / "ev")
    assert code == 0
    summary = json.loads(out.strip().splitlines()[-1])
    assert set(summary) >= {"degree", "clustering", "orbit", "spectral", "modularity_samples"}
    report = json.loads((d / "ev" / "report.json").read_text())
    assert all(v["value"] >= 0 for v in report["mmd"].values())
    for name in ("stats.csv", "stats.png", "modularity.png"):
        assert (d / "ev" / name).stat().st_size > 0


def test_config_round_trip_reproduces(pipeline, tmp_path):
    d = pipeline
    dumped = json.loads((d / "run" / "config.json").read_text())
    (tmp_path / "cfg.json").write_text(json.dumps(dumped))
    assert cli("train", "--hg", d / "train.jsonl", "--config", tmp_path / "cfg.json", "--out", tmp_path) == 0
    assert (tmp_path / "train_log.csv").read_text().split("\n")[1].split(",")[:2] == \
        (d / "run" / "train_log.csv").read_text().split("\n")[1].split(",")[:2]
    assert cli("generate", "--ckpt", tmp_path, "--num", "6", "--seed", "3", "--out", tmp_path / "gen.txt") == 0
    assert (tmp_path / "gen.txt").read_text() == (d / "gen.txt").read_text()


def test_inspect_w0_constant(capsys, tmp_path):
    g = toy_graph()
    write_hg_jsonl([build_hg(g, [[0, 0, 0, 1, 1, 1], [0, 0]])], tmp_path / "hg.jsonl")
    code, out, _ = run(capsys, "inspect", "--hg", tmp_path / "hg.jsonl", "--out", tmp_path / "ins")
    assert code == 0
    table = [line.split("\t") for line in out.split("\n\n")[0].splitlines()[1:]]
    assert {row[3] for row in table} == {"7"}
    doc = json.loads(out.split("\n\n", 1)[1])
    assert all(row["w0"] == [7] for row in doc["levels"])
    assert doc["levels"][2]["max_community"] == 3
    assert (tmp_path / "ins" / "levels.png").exists()


def test_oracle_check_small(capsys):
    code, out, _ = run(capsys, "oracle-check", "--max-dims", "2", "--max-total", "3", "--trials", "5",
                       "--draws", "20000", "--tv-tol", "0.05")
    assert code == 0
    assert json.loads(out.strip().splitlines()[-1])["pass"] is True


def test_grad_check_default(capsys):
    code, out, _ = run(capsys, "grad-check", "--coords", "2")
    assert code == 0 and out.startswith("tensor\tmax_rel_err")


def test_validation_failures(capsys, tmp_path):
    (tmp_path / "bad.txt").write_text("0 1 1\n1 2 oops\n")
    code, _, err = run(capsys, "build-hg", "--input", tmp_path / "bad.txt", "--depth", "2",
                       "--out", tmp_path / "x.jsonl")
    assert code == 2 and "line 2" in err
    code, _, _ = run(capsys, "generate", "--ckpt", tmp_path / "missing", "--out", tmp_path / "g.txt")
    assert code == 2
    (tmp_path / "cfg.json").write_text(json.dumps({"optimizer": {}}))
    code, _, err = run(capsys, "train", "--hg", tmp_path / "x.jsonl", "--config", tmp_path / "cfg.json",
                       "--out", tmp_path)
    assert code == 2


def test_unknown_command_usage():
    proc = subprocess.run([sys.executable, "-m", "higen.cli", "frobnicate"], capture_output=True, text=True)
    assert proc.returncode != 0 and "usage" in proc.stderr
    proc = subprocess.run([sys.executable, "-m", "higen.cli", "eval", "--bogus"], capture_output=True, text=True)
    assert proc.returncode != 0 and "usage" in proc.stderr
