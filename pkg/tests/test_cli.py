import json
import os
import subprocess
import sys

import numpy as np
import pytest

from partsim.cli import main
from partsim.model import load

from helpers import random_interactions


@pytest.fixture()
def dataset(tmp_path):
    """Small train/test split written as tab-separated files."""
    m = random_interactions(0, n_users=40, n_items=25, density=0.3)
    rng = np.random.default_rng(1)
    train_lines, test_lines = [], []
    csr = m.matrix
    for u in range(m.n_users):
        items = csr.indices[csr.indptr[u]:csr.indptr[u + 1]].tolist()
        rng.shuffle(items)
        cut = max(1, len(items) - 2)
        for i in items[:cut]:
            train_lines.append(f"u{u}\ti{i}")
        for i in items[cut:]:
            test_lines.append(f"u{u}\ti{i}")
    # keep every item trained at least once
    trained_items = {line.split("\t")[1] for line in train_lines}
    test_lines = [l for l in test_lines if l.split("\t")[1] in trained_items]
    train = tmp_path / "train.txt"
    test = tmp_path / "test.txt"
    train.write_text("\n".join(train_lines) + "\n")
    test.write_text("\n".join(test_lines) + "\n")
    return train, test


def run_cli(args, capsys):
    code = main([str(a) for a in args])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_ingest_reports_counts(dataset, capsys):
    train, _ = dataset
    code, out, _ = run_cli(["ingest", "--train", train, "--json"], capsys)
    assert code == 0
    report = json.loads(out)
    assert report["n_users"] == 40
    assert report["n_interactions"] > 0


def test_ingest_missing_file_fails(tmp_path, capsys):
    code, _, err = run_cli(["ingest", "--train", tmp_path / "nope.txt"], capsys)
    assert code == 1


def test_train_evaluate_recommend_flow(dataset, tmp_path, capsys):
    train, test = dataset
    model_path = tmp_path / "model.bin"
    code, out, _ = run_cli([
        "train", "--train", train, "--model", model_path,
        "--k", 5, "--tau", 0.5, "--seed", 3, "--admm-iters", 40,
        "--json",
    ], capsys)
    assert code == 0
    report = json.loads(out)
    assert report["n_partitions"] >= 2
    assert model_path.exists()

    code, out, _ = run_cli([
        "evaluate", "--model", model_path, "--train", train,
        "--test", test, "--top-k", 10, "--json",
    ], capsys)
    assert code == 0
    metrics = json.loads(out)
    assert 0.0 <= metrics["recall_at_k"] <= 1.0
    assert metrics["n_users_evaluated"] > 0

    code, out, _ = run_cli([
        "recommend", "--model", model_path, "--train", train,
        "--users", "u0,u1", "--top-k", 3,
    ], capsys)
    assert code == 0
    lines = [l for l in out.splitlines() if l]
    assert len(lines) == 6
    user, rank, item, value = lines[0].split("\t")
    assert user == "u0" and rank == "1"
    float(value)


def test_train_is_bit_deterministic(dataset, tmp_path, capsys):
    train, _ = dataset
    paths = [tmp_path / "a.bin", tmp_path / "b.bin"]
    for path in paths:
        code, _, _ = run_cli([
            "train", "--train", train, "--model", path,
            "--k", 4, "--tau", 0.5, "--seed", 11, "--threads", 2,
        ], capsys)
        assert code == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_train_report_dir_writes_csv_and_figure(dataset, tmp_path, capsys):
    train, _ = dataset
    report_dir = tmp_path / "report"
    code, _, _ = run_cli([
        "train", "--train", train, "--model", tmp_path / "m.bin",
        "--k", 4, "--tau", 0.5, "--report-dir", report_dir,
    ], capsys)
    assert code == 0
    assert (report_dir / "stages.csv").exists()
    assert (report_dir / "stages.png").stat().st_size > 0


def test_config_file_with_cli_override(dataset, tmp_path, capsys):
    train, _ = dataset
    conf = tmp_path / "run.conf"
    conf.write_text(f"train = {train}\nk = 4\ntau = 0.6\nseed = 5\nmodel = {tmp_path/'c.bin'}\n")
    code, out, _ = run_cli([
        "train", "--config", conf, "--tau", 0.4, "--json",
    ], capsys)
    assert code == 0
    model = load(tmp_path / "c.bin")
    assert model.assignment.tau == 0.4


def test_evaluate_out_dir_writes_reports(dataset, tmp_path, capsys):
    train, test = dataset
    model_path = tmp_path / "model.bin"
    run_cli(["train", "--train", train, "--model", model_path,
             "--k", 4, "--tau", 0.5], capsys)
    out_dir = tmp_path / "eval"
    code, _, _ = run_cli([
        "evaluate", "--model", model_path, "--train", train, "--test", test,
        "--out-dir", out_dir,
    ], capsys)
    assert code == 0
    assert (out_dir / "report.json").exists()
    assert (out_dir / "report.txt").exists()
    assert (out_dir / "metrics.png").stat().st_size > 0


def test_ablate_emits_four_variants(dataset, tmp_path, capsys):
    train, test = dataset
    out_dir = tmp_path / "ablation"
    code, out, _ = run_cli([
        "ablate", "--train", train, "--test", test,
        "--k", 4, "--tau", 0.5, "--admm-iters", 30, "--json",
        "--out-dir", out_dir,
    ], capsys)
    assert code == 0
    rows = json.loads(out)["rows"]
    assert [r["variant"] for r in rows] == ["full", "eta=0", "lam=0", "theta_2=0"]
    assert (out_dir / "ablation.csv").exists()
    assert (out_dir / "ablation.png").stat().st_size > 0
    csv_lines = (out_dir / "ablation.csv").read_text().strip().splitlines()
    assert len(csv_lines) == 5


def test_diagnose_connectivity(dataset, tmp_path, capsys):
    train, _ = dataset
    out_dir = tmp_path / "diag"
    code, out, _ = run_cli([
        "diagnose", "connectivity", "--train", train,
        "--k-min", 2, "--k-max", 8, "--k-step", 2,
        "--out-dir", out_dir, "--json",
    ], capsys)
    assert code == 0
    points = json.loads(out)["points"]
    assert [p["k_neighbors"] for p in points] == [2, 4, 6, 8]
    header = (out_dir / "connectivity.csv").read_text().splitlines()[0]
    assert header == "k_neighbors,fiedler_value"
    assert (out_dir / "connectivity.png").stat().st_size > 0


def test_diagnose_partitions(dataset, tmp_path, capsys):
    train, _ = dataset
    out_dir = tmp_path / "parts"
    code, out, _ = run_cli([
        "diagnose", "partitions", "--train", train, "--tau", 0.4,
        "--k", 4, "--out-dir", out_dir, "--json",
    ], capsys)
    assert code == 0
    report = json.loads(out)
    assert report["n_partitions"] >= 2
    lines = (out_dir / "partitions.csv").read_text().splitlines()
    assert lines[0] == "node_id,depth,size,fiedler_value,left_size,right_size,unsplittable"
    assert len(lines) >= report["n_partitions"]
    assert (out_dir / "partitions.png").stat().st_size > 0


def test_grid_search_picks_grid_member(dataset, capsys):
    train, _ = dataset
    code, out, _ = run_cli([
        "grid-search", "--train", train, "--k", 4, "--tau", 0.5,
        "--grid", "theta_1=0.2,1.0", "--grid", "lam=0.0,0.5",
        "--json",
    ], capsys)
    assert code == 0
    report = json.loads(out)
    assert report["best"]["theta_1"] in (0.2, 1.0)
    assert report["best"]["lam"] in (0.0, 0.5)
    assert len(report["rows"]) == 4
    best_val = max(row["recall"] for row in report["rows"])
    chosen = [r for r in report["rows"]
              if r["theta_1"] == report["best"]["theta_1"]
              and r["lam"] == report["best"]["lam"]][0]
    assert chosen["recall"] == best_val


def test_fetch_dataset_from_file_urls(dataset, tmp_path, capsys):
    train, test = dataset
    manifest = tmp_path / "manifest.conf"
    manifest.write_text(
        f"demo.train = file://{train}\n"
        f"demo.test = file://{test}\n"
    )
    out_dir = tmp_path / "fetched"
    code, out, _ = run_cli([
        "fetch-dataset", "--manifest", manifest, "--name", "demo",
        "--out-dir", out_dir, "--json",
    ], capsys)
    assert code == 0
    assert (out_dir / "demo" / "train.txt").read_text() == train.read_text()
    assert (out_dir / "demo" / "test.txt").read_text() == test.read_text()


def test_fetch_dataset_adjacency_conversion(tmp_path, capsys):
    raw = tmp_path / "adj.txt"
    raw.write_text("0 5 7 9\n1 5\n")
    manifest = tmp_path / "manifest.conf"
    manifest.write_text(
        f"adj.train = file://{raw}\n"
        f"adj.test = file://{raw}\n"
        "adj.format = adjacency\n"
    )
    out_dir = tmp_path / "fetched"
    code, _, _ = run_cli([
        "fetch-dataset", "--manifest", manifest, "--name", "adj",
        "--out-dir", out_dir,
    ], capsys)
    assert code == 0
    converted = (out_dir / "adj" / "train.txt").read_text().splitlines()
    assert converted == ["0\t5", "0\t7", "0\t9", "1\t5"]


def test_fetch_dataset_missing_manifest_entry(tmp_path, capsys):
    manifest = tmp_path / "manifest.conf"
    manifest.write_text("other.train = file:///nowhere\n")
    code, _, err = run_cli([
        "fetch-dataset", "--manifest", manifest, "--name", "demo",
        "--out-dir", tmp_path,
    ], capsys)
    assert code == 1


def test_module_entry_point(dataset, tmp_path):
    train, _ = dataset
    env = dict(os.environ)
    env["PYTHONPATH"] = os.pathsep.join(
        [os.path.join(os.path.dirname(os.path.dirname(__file__)), "src"),
         env.get("PYTHONPATH", "")]
    )
    proc = subprocess.run(
        [sys.executable, "-m", "partsim", "ingest", "--train", str(train), "--json"],
        capture_output=True, text=True, env=env,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["n_users"] == 40
