import json
import subprocess
import sys

import numpy as np
import pytest

from graphscan.cli import DetectionReport, critical_table, default_n0, main
from graphscan.graph import build_mst, compute_distances
from graphscan.io import InputFormatError, read_distances, read_edges, read_observations, write_edges

from conftest import shifted_sequence


@pytest.fixture
def obs_csv(tmp_path):
    obs = shifted_sequence(40, 20, d=2, shift=3.0, seed=1)
    path = tmp_path / "obs.csv"
    with open(path, "w") as fh:
        fh.write("x,y\n")
        for row in obs:
            fh.write(f"{float(row[0])!r},{float(row[1])!r}\n")
    return path


@pytest.fixture
def edges_tsv(tmp_path):
    g = build_mst(compute_distances(shifted_sequence(40, 20, d=2, shift=3.0, seed=1)))
    path = tmp_path / "g.tsv"
    write_edges(path, g)
    return path


def run(args, capsys):
    code = main([str(a) for a in args])
    return code, capsys.readouterr()


def test_read_observations_header(obs_csv):
    obs, header = read_observations(obs_csv)
    assert obs.shape == (40, 2) and header == ["x", "y"]


def test_read_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2\n3,4\n5\n")
    with pytest.raises(InputFormatError, match="line 3"):
        read_observations(bad)
    bad.write_text("1,2\n3,oops\n")
    with pytest.raises(InputFormatError, match="line 2"):
        read_observations(bad)
    bad.write_text("0,1\n1,0\n2,2\n")
    with pytest.raises(InputFormatError):
        read_distances(bad)
    bad.write_text("# c\n1 2\n2 9\n")
    with pytest.raises(InputFormatError, match="line 3"):
        read_edges(bad, 4)


def test_edges_round_trip(edges_tsv):
    g = read_edges(edges_tsv, 40)
    assert g.edge_count == 39


def test_detect_observations(obs_csv, tmp_path, capsys):
    out, prof = tmp_path / "r.json", tmp_path / "p.tsv"
    code, _ = run(["detect", "--input", obs_csv, "--k", 1, "--stat", "zw", "--out", out,
                   "--profile", prof], capsys)
    assert code == 0
    rep = DetectionReport.from_json(out.read_text())
    assert abs(rep.location[0] - 20) <= 3
    assert rep.window == [10, 30]
    for key in ("asymptotic", "skew_corrected"):
        assert 0 <= rep.pvalues[key] <= 1
    lines = prof.read_text().splitlines()
    assert lines[0].split("\t")[0] == "t" and len(lines) == 40


def test_detect_edges_two_cluster(edges_tsv, capsys):
    code, cap = run(["detect", "--edges", edges_tsv, "--n", 40, "--stat", "zw", "--alt", "single"], capsys)
    assert code == 0
    rep = json.loads(cap.out)
    assert abs(rep["location"][0] - 20) <= 3
    assert rep["input"]["kind"] == "edges"


def test_detect_interval_l1(obs_csv, tmp_path, capsys):
    out = tmp_path / "r.json"
    code, _ = run(["detect", "--input", obs_csv, "--metric", "l1", "--k", 1, "--stat", "m",
                   "--alt", "interval", "--l0", 3, "--pvalue", "skew", "--perms", 0, "--out", out], capsys)
    assert code == 0
    rep = DetectionReport.from_json(out.read_text())
    assert rep.alternative == "interval" and len(rep.location) == 2
    assert 3 <= rep.location[1] - rep.location[0] <= 37
    assert rep.pvalues["permutation"] is None


def test_detect_permutation(obs_csv, capsys):
    code, cap = run(["detect", "--input", obs_csv, "--stat", "s", "--pvalue", "all", "--perms", 99,
                     "--seed", 3], capsys)
    rep = json.loads(cap.out)
    assert code == 0
    assert rep["pvalues"]["permutation"]["B"] == 99
    assert rep["pvalues"]["permutation"]["p"] == pytest.approx(0.01)
    assert rep["pvalues"]["skew_corrected"] is None


def test_report_round_trip(obs_csv, capsys):
    _, cap = run(["detect", "--input", obs_csv, "--perms", 50], capsys)
    rep = DetectionReport.from_json(cap.out)
    assert DetectionReport.from_json(rep.to_json()) == rep
    assert rep.to_json() == cap.out


def test_exit_codes(obs_csv, edges_tsv, tmp_path, capsys):
    assert run(["detect"], capsys)[0] == 2
    assert run(["detect", "--input", tmp_path / "missing.csv"], capsys)[0] == 3
    malformed = tmp_path / "m.csv"
    malformed.write_text("1,2\n3\n")
    assert run(["detect", "--input", malformed], capsys)[0] == 3
    assert run(["detect", "--input", obs_csv, "--n0", 30, "--n1", 10], capsys)[0] == 4
    assert run(["detect", "--edges", edges_tsv, "--n", 40, "--metric", "l1"], capsys)[0] == 5
    assert run(["detect", "--input", obs_csv, "--k", 30], capsys)[0] == 5
    assert run(["detect", "--input", obs_csv, "--pvalue", "perm", "--perms", 0], capsys)[0] == 5
    code, cap = run(["detect", "--edges", edges_tsv], capsys)
    assert code == 2 and "--n" in cap.err


def test_default_n0():
    assert default_n0(1000) == 20 and default_n0(40) == 10


def test_critical_command(capsys):
    code, cap = run(["critical", "--stat", "zw", "--n", 1000, "--n0", 100, 75, 50, 25], capsys)
    assert code == 0
    lines = cap.out.strip().splitlines()
    assert lines[0].split("\t") == ["alpha", "row", "n0=100", "n0=75", "n0=50", "n0=25"]
    vals = [float(v) for v in lines[1].split("\t")[2:]]
    assert np.allclose(vals, [2.98, 3.02, 3.08, 3.14], atol=0.02)


def test_critical_table_with_graph(obs_csv):
    from graphscan.graph import build_kmst
    obs, _ = read_observations(obs_csv)
    g = build_kmst(compute_distances(obs), 1)
    text = critical_table("Zw", [0.05], 40, [8, 10], g=g)
    rows = [line.split("\t")[1] for line in text.strip().splitlines()[1:]]
    assert rows == ["A1", "A2"]


def test_simulate_byte_identical(tmp_path, capsys):
    args = ["simulate", "--n", 60, "--d", 3, "--tau", 30, "--trials", 20, "--seed", 4, "--n0", 8,
            "--perms", 50, "--stats", "zw,m,ht"]
    a, b = tmp_path / "a.tsv", tmp_path / "b.tsv"
    assert run(args + ["--out", a], capsys)[0] == 0
    assert run(args + ["--out", b, "--threads", 3], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    for line in a.read_text().splitlines()[2:]:
        assert int(line.split("\t")[1]) <= 20


def test_simulate_bad_scenario(tmp_path, capsys):
    code, cap = run(["simulate", "--n", 50, "--tau", 80, "--sigma", -1], capsys)
    assert code == 2 and "tau=80" in cap.err and "sigma=-1" in cap.err
    f = tmp_path / "sc.txt"
    f.write_text("n=80\ntau=40\ntrials=2\n")
    assert run(["simulate", "--scenario", f, "--perms", 30, "--stats", "zw"], capsys)[0] == 0


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "graphscan", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "detect" in proc.stdout
