import json
import math
import subprocess
import sys

import pytest

from ppgmm.cli import main, read_config, resolve
from ppgmm.graph import fig1_graph, is_connected, read_edgelist, write_edgelist
from ppgmm.data import write_parkinsons_standin


def _run(argv, capsys):
    code = main(argv)
    cap = capsys.readouterr()
    return code, cap.out.split(), cap.err


def _rerun_identical(files, command, tmp_path, capsys, name):
    again = tmp_path / name
    code, new_files, _ = _run([command, "--config", str(files[0]), "--out", str(again)], capsys)
    assert code == 0
    for old, new in zip(sorted(files), sorted(new_files)):
        assert open(old, "rb").read() == open(new, "rb").read(), old


def test_graph_gen_default(tmp_path, capsys):
    code, files, _ = _run(["graph-gen", "--seed", "3", "--out", str(tmp_path / "a")], capsys)
    assert code == 0
    g = read_edgelist(files[0])
    assert g.n == 80 and is_connected(g)
    report = json.loads(open(files[1]).read())
    assert report["radius"] == pytest.approx(math.sqrt(2 * math.log(80) / 80))
    assert report["config"]["seed"] == 3
    _rerun_identical(files, "graph-gen", tmp_path, capsys, "b")


def test_graph_gen_zero_radius(tmp_path, capsys):
    code, _, err = _run(["graph-gen", "--radius", "0", "--retries", "5", "--out", str(tmp_path)], capsys)
    assert code == 1
    assert json.loads(err)["error"] == "RetriesExhausted"


@pytest.mark.parametrize("protocol", ["federated", "secure-sum"])
def test_em_run_exact_protocols(tmp_path, capsys, protocol):
    code, files, _ = _run(["em-run", "--protocol", protocol, "--graph", "fig1", "--components", "2",
                           "--iters", "6", "--out", str(tmp_path / "a")], capsys)
    assert code == 0
    traj = json.loads(open(files[0]).read())
    assert len(traj["loglik"]) == 7
    assert max(abs(d) / abs(c) for d, c in zip(traj["loglik_deviation"], traj["centralized_loglik"])) <= 1e-12
    header = open(files[1]).read().splitlines()[1]
    assert header == "iter,loglik,centralized_loglik,abs_deviation,param_deviation"
    first = json.loads(open(files[2]).readline())
    assert first["config"]["protocol"] == protocol.replace("-", "_")
    _rerun_identical(files, "em-run", tmp_path, capsys, "b")


def test_em_run_subspace_from_files(tmp_path, capsys):
    gpath = tmp_path / "g.edgelist"
    write_edgelist(fig1_graph(), gpath)
    dpath = write_parkinsons_standin(tmp_path / "parkinsons.data", seed=0)
    code, files, _ = _run(["em-run", "--protocol", "subspace", "--graph", str(gpath), "--dataset",
                           "parkinsons", "--data", str(dpath), "--iters", "4", "--consensus-tol",
                           "1e-9", "--no-transcript", "--out", str(tmp_path / "a")], capsys)
    assert code == 0 and len(files) == 2
    traj = json.loads(open(files[0]).read())
    assert traj["max_loglik_deviation"] < 1e-5
    assert traj["points"] == 195
    _rerun_identical(files, "em-run", tmp_path, capsys, "b")


def test_em_run_without_cycle(tmp_path, capsys):
    gpath = tmp_path / "star.edgelist"
    gpath.write_text("5 4\n1 2\n1 3\n1 4\n1 5\n")
    code, _, err = _run(["em-run", "--protocol", "secure_sum", "--graph", str(gpath), "--out",
                         str(tmp_path)], capsys)
    assert code == 1 and json.loads(err)["error"] == "NotFound"


def test_privacy_audit(tmp_path, capsys):
    code, files, _ = _run(["privacy-audit", "--trials", "1500", "--em-iters", "2", "--out",
                           str(tmp_path / "a")], capsys)
    assert code == 0
    summary = json.loads(open(tmp_path / "a" / "privacy_audit.json").read())
    fed = summary["protocols"]["federated"]["nmi"]
    sub = summary["protocols"]["subspace"]["nmi"]
    assert all(v >= 0.9 for v in fed) and all(s < f for s, f in zip(sub, fed))
    lines = open(tmp_path / "a" / "nmi_subspace.csv").read().splitlines()
    assert lines[1] == "iter,nmi,stderr" and len(lines) == 4
    _rerun_identical(files, "privacy-audit", tmp_path, capsys, "b")


def test_privacy_audit_errors(tmp_path, capsys):
    code, _, err = _run(["privacy-audit", "--trials", "10", "--out", str(tmp_path)], capsys)
    assert code == 1 and json.loads(err)["error"] == "InsufficientSamples"
    code, _, err = _run(["privacy-audit", "--protocol", "subspace", "--corrupt", "1,3,4", "--target",
                         "2", "--trials", "100", "--out", str(tmp_path)], capsys)
    assert code == 1 and json.loads(err)["error"] == "HonestSubgraphDisconnected"


def test_privacy_audit_no_corruption_leaks_less(tmp_path, capsys):
    base = ["privacy-audit", "--protocol", "subspace", "--trials", "3000", "--em-iters", "1"]
    _run(base + ["--corrupt", "", "--out", str(tmp_path / "none")], capsys)
    _run(base + ["--out", str(tmp_path / "some")], capsys)
    none = json.loads(open(tmp_path / "none" / "privacy_audit.json").read())
    some = json.loads(open(tmp_path / "some" / "privacy_audit.json").read())
    assert none["protocols"]["subspace"]["nmi"][0] < some["protocols"]["subspace"]["nmi"][0]


def test_calibrate_mi_small(tmp_path, capsys):
    code, files, _ = _run(["calibrate-mi", "--rhos", "0,0.9", "--sizes", "10000", "--repetitions", "2",
                           "--out", str(tmp_path / "a")], capsys)
    assert code == 0
    cells = json.loads(open(files[1]).read())["cells"]
    assert abs(cells[0]["mean_estimate"]) < 0.02
    assert cells[1]["rel_error"] < 0.1
    _rerun_identical(files, "calibrate-mi", tmp_path, capsys, "b")


def test_config_file_and_overrides(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"n": 20, "seed": 4}))
    cfg = resolve("graph-gen", read_config(p), {"seed": 5})
    assert cfg["n"] == 20 and cfg["seed"] == 5
    with pytest.raises(ValueError):
        resolve("graph-gen", {"bogus": 1})


def test_output_dir_from_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("PPGMM_OUTPUT_DIR", str(tmp_path / "env"))
    code, files, _ = _run(["graph-gen", "--n", "10", "--radius", "0.8"], capsys)
    assert code == 0 and all(str(tmp_path / "env") in f for f in files)


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "ppgmm", "graph-gen", "--n", "8", "--radius", "1.5",
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert out.returncode == 0 and "graph.edgelist" in out.stdout
