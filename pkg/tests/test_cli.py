import csv
import json
import math

import pytest

from hallmhd.cli import EXIT_ANOMALY, EXIT_CONFIG, EXIT_OK, main
from hallmhd import snapshot

NOISE = {"directions": [
    {"field": 1, "b": [[{"m": [0, 0, 0], "cos": 0.5}], [], []], "c": [{"m": [0, 0, 0], "cos": 0.3}]},
    {"field": 2, "c": [{"m": [0, 0, 0], "cos": 0.3}]},
]}


def small_config(**kw):
    cfg = {"N": 8, "n": 2, "T": 0.05, "dt": 0.01, "seed": 3,
           "X0": {"kind": "random_solenoidal", "amplitude": 0.5, "seed": 1},
           "noise": NOISE, "record": {"snapshot_stride": 5}}
    cfg.update(kw)
    return cfg


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def outputs(out):
    return json.loads((out / "manifest.json").read_text())["outputs"]


def test_verify_clean_build(tmp_path):
    out = tmp_path / "v"
    assert main(["verify", "--out", str(out), "--seeds", "3"]) == EXIT_OK
    res = json.loads((out / "verify.json").read_text())
    assert res["passed"] and all(res["checks"].values())
    assert "verify.json" in outputs(out)


def test_simulate_writes_artifacts(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", write(tmp_path, small_config(n_paths=5)), "--out", str(out)]) == EXIT_OK
    with open(out / "energies.csv") as f:
        rows = list(csv.DictReader(f))
    assert {r["path"] for r in rows} == {"0"}
    assert len(rows) == 6
    assert float(rows[0]["t"]) == 0.0
    snaps = sorted((out / "snapshots").iterdir())
    assert len(snaps) == 2
    _, t = snapshot.read(snaps[-1])
    assert t == pytest.approx(0.05)
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == "simulate" and man["config"]["n_paths"] == 1
    assert man["config"]["noise"]["admissibility"]["passed"]
    assert json.loads((out / "report.json").read_text())["n_paths"] == 1


def test_ensemble_path_count_override(tmp_path):
    out = tmp_path / "ens"
    assert main(["ensemble", "--config", write(tmp_path, small_config()), "--out", str(out),
                 "--paths", "4"]) == EXIT_OK
    with open(out / "energies.csv") as f:
        assert {r["path"] for r in csv.DictReader(f)} == {"0", "1", "2", "3"}


def test_rerun_and_thread_count_give_identical_hashes(tmp_path):
    cfg = write(tmp_path, small_config(n_paths=12, chunk_size=4))
    runs = []
    for i, threads in enumerate(["1", "1", "8"]):
        out = tmp_path / f"r{i}"
        assert main(["ensemble", "--config", cfg, "--out", str(out), "--threads", threads]) == EXIT_OK
        runs.append(outputs(out))
    assert runs[0] == runs[1] == runs[2]
    assert any(k.startswith("snapshots/") for k in runs[0])


def test_sweep_n_runs_three_coupled_cutoffs(tmp_path):
    cfg = small_config(N=18, L=math.pi, n=4, T=0.02, dt=0.005, n_paths=2)
    cfg["record"] = {"snapshot_stride": 0}
    out = tmp_path / "sn"
    assert main(["sweep-n", "--config", write(tmp_path, cfg), "--out", str(out), "--values", "4,8,16"]) == EXIT_OK
    for n in (4, 8, 16):
        assert (out / f"energies_n{n}.csv").exists()
    conv = json.loads((out / "convergence.json").read_text())
    assert set(conv["per_n"]) == {"4", "8", "16"}


def test_sweep_dt(tmp_path):
    out = tmp_path / "sd"
    cfg = small_config(T=0.04, n_paths=2, record={"snapshot_stride": 0})
    assert main(["sweep-dt", "--config", write(tmp_path, cfg), "--out", str(out),
                 "--values", "0.01,0.005"]) == EXIT_OK
    res = json.loads((out / "dt_sweep.json").read_text())
    assert [r["dt"] for r in res["rows"]] == [0.01, 0.005]
    assert res["slope"] is not None


def test_sweep_without_values_is_a_config_error(tmp_path):
    assert main(["sweep-n", "--config", write(tmp_path, small_config()), "--out", str(tmp_path / "x")]) == EXIT_CONFIG


@pytest.mark.parametrize("cfg", [
    small_config(n=4),
    small_config(noise={"directions": [{"field": 1, "b": [[{"m": [0, 0, 0], "cos": 1.5}], [], []]}]}),
    {"N": 8},
])
def test_bad_config_exit_code(tmp_path, cfg):
    assert main(["simulate", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_missing_config_file(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert main(["simulate", "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_guard_hit_exits_with_anomaly(tmp_path):
    out = tmp_path / "g"
    assert main(["simulate", "--config", write(tmp_path, small_config(R_guard=0.0)), "--out", str(out)]) == EXIT_ANOMALY
    assert (out / "manifest.json").exists()
