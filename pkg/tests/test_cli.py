import json
import os
import subprocess
import sys

import pytest
import yaml

from solitonq.cli import main

FAST_MCMC = {"chains": 4, "samples_per_chain": 40000, "burn_in": 4000}


def write(tmp_path, cfg, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg))
    return str(path)


def results(out):
    return json.loads((out / "results.json").read_text())["results"]


def test_sample_minimal(tmp_path):
    out = tmp_path / "run"
    code = main(["sample", "--config", write(tmp_path, {"mcmc": FAST_MCMC}), "--out", str(out)])
    assert code == 0
    r = results(out)
    d = r["mean_abs_distance"]
    assert d["provenance"] == "sampled" and abs(d["value"] - 1.0) < 4 * d["se"]
    assert (out / "log.txt").exists() and (out / "data" / "trace.csv").exists()
    assert not (out / ".lock").exists()
    assert not [p for p in out.iterdir() if p.name.startswith(".staging")]


def test_unbound_config_rejected(tmp_path, capsys):
    cfg = write(tmp_path, {"params": {"b": 1.0, "c": 1.0}})
    assert main(["sample", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "no bound state" in capsys.readouterr().err
    assert not (tmp_path / "o" / "results.json").exists()


@pytest.mark.parametrize("cfg", [{"parms": {"b": -1.0}}, {"mcmc": {"chain": 4}},
                                 {"kind": "epr"}, {"params": {"n": -1}}])
def test_schema_is_strict(tmp_path, cfg):
    assert main(["sample", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 2


def test_missing_config_file(tmp_path):
    assert main(["sample", "--config", str(tmp_path / "nope.yaml")]) == 2


def test_numerical_failure_exit_3(tmp_path):
    cfg = write(tmp_path, {"mcmc": {"chains": 2, "samples_per_chain": 400, "burn_in": 40}})
    out = tmp_path / "o"
    assert main(["sample", "--config", cfg, "--out", str(out)]) == 3
    assert not (out / "results.json").exists()
    assert list(out.iterdir()) == []


def test_lock_blocks_second_run(tmp_path):
    out = tmp_path / "o"
    out.mkdir()
    (out / ".lock").touch()
    assert main(["bethe-eval", "--config", write(tmp_path, {}), "--out", str(out)]) == 2


def test_full_pipeline_two_photons(tmp_path):
    out = tmp_path / "o"
    cfg = write(tmp_path, {"protocol": {"gamma": 4}})
    assert main(["full-pipeline", "--config", cfg, "--out", str(out)]) == 0
    r = results(out)
    assert [s["stage"] for s in r["stages"]] == ["adiabatic", "dispersion-management", "epr"]
    assert r["gamma"]["value"] == pytest.approx(4.0)
    # the cap sqrt(2/q) sqrt(N) binds at N = 2
    assert r["enhancement"]["value"] == pytest.approx(2 ** 0.5)
    assert r["enhancement"]["provenance"] == "model"
    assert r["epr_witness"]["entangled"] is True


def test_q_table_empty(tmp_path):
    out = tmp_path / "o"
    assert main(["q-table", "--config", write(tmp_path, {"qtable": {"Ns": []}}), "--out", str(out)]) == 0
    assert results(out)["rows"] == []
    assert (out / "data" / "q_table.csv").read_text().strip() == "N,q,se,ess"


def test_q_table_rows(tmp_path):
    out = tmp_path / "o"
    cfg = write(tmp_path, {"mcmc": FAST_MCMC, "qtable": {"Ns": [2, 4]}})
    assert main(["q-table", "--config", cfg, "--out", str(out)]) == 0
    rows = results(out)["rows"]
    assert [r["N"] for r in rows] == [2, 4]
    for r in rows:
        assert r["q"]["value"] >= 1 - 2 * r["q"]["se"]


def test_q_table_bad_row_continues(tmp_path):
    out = tmp_path / "o"
    cfg = write(tmp_path, {"mcmc": FAST_MCMC, "qtable": {"Ns": [1, 2]}})
    assert main(["q-table", "--config", cfg, "--out", str(out)]) == 0
    rows = results(out)["rows"]
    assert "error" in rows[0] and rows[1]["N"] == 2


@pytest.mark.parametrize("kind,cfg,key", [
    ("bethe-eval", {"bethe": {"configs": [{"xs": [0.0], "ys": [1.0]}], "dp": 0.4}}, "amplitudes"),
    ("eigencheck", {"params": {"n": 2, "m": 1}, "grid": {"points_per_axis": [16, 24]}}, "grids"),
    ("protocol", {"params": {"n": 50, "m": 50}, "protocol": {"gamma": 4, "q": 2.0}}, "enhancement"),
    ("epr", {"epr": {"gammas": [1, 2]}}, "by_gamma"),
    ("classical", {"classical": {"M": 256, "halfwidth_widths": 20, "periods": 0.5}}, "linf_error"),
])
def test_other_kinds(tmp_path, kind, cfg, key):
    out = tmp_path / "o"
    assert main([kind, "--config", write(tmp_path, cfg), "--out", str(out)]) == 0
    assert key in results(out)
    assert list((out / "data").iterdir())
    for csv in (out / "data").glob("*.csv"):
        assert "," in csv.read_text().splitlines()[0]


def test_protocol_regime_follows_thresholds(tmp_path):
    out = tmp_path / "o"
    cfg = write(tmp_path, {"params": {"n": 50, "m": 50}, "protocol": {"gamma": 4, "q": 2.0}})
    main(["protocol", "--config", cfg, "--out", str(out)])
    r = results(out)
    assert r["enhancement"]["value"] == 4.0
    assert r["regime"] == {"provenance": "model", "value": "crossover"}


def run_subprocess(cfg, out, workers):
    env = dict(os.environ, SOLITONQ_WORKERS=str(workers))
    proc = subprocess.run([sys.executable, "-m", "solitonq.cli", "sample", "--config", cfg,
                           "--seed", "3", "--out", str(out)], env=env, capture_output=True)
    assert proc.returncode == 0, proc.stderr.decode()
    return (out / "results.json").read_bytes()


def test_results_identical_across_workers(tmp_path):
    cfg = write(tmp_path, {"params": {"n": 2, "m": 2}, "mcmc": FAST_MCMC})
    blobs = {w: run_subprocess(cfg, tmp_path / f"w{w}", w) for w in (1, 2, 8)}
    assert blobs[1] == blobs[2] == blobs[8]


def test_seed_flag_overrides(tmp_path):
    cfg = write(tmp_path, {"seed": 1, "mcmc": FAST_MCMC})
    main(["sample", "--config", cfg, "--seed", "9", "--out", str(tmp_path / "o")])
    assert json.loads((tmp_path / "o" / "results.json").read_text())["seed"] == 9
