import csv
import json

import pytest
import yaml

from countingstars.cli import main

from conftest import small_raw


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "small.yaml"
    p.write_text(yaml.safe_dump(small_raw(horizon_s=3)))
    return p


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_validate_ok(config, capsys):
    assert main(["validate", "--config", str(config)]) == 0
    assert main(["validate", "--config", "iridium-0.1"]) == 0


def test_validate_errors(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump(small_raw(epoch_s=2, horizon_s=5, schemes=["cs", "zz"])))
    assert main(["validate", "--config", str(bad)]) == 1
    err = capsys.readouterr().err
    assert "horizon_s" in err and "zz" in err and "line " in err
    assert main(["validate", "--config", str(tmp_path / "missing.yaml")]) == 1


def test_run_writes_everything(config, tmp_path):
    out = tmp_path / "run"
    assert main(["run", "--config", str(config), "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "complete"
    assert manifest["seed_stats"]["h_over_n_mean"] >= 1.0
    for rel in manifest["outputs"]:
        assert (out / rel).exists()
    for d in ("topology", "seeds", "truth", "estimates"):
        assert (out / d).is_dir()
    report = rows(out / "report.csv")
    assert len(report) == 3 * 4
    assert set(report[0]) >= {"scenario", "scheme", "load", "memory_bytes", "epoch", "are", "prediction_misses"}


def test_schemes_filter_and_determinism(config, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["run", "--config", str(config), "--out", str(out), "--schemes", "cs", "--memory", "512"]) == 0
    report = rows(a / "report.csv")
    assert {r["scheme"] for r in report} == {"cs"}
    assert {r["memory_bytes"] for r in report} == {"512"}
    assert (a / "report.csv").read_bytes() == (b / "report.csv").read_bytes()
    assert (a / "truth/truth.csv").read_bytes() == (b / "truth/truth.csv").read_bytes()


def test_run_overrides(config, tmp_path):
    out = tmp_path / "p"
    assert main(["run", "--config", str(config), "--out", str(out), "--schemes", "cs", "--seed-period", "3"]) == 0
    assert len(rows(out / "report.csv")) == 1
    assert main(["run", "--config", str(config), "--out", str(out), "--seed-period", "2"]) == 1


def test_sweep_and_resume(config, tmp_path):
    out = tmp_path / "sw"
    args = ["sweep", "--config", str(config), "--out", str(out), "--schemes", "cs,cm",
            "--memory", "256,1024", "--seeds", "1,2", "--workers", "1"]
    assert main(args) == 0
    table = rows(out / "sweep.csv")
    assert len(table) == 4
    assert all(int(r["n"]) == 2 * 3 for r in table)
    first = (out / "sweep.csv").read_bytes()
    cell = out / "cells" / "seed-2.csv"
    cell.unlink()
    assert main(args) == 0  # recomputes only the missing cell
    assert (out / "sweep.csv").read_bytes() == first
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["cells"]) == {"seed=1", "seed=2"}
