import csv
import hashlib
import json

import pytest

from mrpbayes.cli import OUTPUT_ENV, main

MODEL = {
    "p": [[0.57, 0.27, 0.16], [0.58, 0.28, 0.14], [0.52, 0.32, 0.16]],
    "alpha": 1.3,
    "theta": 60.0,
    "j0": 1,
}
FAST = ["--n-iter", "200", "--n-burnin", "100", "--thin", "2", "--n-chains", "1"]


@pytest.fixture(scope="module")
def catalog(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    (d / "model.json").write_text(json.dumps(MODEL))
    rc = main(["simulate", "--model", str(d / "model.json"), "--horizon-days", "15000", "--seed", "4", "--out", str(d)])
    assert rc == 0
    return d / "catalog.csv"


def test_simulate_writes_catalog(catalog):
    rows = list(csv.DictReader(catalog.open()))
    assert len(rows) > 100 and set(rows[0]) == {"date", "magnitude", "id"}


def test_all_pipeline_and_manifest(tmp_path, catalog):
    out = tmp_path / "run"
    rc = main(["all", "--catalog", str(catalog), "--seed", "1", "--out", str(out), "--plot-data"] + FAST)
    assert rc == 0
    manifest = json.loads((out / "manifest.json").read_text())
    for name, digest in manifest["outputs"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    assert manifest["inputs"]["catalog"]["sha256"] == hashlib.sha256(catalog.read_bytes()).hexdigest()
    assert manifest["decisions"]["cut_event_number"] == manifest["decisions"]["cut_index"] + 1
    assert (out / "plot_data.csv").exists()
    header = (out / "csp.csv").read_text().splitlines()[0]
    assert header.startswith("to,1 Month")


def test_rerun_is_byte_identical(tmp_path, catalog):
    for name in ("a", "b"):
        assert main(["all", "--catalog", str(catalog), "--seed", "7", "--out", str(tmp_path / name)] + FAST) == 0
    for f in ("chains.jsonl", "summary.csv", "csp.csv", "manifest.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_stages_and_config_file(tmp_path, catalog, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env_out"))
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"catalog": str(catalog), "seed": 3, "n_iter": 150, "n_burnin": 50, "n_chains": 1, "thin": 1, "min_count": 2}))
    assert main(["elicit", "--config", str(cfg)]) == 0
    out = tmp_path / "env_out"
    assert json.loads((out / "elicit.json").read_text())["cut_index"] >= 1
    assert main(["fit", "--config", str(cfg), "--n-iter", "120"]) == 0
    assert len((out / "chains.jsonl").read_text().splitlines()) == 70
    assert main(["summarize", "--config", str(cfg), "--level", "0.9"]) == 0
    assert main(["forecast", "--config", str(cfg), "--state", "2", "--elapsed-days", "10", "--horizons", "30,365", "--ratios"]) == 0
    assert (out / "csp.csv").read_text().splitlines()[0] == "to,30 days,365 days"
    assert (out / "csp_ratios.csv").exists()


def test_missing_catalog_error(tmp_path, capsys):
    rc = main(["all", "--catalog", str(tmp_path / "nope.csv"), "--seed", "1", "--out", str(tmp_path)])
    assert rc == 1
    err = json.loads(capsys.readouterr().err)
    assert "catalog not found" in err["message"]
    assert json.loads((tmp_path / "error.json").read_text()) == err


def test_deficient_transitions_named(tmp_path, catalog, capsys):
    rc = main(["elicit", "--catalog", str(catalog), "--min-count", "500", "--out", str(tmp_path)])
    assert rc == 1
    assert "(3,3)" in json.loads(capsys.readouterr().err)["message"]


def test_seed_required(tmp_path, catalog, capsys):
    assert main(["all", "--catalog", str(catalog), "--out", str(tmp_path)] + FAST) == 1
    assert "seed" in json.loads(capsys.readouterr().err)["message"]


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"sed": 1}))
    assert main(["fit", "--config", str(cfg), "--out", str(tmp_path)]) == 1


def test_backtest_command(tmp_path, catalog):
    rc = main(["backtest", "--catalog", str(catalog), "--ends", "2030-01-01,2035-01-01", "--min-count", "2",
               "--seed", "2", "--out", str(tmp_path)] + FAST)
    assert rc == 0
    rows = json.loads((tmp_path / "backtest.json").read_text())
    assert [r["status"] for r in rows] == ["ok", "ok"]
    assert all(0 <= r["pit"] <= 1 for r in rows)
