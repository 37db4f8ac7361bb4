import csv
import io
import json

import pytest

from leibniz import cli
from leibniz.config import ConfigError, RunConfig, load_config


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


@pytest.fixture
def fgm_config():
    return {
        "model": {"name": "log_inventory", "q": 0.5, "distribution": {"kind": "fgm", "alpha": 1.0}},
        "theta": 1.0,
        "estimators": ["fd", "leibniz_integral", "leibniz_divergence"],
        "n_reps": 3000,
        "seed": 7,
    }


def test_run_writes_csv_schema(tmp_path, fgm_config):
    out = tmp_path / "out.csv"
    assert cli.main(["run", "--config", write(tmp_path, fgm_config), "--out", str(out)]) == 0
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    assert tuple(rows[0]) == cli.CSV_FIELDS
    assert [r["estimator"] for r in rows] == fgm_config["estimators"]
    assert all(r["runtime_s"] == "" and r["seed"] == "7" for r in rows)
    back = cli.ResultRow.from_csv(rows[1])
    assert back.to_csv() == list(rows[1].values())


def test_run_json_mirrors_csv(tmp_path, fgm_config):
    c = write(tmp_path, fgm_config)
    a, b = tmp_path / "a.csv", tmp_path / "b.json"
    cli.main(["run", "--config", c, "--out", str(a)])
    cli.main(["run", "--config", c, "--out", str(b), "--format", "json"])
    rows = list(csv.DictReader(io.StringIO(a.read_text())))
    objs = json.loads(b.read_text())
    assert [list(o) for o in objs] == [list(cli.CSV_FIELDS)] * len(rows)
    for r, o in zip(rows, objs):
        assert float(r["mean"]) == o["mean"]


@pytest.mark.parametrize("workers", ["2", "4"])
def test_csv_byte_identical_across_workers(tmp_path, fgm_config, workers):
    c = write(tmp_path, fgm_config)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    cli.main(["run", "--config", c, "--out", str(a), "--workers", "1"])
    cli.main(["run", "--config", c, "--out", str(b), "--workers", workers])
    assert a.read_bytes() == b.read_bytes()


def test_timing_adds_runtime(tmp_path, fgm_config):
    fgm_config["timing"] = True
    out = tmp_path / "o.csv"
    cli.main(["run", "--config", write(tmp_path, fgm_config), "--out", str(out)])
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    assert all(float(r["runtime_s"]) >= 0 for r in rows)


def test_seed_precedence(tmp_path, fgm_config, monkeypatch):
    c = write(tmp_path, fgm_config)
    monkeypatch.setenv("LEIBNIZ_SEED", "99")
    assert load_config(c).seed == 99
    assert load_config(c, {"seed": 5}).seed == 5
    monkeypatch.delenv("LEIBNIZ_SEED")
    assert load_config(c).seed == 7


@pytest.mark.parametrize("patch, field", [
    ({"bogus": 1}, "bogus"),
    ({"theta": "one"}, "theta"),
    ({"estimators": []}, "estimators"),
    ({"estimators": ["ipa_lr"]}, "estimators"),
    ({"estimators": ["dpa"]}, "estimators"),
    ({"n_reps": 1}, "n_reps"),
    ({"seed": -1}, "seed"),
    ({"format": "xml"}, "format"),
    ({"model": {"name": "nope"}}, "model.name"),
    ({"model": {"name": "log_inventory", "distribution": {"kind": "weird"}}}, "model"),
])
def test_config_errors_name_the_field(fgm_config, patch, field):
    fgm_config.update(patch)
    with pytest.raises(ConfigError) as exc:
        RunConfig.from_dict(fgm_config)
    assert exc.value.field == field


def test_missing_key():
    with pytest.raises(ConfigError) as exc:
        RunConfig.from_dict({"model": {"name": "gg1"}, "theta": 0.5})
    assert exc.value.field == "estimators"


def test_config_roundtrip(fgm_config):
    cfg = RunConfig.from_dict(fgm_config)
    assert RunConfig.from_dict(cfg.to_dict()) == cfg


def test_exit_code_config_error(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert cli.main(["run", "--config", str(p)]) == 2
    assert "config error" in capsys.readouterr().err


def test_exit_code_estimator_failure(tmp_path, fgm_config, capsys):
    fgm_config["theta"] = 1.27  # the FD step leaves the feasible range
    assert cli.main(["run", "--config", write(tmp_path, fgm_config)]) == 3
    assert "ThetaOutOfRange" in capsys.readouterr().err


def test_exit_code_no_oracle(tmp_path, capsys):
    cfg = {"model": {"name": "san"}, "theta": 3.0, "estimators": ["leibniz_divergence"]}
    assert cli.main(["oracle", "--config", write(tmp_path, cfg)]) == 4


def test_oracle_command_prints_value(tmp_path, fgm_config, capsys):
    assert cli.main(["oracle", "--config", write(tmp_path, fgm_config)]) == 0
    first = capsys.readouterr().out.splitlines()[0]
    assert float(first) == pytest.approx(-0.8486013290248673, abs=1e-9)


@pytest.mark.parametrize("cfg", [
    {"model": {"name": "gg1", "preset": "two_customer"}, "theta": 0.4, "estimators": ["dpa", "fd"],
     "fd_delta": 0.05, "n_reps": 2000, "oracle": True},
    {"model": {"name": "american_option"}, "theta": 105.0,
     "estimators": ["conditional_leibniz"], "n_reps": 2000, "oracle": True},
    {"model": {"name": "max_threshold", "distribution": "beta_product"}, "theta": 0.5,
     "estimators": ["leibniz_divergence", "leibniz_integral"], "n_reps": 2000, "oracle": True},
    {"model": {"name": "san", "transform": "paths"}, "theta": 3.0,
     "estimators": ["leibniz_integral"], "n_reps": 2000, "oracle": True},
])
def test_run_every_model(tmp_path, cfg, capsys):
    assert cli.main(["run", "--config", write(tmp_path, cfg), "--format", "json"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert len(rows) == len(cfg["estimators"])
    if cfg["model"]["name"] == "san":
        assert rows[0]["oracle"] is None


def test_unstable_row_serialises(tmp_path, capsys):
    cfg = {"model": {"name": "log_inventory",
                     "distribution": {"kind": "clayton_gamma", "shape": 0.5}},
           "theta": 1.0, "estimators": ["leibniz_integral"], "n_reps": 1000}
    assert cli.main(["run", "--config", write(tmp_path, cfg)]) == 0
    row = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))[0]
    assert row["unstable"] == "true"
    assert row["mean"] == "-inf"


def test_table1_writes_grid(tmp_path, capsys):
    assert cli.main(["table1", "--reps", "500", "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "table1.csv")))
    assert len(rows) == 21
    assert "clayton_gamma_0.5" in capsys.readouterr().out


def test_verify_exits_zero(tmp_path):
    out = tmp_path / "verify.json"
    assert cli.main(["verify", "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["passed"] and report["failed"] == []
    assert len(report["checks"]) >= 20


def test_empty_estimator_list_exits_2(tmp_path, fgm_config):
    fgm_config["estimators"] = []
    assert cli.main(["run", "--config", write(tmp_path, fgm_config)]) == 2
