import json

import pytest

from fracfp.cli import EXIT_CONFIG, EXIT_OK, main
from fracfp.config import SCENARIOS, RunConfig, deep_merge, initial_field, load_config
from fracfp.errors import ConfigError
from fracfp.runner import run_scenario
from fracfp.spectral import Grid

SMALL = {"scenario": "linear_heat_d1", "grid": {"n": 64}, "evolution": {"T": 0.05, "h": 5e-3, "snapshot_stride": 5}}


@pytest.mark.parametrize("name", sorted(SCENARIOS))
def test_scenarios_validate(name):
    cfg = RunConfig.from_dict({"scenario": name})
    assert cfg.scenario == name
    assert cfg.initial().mass() == pytest.approx(1.0)
    assert RunConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()


@pytest.mark.parametrize("patch", [
    {"schema_version": 2},
    {"bogus": 1},
    {"grid": {"dim": 4}},
    {"grid": {"n": 63}},
    {"grid": {"L": -1.0}},
    {"coefficients": {"s": 1.5}},
    {"coefficients": {"beta": {"name": "nope"}}},
    {"solver": {"tol_l1": 0.0}},
    {"solver": {"unknown": 1}},
    {"evolution": {"h": 1.0, "T": 0.5}},
    {"sde": {"N": 0}},
    {"sde": {"mode": "other"}},
    {"gauge": {"eps_g": -1}},
    {"pipeline": ["fly"]},
    {"seed": -1},
    {"seed": 2**64},
    {"initial": {"name": "square"}},
])
def test_bad_configs_raise(patch):
    with pytest.raises(ConfigError):
        cfg = RunConfig.from_dict(deep_merge({"scenario": "porous_d1"}, patch))
        cfg.initial()


def test_unknown_scenario_and_files(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"scenario": "nope"})
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ConfigError):
        load_config(bad)
    good = tmp_path / "good.json"
    good.write_text(json.dumps(SMALL))
    assert load_config(good).grid.n == 64


def test_deep_merge_does_not_alias():
    base = {"a": {"b": 1, "c": [1]}}
    out = deep_merge(base, {"a": {"b": 2}})
    out["a"]["c"].append(2)
    assert base == {"a": {"b": 1, "c": [1]}} and out["a"]["b"] == 2


def test_initial_field_mass():
    g = Grid(2, 32, 3.0)
    for name in ("gaussian", "bump", "two_bumps"):
        f = initial_field({"name": name, "center": 0.5, "sigma": 0.6, "mass": 2.0}, g)
        assert f.mass() == pytest.approx(2.0) and f.values.min() >= 0


def test_run_writes_manifest_and_is_reproducible(tmp_path):
    cfg = RunConfig.from_dict(SMALL)
    a = run_scenario(cfg, tmp_path / "a")
    b = run_scenario(cfg, tmp_path / "b")
    assert a.ok and a.status == "ok"
    names = {f["path"] for f in a.files}
    assert {"report.json", "traces.csv", "fields/u_00000.csv", "fields/u_00010.csv"} <= names
    assert [f["sha256"] for f in a.files] == [f["sha256"] for f in b.files]
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["config"]["grid"]["n"] == 64
    assert {"config", "files", "invariants", "warnings", "timings"} <= set(man)
    rep = json.loads((tmp_path / "a" / "report.json").read_text())
    assert rep["evolve"]["exact_l1_final"] < 0.01


def test_large_step_is_warned(tmp_path):
    cfg = RunConfig.from_dict({"scenario": "porous_d1", "grid": {"n": 64},
                               "evolution": {"T": 0.8, "h": 0.8}, "pipeline": ["evolve"]})
    m = run_scenario(cfg, tmp_path)
    assert any("lambda0" in w for w in m.warnings)


def test_cli_exit_codes(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(SMALL))
    assert main(["evolve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["status"] == "ok" and summary["failed"] == []
    assert (tmp_path / "o" / "manifest.json").exists()
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"scenario": "linear_heat_d1", "grid": {"n": 3}}))
    assert main(["evolve", "--config", str(bad), "--out", str(tmp_path / "x")]) == EXIT_CONFIG
    assert main(["evolve", "--out", str(tmp_path / "y")]) == EXIT_CONFIG
    assert main(["evolve", "--config", str(cfg), "--seed", "-3", "--out", str(tmp_path / "z")]) == EXIT_CONFIG


def test_cli_scenarios(tmp_path):
    assert main(["kernel", "--scenario", "kernel_identities", "--out", str(tmp_path / "k")]) == EXIT_OK
    assert main(["resolvent", "--scenario", "porous_d1", "--out", str(tmp_path / "r")]) == EXIT_OK
    assert (tmp_path / "r" / "fields" / "resolvent.csv").exists()
    assert main(["gauge", "--scenario", "gauge_d1", "--out", str(tmp_path / "g")]) == EXIT_OK
    rep = json.loads((tmp_path / "g" / "report.json").read_text())
    assert rep["gauge"]["verdict"] == "DIFFERENT"


def test_cli_sde_thins_positions(tmp_path):
    out = tmp_path / "s"
    assert main(["sde", "--scenario", "sde_linear_d1", "--out", str(out)]) == EXIT_OK
    rep = json.loads((out / "report.json").read_text())
    assert rep["sde"]["passed"] and rep["sde"]["thinning"] == 10
    rows = (out / "fields" / "positions_000.csv").read_text().strip().splitlines()
    assert len(rows) == 2 + 10_000
