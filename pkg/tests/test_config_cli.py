import json
from pathlib import Path

import numpy as np
import pytest

from qhydro.cli import main
from qhydro.config import (SCENARIOS, ConfigError, config_from_dict, dump_config, load_config,
                           parse_config)
from qhydro.export import FIELDS_COLUMNS, read_csv, sha256, write_csv
from qhydro.scenarios import run_scenario

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SMALL_FREE = """
scenario: free_packet
time: {t_final: 0.2}
bohm: {n_paths: 2000, seed: 3}
"""

FAILING = """
scenario: quartic_packet
time: {dt: 0.002, t_final: 0.2}
bohm: {n_paths: 1000}
"""


def write(tmp_path, text, name="config.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_minimal_defaults():
    cfg = parse_config("scenario: free_packet")
    assert (cfg.grid.n, cfg.grid.L, cfg.grid.origin) == (512, 40.0, -20.0)
    assert cfg.time.dt == 1e-3 and cfg.constants.hbar == 1.0 and cfg.constants.mass == 1.0
    assert cfg.bohm.dt == cfg.time.dt and cfg.madelung.rho_floor == 1e-8


def test_non_power_of_two_rejected():
    with pytest.raises(ConfigError, match=r"grid\.n.*power of two"):
        parse_config("scenario: free_packet\ngrid: {n: 500}")


@pytest.mark.parametrize("text,where", [
    ("scenario: free_packet\ngrid: {nn: 512}", "grid.nn"),
    ("scenario: free_packet\ntime: {dt: -1}", "time.dt"),
    ("scenario: free_packet\nwigner: {k_max: 3}", "wigner.k_max"),
    ("scenario: nope", "scenario"),
    ("grid: {n: 64}", "scenario"),
    ("scenario: free_packet\nextra: 1", "extra"),
])
def test_errors_name_the_key(text, where):
    with pytest.raises(ConfigError, match=where.replace(".", r"\.")):
        parse_config(text)


def test_malformed_and_non_mapping():
    with pytest.raises(ConfigError):
        parse_config("scenario: [unclosed")
    with pytest.raises(ConfigError):
        parse_config("- a\n- b")


def test_bohm_dt_must_divide_frames():
    with pytest.raises(ConfigError, match="bohm.dt"):
        parse_config("scenario: free_packet\nbohm: {dt: 0.003}")


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda p: p.stem)
def test_shipped_configs_round_trip(path):
    cfg = load_config(path)
    again = parse_config(dump_config(cfg))
    assert again == cfg
    assert dump_config(again) == dump_config(cfg)


def test_every_scenario_has_a_config():
    assert {p.stem for p in CONFIGS.glob("*.yaml")} == set(SCENARIOS)


def test_scenario_defaults_differ():
    assert parse_config("scenario: double_well").time.dt == 1.25e-4
    assert parse_config("scenario: two_particle_product").grid.n == 256
    assert parse_config("scenario: brownian_doublewell").brownian.kT == 0.5


def test_csv_round_trip_is_exact(tmp_path):
    r = np.random.default_rng(0)
    data = {c: r.normal(size=7) for c in FIELDS_COLUMNS}
    data["mask"] = np.array([1, 0, 1, 1, 0, 0, 1])
    path = write_csv(tmp_path / "f.csv", FIELDS_COLUMNS, data, integer=("mask",))
    back = read_csv(path)
    for c in FIELDS_COLUMNS:
        assert np.array_equal(back[c], data[c])
    assert path.read_text().splitlines()[0] == ",".join(FIELDS_COLUMNS)


def test_list_scenarios(capsys):
    assert main(["list-scenarios"]) == 0
    assert capsys.readouterr().out.split() == list(SCENARIOS)


def test_validate_prints_resolved(tmp_path, capsys):
    assert main(["validate", write(tmp_path, "scenario: harmonic_ground")]) == 0
    echoed = json.loads(capsys.readouterr().out)
    assert echoed["grid"]["n"] == 512 and echoed["time"]["t_final"] == 1.0


def test_usage_and_config_errors_exit_2(tmp_path, capsys):
    assert main(["validate", write(tmp_path, "scenario: free_packet\ngrid: {n: 500}")]) == 2
    assert "power of two" in capsys.readouterr().err
    assert main(["verify", str(tmp_path / "missing.yaml")]) == 2
    assert main(["verify", write(tmp_path, SMALL_FREE), "--threads", "0"]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_module_error_exits_2(tmp_path, capsys):
    # a floor this high masks most paths out, which is a module error, not an invariant failure
    text = SMALL_FREE + "madelung: {rho_floor: 0.5}\n"
    assert main(["verify", write(tmp_path, text)]) == 2
    assert "free_packet" in capsys.readouterr().err


def test_invariant_failure_exits_1(tmp_path, capsys):
    assert main(["verify", write(tmp_path, FAILING)]) == 1
    assert "FAIL  energy_drift_relative" in capsys.readouterr().out


def test_run_writes_manifest(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", write(tmp_path, SMALL_FREE), "--output-dir", str(out), "--seed", "9"]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["scenario"] == "free_packet" and report["passed"] is True
    assert report["config"]["bohm"]["seed"] == 9
    names = {a["file"] for a in report["artifacts"]}
    assert {"fields.csv", "trajectories.csv"} <= names
    for a in report["artifacts"]:
        assert sha256(out / a["file"]) == a["sha256"]
        assert (out / a["file"]).stat().st_size == a["bytes"]
    header = (out / "trajectories.csv").read_text().splitlines()[0]
    assert header == "path_id,time,x"


def test_verify_writes_nothing(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert main(["verify", write(tmp_path, SMALL_FREE)]) == 0
    assert not (tmp_path / "output").exists()


def test_report_lists_free_packet_invariants():
    report = run_scenario(config_from_dict({"scenario": "free_packet", "bohm": {"n_paths": 2000}}))
    assert report.invariant("var_x_final").passed
    assert report.invariant("var_x_final").target == pytest.approx(1.25)
    assert report.invariant("equivariance_ks").passed


def test_artifacts_identical_across_threads(tmp_path):
    cfg = parse_config(SMALL_FREE)
    a = run_scenario(cfg, tmp_path / "a", workers=1)
    b = run_scenario(cfg, tmp_path / "b", workers=3)
    assert [x["sha256"] for x in a.artifacts] == [x["sha256"] for x in b.artifacts]
    assert [i.value for i in a.invariants] == [i.value for i in b.invariants]
