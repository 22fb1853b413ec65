import json
import math
import subprocess
import sys

import numpy as np
import pytest

from beamforge import cli
from beamforge.cli import (ConfigError, codebook_from_json, codebook_to_json,
                           config_digest, main, parse_config)
from beamforge.scenario import SolverParams

from conftest import tiny_config

TABLE_SCENARIO = {
    "f_c": 30e9, "n_t": 32, "y_0": 8.0, "alpha_deg": 10.0, "v_kmh": 500.0,
    "p_t_dbm": 40.0, "p_n_dbm": -40.0, "eta": 2.0, "r_0": 1.0,
    "psi_min": -1.4284, "psi_max": 0.9078, "gamma_th_db": 5.0, "eps_t": 0.005,
}

TINY_SCENARIO = {
    "f_c": 30e9, "n_t": 8, "y_0": 8.0, "alpha_deg": 10.0, "v_kmh": 500.0,
    "p_t_dbm": 40.0, "p_n_dbm": -40.0, "eta": 2.0, "r_0": 1.0,
    "psi_min": -0.3, "psi_max": 0.3, "gamma_th_db": 5.0, "eps_t": 0.05,
}


def write_config(tmp_path, scenario, solver=None, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps({"scenario": scenario, "solver": solver or {}}))
    return p


def test_parse_table_config_units(tmp_path):
    cfg, params = parse_config(write_config(tmp_path, TABLE_SCENARIO))
    assert cfg.alpha == pytest.approx(math.radians(10.0))
    assert cfg.v == pytest.approx(500.0 / 3.6)
    assert cfg.p_t == pytest.approx(10.0)
    assert cfg.p_n == pytest.approx(1e-7)
    assert cfg.gamma_th == pytest.approx(10 ** 0.5)
    assert params == SolverParams()


def test_parse_missing_field_names_it(tmp_path):
    bad = dict(TABLE_SCENARIO)
    del bad["y_0"]
    with pytest.raises(ConfigError, match="y_0"):
        parse_config(write_config(tmp_path, bad))


def test_parse_unknown_key_names_it(tmp_path):
    bad = dict(TABLE_SCENARIO, bogus=1)
    with pytest.raises(ConfigError, match="bogus"):
        parse_config(write_config(tmp_path, bad))


def test_parse_unknown_solver_key(tmp_path):
    with pytest.raises(ConfigError, match="nope"):
        parse_config(write_config(tmp_path, TABLE_SCENARIO, {"nope": 1}))


def test_parse_duplicate_unit_variant(tmp_path):
    bad = dict(TABLE_SCENARIO)
    bad["alpha"] = 0.17
    with pytest.raises(ConfigError, match="alpha"):
        parse_config(write_config(tmp_path, bad))


def test_parse_invariant_violation_quoted(tmp_path):
    bad = dict(TABLE_SCENARIO, eps_t=2.0)
    with pytest.raises(ConfigError, match="eps_t"):
        parse_config(write_config(tmp_path, bad))


def test_digest_changes_with_any_field(tmp_path):
    cfg, params = parse_config(write_config(tmp_path, TABLE_SCENARIO))
    d1 = config_digest(cfg, params, "pp_pdg_ms")
    cfg2, _ = parse_config(write_config(
        tmp_path, dict(TABLE_SCENARIO, y_0=8.0001), name="b.json"))
    assert d1 != config_digest(cfg2, params, "pp_pdg_ms")
    assert d1 != config_digest(cfg, params, "sdr_dc_bis")
    # digest is stable across identical reconstructions
    cfg3, params3 = parse_config(write_config(tmp_path, TABLE_SCENARIO, name="c.json"))
    assert d1 == config_digest(cfg3, params3, "pp_pdg_ms")


def test_codebook_json_roundtrip():
    from beamforge.channel import Beam, Codebook
    rng = np.random.default_rng(0)
    w = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    cb = Codebook(beams=[Beam(weights=w, phi_lo=-0.1, phi_hi=0.2)])
    back = codebook_from_json(codebook_to_json(cb))
    assert np.allclose(back.beams[0].weights, w)
    assert back.beams[0].phi_lo == -0.1


def test_cli_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    rc = main(["design", "--config", str(bad), "--out", str(tmp_path / "o")])
    assert rc == cli.EXIT_CONFIG


def test_cli_unknown_scheme_exit_code(tmp_path):
    cfgp = write_config(tmp_path, TINY_SCENARIO)
    rc = main(["design", "--config", str(cfgp), "--scheme", "huh",
               "--out", str(tmp_path / "o")])
    assert rc == cli.EXIT_CONFIG


def test_cli_design_and_rerun_byte_identical(tmp_path):
    cfgp = write_config(tmp_path, TINY_SCENARIO)
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert main(["design", "--config", str(cfgp), "--out", str(out1)]) == 0
    assert main(["design", "--config", str(cfgp), "--out", str(out2)]) == 0
    assert (out1 / "codebook.json").read_bytes() == (out2 / "codebook.json").read_bytes()
    man = json.loads((out1 / "manifest.json").read_text())
    assert man["n"] >= 1
    assert set(man["outputs"]) == {"codebook.json", "pattern.csv", "rsnr.csv",
                                   "band.csv"}
    # pattern grid: 2001 uniform points plus grid samples, deduplicated
    lines = (out1 / "pattern.csv").read_text().splitlines()
    assert lines[0].startswith("psi_rad,beam_0_gain_db")
    assert len(lines) >= 2001


def test_cli_evaluate_roundtrip(tmp_path):
    cfgp = write_config(tmp_path, TINY_SCENARIO)
    out = tmp_path / "o"
    assert main(["design", "--config", str(cfgp), "--out", str(out)]) == 0
    out2 = tmp_path / "eval"
    rc = main(["evaluate", "--config", str(cfgp), "--out", str(out2),
               "--codebook", str(out / "codebook.json")])
    assert rc == 0
    lines = (out2 / "rsnr.csv").read_text().splitlines()
    assert lines[0] == "t_s,psi_rad,rsnr_db"
    # feasibility: every covered sample at or above the threshold
    vals = [float(l.split(",")[2]) for l in lines[1:]]
    assert min(vals) >= 5.0 - 1e-6


def test_cli_compare_empty_list(tmp_path):
    cfgp = write_config(tmp_path, TINY_SCENARIO)
    rc = main(["compare", "--config", str(cfgp), "--schemes", "",
               "--out", str(tmp_path / "c")])
    assert rc == 0
    lines = (tmp_path / "c" / "compare.csv").read_text().splitlines()
    assert len(lines) == 1  # header only


def test_cli_band_subcommand(tmp_path):
    cfgp = write_config(tmp_path, TINY_SCENARIO)
    rc = main(["band", "--config", str(cfgp), "--out", str(tmp_path / "b")])
    assert rc == 0
    lines = (tmp_path / "b" / "band.csv").read_text().splitlines()
    assert lines[0] == "psi_rad,band_m"
    assert len(lines) == 102


def test_cli_entrypoint_runs():
    proc = subprocess.run([sys.executable, "-m", "beamforge.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "design" in proc.stdout
