import json
import os

import numpy as np
import pytest

from jsqd_loss.cli import cli_main


def run(args):
    return cli_main(args)


def read_json(path):
    with open(path) as handle:
        return json.load(handle)


def test_fixed_point_subcommand(tmp_path):
    out = tmp_path / "fp"
    assert run(["fixed-point", "--d", "1", "--sigma", "1", "--C", "2", "-o", str(out)]) == 0
    payload = read_json(out / "fixed_point.json")
    np.testing.assert_allclose(payload["pi"], [1.0, 0.6, 0.2], atol=1e-10)
    manifest = read_json(out / "manifest.json")
    assert "fixed_point.json" in manifest["outputs"]
    assert manifest["version"]


def test_blocking_beta_zero(tmp_path):
    out = tmp_path / "blk"
    assert run(["blocking", "--beta", "0", "--N", "200", "-o", str(out)]) == 0
    payload = read_json(out / "blocking.json")
    assert payload["first_order"] == payload["pi_C_d"]


def test_mean_field_csv(tmp_path):
    out = tmp_path / "mf"
    code = run(
        ["mean-field", "--C", "2", "--d", "2", "--sigma", "1", "--t-end", "1",
         "--dt", "0.01", "--u0", "1,0,0", "-o", str(out)]
    )
    assert code == 0
    lines = (out / "trajectory.csv").read_text().splitlines()
    assert lines[0] == "t,u1,u2"
    assert len(lines) == 102


def test_diffusion_json(tmp_path):
    out = tmp_path / "diff"
    assert run(["diffusion", "--C", "2", "--d", "2", "--sigma", "2", "--beta", "1", "-o", str(out)]) == 0
    payload = read_json(out / "diffusion.json")
    assert set(payload) == {"kappa", "sigma", "eigenvalues_real", "eigenvalues_imag", "V"}
    assert max(payload["eigenvalues_real"]) < -1.0


def test_simulate_and_determinism(tmp_path):
    args_common = [
        "simulate", "--N", "20", "--C", "2", "--d", "2", "--sigma", "1",
        "--seed", "7", "--warmup", "10", "--horizon", "60", "--replications", "3",
    ]
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert run(args_common + ["-o", str(out1)]) == 0
    assert run(args_common + ["-o", str(out2)]) == 0
    for name in ("outcome.json", "trajectory.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    m1, m2 = read_json(out1 / "manifest.json"), read_json(out2 / "manifest.json")
    m1.pop("timestamp"), m2.pop("timestamp")
    assert m1 == m2


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"N": 30, "C": 2, "d": 2, "sigma": 1.0, "seed": 5,
                               "warmup": 10.0, "horizon": 40.0, "replications": 2}))
    out = tmp_path / "run"
    assert run(["simulate", "--config", str(cfg), "--seed", "9", "-o", str(out)]) == 0
    manifest = read_json(out / "manifest.json")
    assert manifest["config"]["seed"] == 9  # flag wins
    assert manifest["config"]["N"] == 30  # config wins over default


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run(["fixed-point", "--config", str(cfg), "-o", str(tmp_path)]) == 3


def test_invalid_parameters_exit_code(tmp_path):
    assert run(["fixed-point", "--sigma", "1", "--beta", "3", "--N", "4", "-o", str(tmp_path)]) == 3


def test_unknown_subcommand_exit_code(capsys):
    assert run(["frobnicate"]) == 2
    assert run([]) == 2


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    target = blocker / "sub"  # cannot create a directory under a file
    assert run(["fixed-point", "-o", str(target)]) == 4


def test_fluctuations_outputs(tmp_path):
    out = tmp_path / "fl"
    code = run(
        ["fluctuations", "--N", "50", "--C", "2", "--d", "2", "--sigma", "2",
         "--beta", "1", "--seed", "3", "--warmup", "20", "--horizon", "120",
         "--replications", "2", "-o", str(out)]
    )
    assert code == 0
    payload = read_json(out / "comparison.json")
    assert set(payload) >= {"empirical_mean", "empirical_cov", "kappa", "sigma", "samples"}
    lines = (out / "fluctuations.csv").read_text().splitlines()
    assert lines[0] == "t,Z1,Z2"
    assert payload["samples"] == len(lines) - 1


def test_scaling_outputs(tmp_path):
    out = tmp_path / "sc"
    code = run(
        ["scaling", "--C", "2", "--d", "2", "--sigma", "1", "--beta", "0",
         "--seed", "2", "--warmup", "10", "--horizon", "60", "--replications", "2",
         "--N-list", "20,40", "-o", str(out)]
    )
    assert code == 0
    lines = (out / "scaling.csv").read_text().splitlines()
    assert lines[0].startswith("N,simulated,pi_C_d,first_order")
    assert len(lines) == 3
    manifest = read_json(out / "manifest.json")
    data_files = {f for f in os.listdir(out) if f != "manifest.json"}
    assert data_files == set(manifest["outputs"])


def test_output_dir_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("JSQD_OUTPUT_DIR", str(tmp_path / "env"))
    assert run(["fixed-point", "--d", "1", "--sigma", "1", "--C", "1"]) == 0
    assert (tmp_path / "env" / "fixed_point.json").exists()
