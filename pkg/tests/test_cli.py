import io
import json
import subprocess
import sys

import pytest

from watermark import ModelParams, normalize_exponents, value_v
from watermark.cli import main

P1 = ["--mu", "0.05", "--sigma", "0.2", "--r", "0.1", "--K", "1", "--p", "0.5"]
P2 = ["--mu", "0.05", "--sigma", "0.2", "--r", "0.1", "--K", "1", "--p", "1.5"]


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def test_roots_json():
    code, out, _ = run("roots", *P1)
    assert code == 0
    data = json.loads(out)
    assert data["roots"]["m"] == pytest.approx(-3.10850, abs=5e-6)
    assert data["roots"]["n"] == pytest.approx(1.60850, abs=5e-6)
    assert data["regime"]["assumption_a_holds"] is True


def test_missing_sigma_is_validation_error():
    code, _, err = run("roots", "--mu", "0.05", "--r", "0.1")
    assert code == 2 and "sigma" in err


def test_bad_field_is_named():
    code, _, err = run("roots", "--mu", "0.05", "--sigma", "0", "--r", "0.1")
    assert code == 2 and err.startswith("error: sigma")


def test_infinite_regime_is_success():
    code, out, _ = run("roots", "--mu", "0.05", "--sigma", "0.2", "--r", "0.1", "--p", "4")
    assert code == 0
    assert json.loads(out)["regime"]["value_infinite"] is True


def test_boundary_p1_files(tmp_path):
    code, out, _ = run("boundary", *P1, "--out", str(tmp_path), "--curves")
    assert code == 0
    lines = (tmp_path / "boundary.csv").read_text().splitlines()
    assert lines[0] == "s,H"
    s, H = (float(v) for v in lines[-1].split(","))
    assert abs(H / s**0.5 - 0.67830) < 1e-3
    desc = json.loads((tmp_path / "boundary.json").read_text())
    assert desc["regime"] == "p_below_1"
    assert desc["grid_size"] == len(lines) - 1
    assert (tmp_path / "curves.csv").read_text().startswith("s,H,envelope")
    assert json.loads(out)["s_star"] == desc["s_star"]


def test_boundary_p2_descriptor():
    code, out, _ = run("boundary", *P2)
    desc = json.loads(out)
    assert code == 0 and desc["regime"] == "p_above_1"
    assert desc["c"] == pytest.approx(0.74425, abs=1e-4)


def test_boundary_p_one_is_regime_error():
    code, _, err = run("boundary", "--mu", "0.05", "--sigma", "0.2", "--r", "0.1", "--p", "1")
    assert code == 3 and "lookback" in err


def test_boundary_infinite_value_is_regime_error():
    code, _, _ = run("boundary", "--mu", "0.05", "--sigma", "0.2", "--r", "0.1", "--p", "4")
    assert code == 3


def test_price_stopping_and_waiting():
    code, out, _ = run("price", *P1, "--x", "1", "--s", "1")
    rep = json.loads(out)
    assert code == 0 and rep["region"] == "waiting"
    H = rep["H_of_s"]
    code, out, _ = run("price", *P1, "--x", repr(H / 2), "--s", "1")
    rep = json.loads(out)
    assert rep["region"] == "stopping"
    assert rep["value"] == pytest.approx(2 / H - 1, rel=1e-14)


def test_price_variants_agree():
    _, out_u, _ = run("price", *P1, "--variant", "u", "--x", "0.8", "--s", "1.2")
    _, out_uh, _ = run("price", *P1, "--variant", "u_hat", "--x", "0.8", "--s", "1.2")
    assert json.loads(out_u)["value"] == json.loads(out_uh)["value"]
    raw = ["--mu", "0.05", "--sigma", "0.1", "--r", "0.1", "--a", "2", "--b", "1"]
    _, out_hat, _ = run("price", *raw, "--variant", "v_hat", "--x", "0.8", "--s", "1.2")
    norm, _ = normalize_exponents(ModelParams(mu=0.05, sigma=0.1, r=0.1, a=2.0, b=1.0))
    assert json.loads(out_hat)["value"] == pytest.approx(value_v(0.64, 1.44, norm), rel=1e-12)


def test_price_domain_error():
    code, _, _ = run("price", *P1, "--x", "2", "--s", "1")
    assert code == 2


def test_price_infinite_value():
    code, out, _ = run("price", "--mu", "0.05", "--sigma", "0.2", "--r", "0.1", "--p", "4")
    assert code == 0 and json.loads(out)["value"] == "inf"


def test_verify_p1_passes():
    code, out, _ = run("verify", *P1)
    data = json.loads(out)
    assert code == 0 and data["passed"] and data["failures"] == []


def test_divergence_on_finite_params_is_misuse():
    code, _, _ = run("mc", *P1, "--divergence")
    assert code == 6


def test_divergence_on_infinite_params():
    code, out, _ = run("mc", "--mu", "0.2", "--sigma", "0.1", "--r", "0.1", "--p", "4", "--divergence", "--paths", "2000")
    assert code == 0 and json.loads(out)["divergence"]["monotone"] is True


def test_mc_small_run(tmp_path):
    args = ["mc", *P1, "--paths", "3000", "--dt", "0.01", "--tmax", "60", "--seed", "4"]
    code, out, _ = run(*args)
    data = json.loads(out)
    assert code in (0, 5) and data["agrees_within_3_std_err"] is (code == 0)
    assert set(data["estimate"]) == {"mean", "std_err", "n_paths", "n_stopped", "n_truncated", "dt", "t_max", "seed"}


def test_mc_thetas():
    code, out, _ = run("mc", *P1, "--paths", "500", "--dt", "0.02", "--tmax", "30", "--thetas", "0.8,1,1.2")
    data = json.loads(out)
    assert code == 0 and set(data["estimates"]) == {"0.8", "1", "1.2"}


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"mu": 0.05, "sigma": 0.2, "r": 0.1, "p": 0.5, "x": 0.5, "s": 1.0}))
    _, base, _ = run("price", "--config", str(cfg))
    _, over, _ = run("price", "--config", str(cfg), "--x", "1.0")
    assert json.loads(base)["x"] == 0.5 and json.loads(over)["x"] == 1.0
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"mu": 0.05, "sigma": 0.2, "r": 0.1, "volatility": 1}))
    code, _, err = run("roots", "--config", str(bad))
    assert code == 2 and "volatility" in err


def test_rerun_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run("boundary", *P1, "--out", str(d))[0] == 0
        assert run("mc", *P1, "--paths", "500", "--dt", "0.02", "--tmax", "30", "--out", str(d))[0] in (0, 5)
    for name in ("boundary.csv", "boundary.json", "mc.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_seventeen_significant_digits():
    _, out, _ = run("roots", *P1)
    m = json.loads(out)["roots"]["m"]
    assert f"{m:.17g}" in out
    assert float(f"{m:.17g}") == m


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "watermark", "roots", *P1, "--format", "csv"],
        capture_output=True,
        text=True,
        check=False,
    )
    assert proc.returncode == 0
    header, row = proc.stdout.splitlines()
    assert header.startswith("m,n,")


def test_unknown_command_is_validation_error():
    assert run("bogus")[0] == 2
