import csv
import json
import subprocess
import sys

import pytest

from relu_forge.cli import main
from relu_forge.net import load, save


@pytest.fixture
def vec(tmp_path):
    def write(x, name="v.json"):
        p = tmp_path / name
        p.write_text(json.dumps(x))
        return str(p)
    return write


def build(vec_path, out, *extra):
    return main(["build-sparse", vec_path, "--out", str(out), *extra])


def test_zero_vector_build(vec, tmp_path, capsys):
    out = tmp_path / "z.json"
    assert build(vec([0] * 12), out) == 0
    audit = json.loads(capsys.readouterr().out)
    assert audit["ok"] and audit["depth"] <= 4 and out.exists()


def test_unit_vector_fixture_builds_and_verifies(vec, tmp_path, capsys):
    e5 = [0] * 16
    e5[4] = 1
    v, out = vec(e5), tmp_path / "e5.json"
    assert build(v, out) == 0
    audit = json.loads(capsys.readouterr().out)
    assert audit["ok"] and audit["width"] == 17 and audit["depth"] <= audit["depth_bound"]
    assert main(["verify", str(out), "--vector", v]) == 0
    assert "FAIL" not in capsys.readouterr().out


def test_corrupted_weight_fails_verification(vec, tmp_path, capsys):
    x = [0, 3, 0, -1, 0, 0, 2, 0, 0, 1, 0, 0, -2, 0, 0, 0]
    v, out = vec(x), tmp_path / "n.json"
    assert build(v, out) == 0
    doc = json.loads(out.read_text())
    last = doc["layers"][-1]
    last["bias"][0] = "1/1" if last["bias"][0] != "1/1" else "2/1"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    capsys.readouterr()
    assert main(["verify", str(bad), "--vector", v]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_malformed_inputs_exit_2(vec, tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text("[1, 2,")
    assert build(str(broken), tmp_path / "o.json") == 2
    assert build(vec(["a"]), tmp_path / "o.json") == 2
    assert build(vec({"x": [5, 0], "M": 2}), tmp_path / "o.json") == 2
    assert main(["verify", str(broken), "--vector", vec([1])]) == 2
    assert main(["no-such-command"]) == 2


def test_verify_needs_a_target(vec, tmp_path):
    out = tmp_path / "n.json"
    assert build(vec([1, 0]), out) == 0
    assert main(["verify", str(out)]) == 2


def wide_vector():
    # long decoder segments: the packed bit strings need more than 53 bits
    x = [0] * 2048
    for i in range(0, 2048, 16):
        x[i] = 7 if (i // 16) % 2 else -6
    return x


def test_float_verification_refused_beyond_mantissa(vec, tmp_path, capsys):
    v, out = vec(wide_vector()), tmp_path / "n.json"
    assert build(v, out) == 0
    capsys.readouterr()
    assert main(["verify", str(out), "--vector", v, "--mode", "f64"]) == 3
    assert "refusing" in capsys.readouterr().err
    assert main(["verify", str(out), "--vector", v]) == 0


def test_precision_budget_exit_3(vec, tmp_path, monkeypatch):
    v, out = vec(wide_vector()), tmp_path / "n.json"
    assert build(v, out) == 0
    monkeypatch.setenv("RELU_FORGE_PRECISION_BITS", "8")
    assert main(["verify", str(out), "--vector", v]) == 3


def test_f64_build_roundtrip(vec, tmp_path):
    v, out = vec([2, 0, -1, 0]), tmp_path / "f.json"
    assert build(v, out, "--mode", "f64") == 0
    assert load(out).mode == "f64"
    assert main(["verify", str(out), "--vector", v, "--tol", "1e-9"]) == 0


def test_verify_function(tmp_path, capsys):
    from relu_forge.functions import sine
    from relu_forge.pipeline import build_approximant
    app = build_approximant(sine(), 8, p=2)
    out = tmp_path / "app.json"
    save(app.net, out)
    assert main(["verify", str(out), "--function", "sin", "--p", "2", "--tol", "1.0"]) == 0
    assert main(["verify", str(out), "--function", "sin", "--p", "2", "--tol", "1e-6"]) == 1
    assert main(["verify", str(out), "--function", "sin", "--params", '{"d": 2}']) == 2


def test_rates_csv_and_manifest(tmp_path, capsys):
    out = tmp_path / "r.csv"
    assert main(["rates", "--s", "1", "--p", "2", "--q", "2", "--d", "1",
                 "--n-grid", "8,16,32,64", "--out", str(out), "--seed", "3"]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 4
    assert list(rows[0]) == ["n", "depth", "width", "params", "p", "error", "ci_lo", "ci_hi",
                             "seed"]
    assert all(r["seed"] == "3" for r in rows)
    man = json.loads((tmp_path / "r.csv.manifest.json").read_text())
    assert man["command"] == "rates" and "slope" in man and man["seed"] == 3
    assert man["predicted_slope"] == -2


def test_rates_refuses_bad_embedding(capsys):
    assert main(["rates", "--s", "1", "--p", "inf", "--q", "1", "--d", "1"]) == 2
    assert ">= s/d" in capsys.readouterr().err


def test_rates_config_validation(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"bogus": 1}')
    assert main(["rates", "--config", str(cfg)]) == 2
    cfg.write_text("[1]")
    assert main(["rates", "--config", str(cfg)]) == 2


def test_rates_deterministic(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"function": "abs_power", "params": {"gamma": 0.75},
                               "s": 0.9, "p": 2, "q": 2, "n_grid": [8, 16, 32], "seed": 11}))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["rates", "--config", str(cfg), "--out", str(a)]) == 0
    assert main(["rates", "--config", str(cfg), "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_console_script_entry_point():
    res = subprocess.run([sys.executable, "-m", "relu_forge.cli", "--version"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip()
