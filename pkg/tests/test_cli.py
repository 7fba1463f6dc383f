import json

import pytest

from volterra_lrd import cli
from volterra_lrd.acceptance import load_manifest
from volterra_lrd.errors import NumericError


@pytest.fixture
def out(tmp_path):
    return tmp_path / "runs"


def _run(out, *argv):
    return cli.run(["--out", str(out), *argv])


def test_help_and_bad_flag(capsys, out):
    with pytest.raises(SystemExit) as exc:
        cli.run(["--help"])
    assert exc.value.code == 0
    assert "verify" in capsys.readouterr().out
    assert _run(out, "--bogus") == cli.EXIT_USAGE
    assert _run(out, "partitions") == cli.EXIT_USAGE


def test_appell_table(capsys, out):
    assert _run(out, "appell", "--K", "3") == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "p,x^0,x^1,x^2,x^3"
    # He_3 = x^3 - 3x
    assert lines[4] == "3,0,-3,0,1"
    assert (out / "appell.csv").exists()


def test_partitions_count(capsys, out):
    assert _run(out, "partitions", "--k", "4") == 0
    assert capsys.readouterr().out.splitlines()[-1] == "# count 15"


def test_terms_k5_multiplicities(capsys, out):
    assert _run(out, "terms", "--k", "5") == 0
    doc = json.loads(capsys.readouterr().out)
    by_r = {}
    for t in doc["terms"]:
        if t["regime"] == "LRD":
            by_r[t["r"]] = by_r.get(t["r"], 0) + 1
    assert by_r == {0: 1, 1: 10, 2: 15}


def test_simulate_is_byte_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    argv = ["simulate", "--N", "50", "--paths", "1", "--M", "8", "--seed", "3", "--eps"]
    assert _run(a, *argv) == 0 and _run(b, *argv) == 0
    assert (a / "path.csv").read_bytes() == (b / "path.csv").read_bytes()
    assert (a / "path.csv").read_text().splitlines()[0] == "n,X,eps"
    man = json.loads((a / "run_manifest.json").read_text())
    assert man["command"] == "simulate" and man["exit_code"] == 0
    assert man["config"]["seed"] == 3


def test_verify_negative_control(tmp_path, out):
    doc = load_manifest()
    doc["criteria"] = {"2": dict(doc["criteria"]["2"], d_5=[1, 11, 15], points=3)}
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    assert _run(out, "verify", "--manifest", str(bad), "--only", "2") == cli.EXIT_TOLERANCE


def test_verify_single_criterion_passes(capsys, out):
    assert _run(out, "verify", "--only", "8") == 0
    assert "1/1 criteria passed" in capsys.readouterr().out
    assert (out / "verify.json").exists()


def test_numeric_failure_writes_diagnostic(monkeypatch, out):
    def boom(args, run):
        raise NumericError("quadrature did not converge", estimate=1.5, error=0.2)

    monkeypatch.setitem(cli.HANDLERS, "partitions", boom)
    assert _run(out, "partitions", "--k", "3") == cli.EXIT_NUMERIC
    diag = json.loads((out / "diagnostic.json").read_text())
    assert diag["estimate"] == 1.5 and diag["error_estimate"] == 0.2
    assert json.loads((out / "run_manifest.json").read_text())["exit_code"] == cli.EXIT_NUMERIC


def test_config_overrides_flags(tmp_path, capsys, out):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"k": 5, "alpha": -2.75}))
    assert _run(out, "--config", str(cfg), "classify") == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["regime"] == "LongMemory" and doc["H"] == pytest.approx(0.75)
    cfg.write_text(json.dumps({"no_such_option": 1}))
    assert _run(out, "--config", str(cfg), "classify") == cli.EXIT_USAGE


def test_config_kernel_document(tmp_path, capsys, out):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"kernel": {"kind": "PowerSum", "k": 2, "alpha": -1.2}, "M": 4}))
    assert _run(out, "--config", str(cfg), "mean") == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["mean"] == pytest.approx(sum((2 * i) ** -1.2 for i in range(1, 5)))
    cfg.write_text(json.dumps({"kernel": {"type": "PowerSum"}}))
    assert _run(out, "--config", str(cfg), "mean") == cli.EXIT_USAGE


def test_out_from_environment(tmp_path, monkeypatch):
    target = tmp_path / "env_out"
    monkeypatch.setenv(cli.OUT_ENV, str(target))
    assert cli.run(["appell", "--K", "2"]) == 0
    assert (target / "appell.csv").exists() and (target / "run_manifest.json").exists()


def test_m_sweep_csv(out):
    code = _run(out, "nclt", "--N", "256", "--paths", "20", "--limit-reps", "0",
                "--M-sweep", "8,16", "--method", "direct", "--M", "8")
    assert code == 0
    lines = (out / "bias_vs_M.csv").read_text().splitlines()
    assert lines[0] == "M,var,se,var_limit,rel_bias"
    assert [l.split(",")[0] for l in lines[1:]] == ["8", "16"]
