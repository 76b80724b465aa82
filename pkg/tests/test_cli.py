import json
import os
import subprocess
import sys

import pytest

from quasirbf.cli import EXIT_INPUT, EXIT_NUMERIC, EXIT_OK, main

TPS21 = '{"family":"tps","n":2,"c":1,"d":1}'
IMQ4 = '{"family":"power","n":4,"c":1,"lambda":-2,"beta":-0.5}'


def run(args, capsys):
    code = main(args)
    out, err = capsys.readouterr()
    return code, out, err


def body(out):
    head, _, rest = out.partition("\n")
    assert head.startswith("# quasirbf 0.1.0 ")
    return rest


def test_transform_json(capsys):
    code, out, _ = run(["transform", "--spec", TPS21, "--s", "1,2", "--closed-form"], capsys)
    assert code == EXIT_OK
    data = json.loads(body(out))
    assert [r["s"] for r in data["rows"]] == [1, 2]
    for r in data["rows"]:
        assert abs(r["value"] - r["closed_form"]) <= 1e-8 * abs(r["closed_form"])


def test_transform_csv_17_digits(capsys):
    code, out, _ = run(["transform", "--spec", TPS21, "--s", "1", "--format", "csv"], capsys)
    assert code == EXIT_OK
    lines = body(out).strip().splitlines()
    assert lines[0] == "s,value,method,terms,truncation_estimate"
    assert lines[1].split(",")[1] == "40.836655577753632"


def test_spec_from_file(tmp_path, capsys):
    p = tmp_path / "spec.json"
    p.write_text(TPS21)
    code, out, _ = run(["classify", "--spec", str(p)], capsys)
    assert code == EXIT_OK
    assert json.loads(body(out))["qi_feasible"] == "FiniteStencil"


@pytest.mark.parametrize(
    "spec,verdict",
    [
        ('{"family":"power","n":1,"c":1,"lambda":2,"beta":-1.5}', "Infeasible"),
        (IMQ4, "FiniteStencil"),
        ('{"family":"power","n":1,"c":1,"lambda":2,"beta":0.5}', "FiniteStencil"),
    ],
)
def test_classify_examples(spec, verdict, capsys):
    code, out, _ = run(["classify", "--spec", spec], capsys)
    assert code == EXIT_OK
    assert json.loads(body(out))["qi_feasible"] == verdict


@pytest.mark.parametrize(
    "args",
    [
        ["transform", "--spec", "{not json", "--s", "1"],
        ["transform", "--spec", '{"family":"tps","n":2}', "--s", "1"],
        ["transform", "--spec", TPS21, "--s", "-1"],
        ["transform", "--spec", TPS21],
        ["transform", "--s", "1"],
        ["transform", "--spec", '{"family":"tps","n":2,"c":1,"d":2}', "--s", "1", "--closed-form"],
        ["classify", "--spec", '{"family":"power","n":1,"c":1,"lambda":2,"beta":-1.5}', "--require-feasible"],
        ["stencil", "--spec", '{"family":"power","n":1,"c":1,"lambda":2,"beta":-0.5}'],
        ["convergence", "--spec", TPS21, "--h", "1/4,1/8"],
        ["convergence", "--spec", TPS21, "--h", "1/4,1/8,1/16", "--function", "nope"],
        ["reproduce", "--spec", TPS21, "--h", "1/4"],
        ["ladder", "--spec", TPS21, "--s-smooth", "5"],
    ],
)
def test_input_errors_exit_2(args, capsys):
    code, _, _ = run(args, capsys)
    assert code == EXIT_INPUT


def test_unknown_command_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["nosuchcommand"])
    assert exc.value.code == EXIT_INPUT


def test_ladder_above_order_exit_3(capsys):
    code, _, err = run(["ladder", "--spec", TPS21, "--k", "5", "--radius", "2"], capsys)
    assert code == EXIT_NUMERIC
    assert "LimitDivergenceError" in err


def test_stencil_then_reproduce(tmp_path, capsys):
    path = tmp_path / "st.json"
    code, _, _ = run(["stencil", "--spec", TPS21, "--out", str(path)], capsys)
    assert code == EXIT_OK
    code, out, _ = run(
        ["reproduce", "--spec", TPS21, "--stencil", str(path), "--degree", "3", "--h", "1/4", "--tol", "1e-5"], capsys
    )
    assert code == EXIT_OK
    rows = json.loads(body(out))["residuals"]
    assert len(rows) == 10
    assert all(r["residual"] <= 1e-5 * max(r["box_sup"], 1.0) for r in rows)


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"spec": json.loads(TPS21), "s": "1", "format": "csv"}))
    code, out, _ = run(["transform", "--config", str(cfg)], capsys)
    assert code == EXIT_OK and body(out).startswith("s,value")
    code, out, _ = run(["transform", "--config", str(cfg), "--format", "json"], capsys)
    assert code == EXIT_OK and body(out).startswith("{")


def test_help_lists_catalog(capsys):
    with pytest.raises(SystemExit):
        main(["convergence", "--help"])
    out = capsys.readouterr().out
    for name in ("gaussian-bump", "trig-product", "runge"):
        assert name in out


def _cli(args, env=None):
    e = dict(os.environ)
    e.update(env or {})
    return subprocess.run([sys.executable, "-m", "quasirbf.cli", *args], capture_output=True, env=e, check=True).stdout


def test_byte_identical_reruns():
    args = ["transform", "--spec", TPS21, "--s", "0.5,1,3,7", "--format", "csv"]
    a = _cli(args)
    assert a == _cli(args)
    assert a == _cli(args, {"QUASIRBF_THREADS": "3"})
    args = ["stencil", "--spec", TPS21]
    assert _cli(args) == _cli(args)
