import csv
import io
import json
import math

import jsonschema
import numpy as np
import pytest

from hspw_lab.cli import build_parser, main, resolve_config, run
from hspw_lab.hspw import verify_hspw
from hspw_lab.domain import Interval
from hspw_lab.fields import expression_field
from hspw_lab.parallel import ordered_map, thread_count
from hspw_lab.report import dumps_report, emit_sweep_table, format_cell, to_jsonable, validate_report
from hspw_lab.search import restarted_nelder_mead

I01_JSON = '{"type":"interval","lo":0,"hi":1}'
HSP_JSON = json.dumps({"type": "halfspace_product", "d": 1, "r": 1,
                       "truncation": {"type": "box", "lo": [-4, 0], "hi": [4, 8]}})


def invoke(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def report_of(capsys, *argv):
    code, out, err = invoke(capsys, *argv)
    doc = json.loads(out)
    validate_report(doc)
    return code, doc


# -- commands ---------------------------------------------------------------------

def test_hspw_verify_example(capsys):
    code, doc = report_of(capsys, "hspw-verify", "--domain", I01_JSON, "--field", "poly:t*(1-t)",
                          "--alpha", "0", "--p", "2")
    assert code == 0 and doc["status"] == "pass" and doc["exit_code"] == 0
    (h,) = doc["result"]["hspw"]
    assert h["ratio"] == pytest.approx(math.sqrt(7 / 4), rel=1e-8)
    assert h["ratio"] == pytest.approx(1.3228756555322954, rel=1e-8)
    assert h["pass"] is True
    assert doc["config"]["quadrature"]["rel_tol"] == 1e-8


def test_exponents_solves_q(capsys):
    code, doc = report_of(capsys, "exponents", "--n", "3", "--p", "2", "--a", "0", "--h", "0", "--solve", "q")
    assert code == 0
    assert doc["result"]["relation"]["value"] == pytest.approx(6.0, rel=1e-15)


def test_norm_of_zero_field(capsys):
    code, doc = report_of(capsys, "norm", "--domain", I01_JSON, "--field", "zero", "--p", "2")
    assert code == 0 and doc["result"]["norms"][0]["value"] == 0.0


def test_norm_variants(capsys):
    code, doc = report_of(capsys, "norm", "--domain", I01_JSON, "--field", "poly:t*(1-t)", "--alpha", "1",
                          "--p", "1")
    assert doc["result"]["norms"][0]["value"] == pytest.approx(0.75, rel=1e-8)
    code, doc = report_of(capsys, "norm", "--domain", I01_JSON, "--field", "poly:t*(1-t)", "--of", "sobolev",
                          "--p", "2")
    assert doc["result"]["norms"][0]["value"] == pytest.approx((1 / 3) ** 0.25 + (1 / 30) ** 0.5, rel=1e-7)


def test_gls_norm_theorem(capsys):
    code, doc = report_of(capsys, "gls-norm", "--domain", I01_JSON, "--field", "poly:t*(1-t)",
                          "--psi", "power:2", "--psi", "natural", "--theorem", "--p-count", "6")
    assert code == 0 and doc["status"] == "pass"
    tags = [r["psi"]["tag"] for r in doc["result"]["theorem"]]
    assert tags == ["power:2", "natural"]
    assert doc["result"]["theorem"][1]["rhs"] == 1.0


def test_gls_norm_plain(capsys):
    code, doc = report_of(capsys, "gls-norm", "--domain", I01_JSON, "--field", "poly:t*(1-t)",
                          "--psi", "extremal:2", "--of", "grad")
    assert code == 0 and doc["status"] == "ok"
    assert doc["result"]["gls"][0]["value"] == pytest.approx(math.sqrt(1 / 3), rel=1e-8)


def test_dilation_command(capsys):
    code, doc = report_of(capsys, "dilation", "--domain", HSP_JSON, "--p", "2", "--q", "2", "--a", "0",
                          "--h", "0", "--probe")
    assert code == 0
    assert doc["result"]["probe"]["observed_slope"] == pytest.approx(-1.0, abs=1e-6)
    assert doc["config"]["field"] == "productbump"


def test_sharpness_command_is_deterministic(capsys):
    argv = ["sharpness", "--budget", "12", "--seed", "4"]
    _, a, _ = invoke(capsys, *argv)
    _, b, _ = invoke(capsys, *argv)
    assert a == b
    doc = json.loads(a)
    validate_report(doc)
    assert doc["result"]["sharpness"]["evaluations"] <= 12


def test_same_config_same_bytes():
    args = build_parser().parse_args(["hspw-verify", "--domain", I01_JSON, "--field", "bubble:2",
                                      "--alpha", "0.5", "--p", "3"])
    texts = [dumps_report(run(resolve_config(args))[1]) for _ in range(2)]
    assert texts[0] == texts[1]


# -- exit codes --------------------------------------------------------------------

@pytest.mark.parametrize("argv,where", [
    (["hspw-verify", "--domain", I01_JSON, "--field", "poly:t*(1-t)"], "p"),
    (["hspw-verify", "--domain", "{not json", "--p", "2"], "domain"),
    (["hspw-verify", "--domain", '{"type":"interval","lo":1,"hi":0}', "--p", "2"], "domain"),
    (["hspw-verify", "--domain", I01_JSON, "--field", "nope", "--p", "2"], "field"),
    (["gls-norm", "--domain", I01_JSON, "--psi", "nope:1"], "psi[0]"),
    (["exponents", "--n", "2", "--p", "2", "--a", "0", "--h", "0", "--solve", "q"], "solve"),
    (["hspw-verify", "--domain", I01_JSON, "--p", "2", "--rel-tol", "0"], "quadrature"),
    (["dilation", "--domain", I01_JSON, "--p", "2", "--q", "2", "--a", "0", "--h", "0"], "domain.type"),
])
def test_usage_errors(capsys, argv, where):
    code, out, err = invoke(capsys, *argv)
    assert code == 1 and out == ""
    assert f"at {where}" in err


def test_parser_errors(capsys):
    assert main(["bogus"]) == 1
    assert main([]) == 1
    assert main(["--version"]) == 0
    capsys.readouterr()


def test_divergence_exit_code(capsys):
    code, out, err = invoke(capsys, "hspw-verify", "--domain", I01_JSON, "--field", "power:0.3", "--p", "2")
    assert code == 3 and "divergent" in err
    code, doc = report_of(capsys, "hspw-verify", "--domain", I01_JSON, "--field", "poly:1+t*(1-t)", "--p", "2")
    assert code == 3 and doc["status"] == "divergent"
    assert doc["result"]["hspw"][0]["ratio"] is None


def test_report_merges_and_propagates_failure(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["hspw-verify", "--domain", I01_JSON, "--field", "poly:t*(1-t)", "--p", "2", "--p", "3",
                 "--out-json", str(a)]) == 0
    doc = json.loads(a.read_text())
    doc["status"], doc["exit_code"] = "fail", 2
    b.write_text(json.dumps(doc))
    out_csv = tmp_path / "merged.csv"
    code, out, err = invoke(capsys, "report", "--input", str(a), str(b), "--out-csv", str(out_csv))
    assert code == 2
    rows = list(csv.DictReader(out_csv.open()))
    assert len(rows) == 4 and [float(r["p"]) for r in rows] == [2.0, 2.0, 3.0, 3.0]


def test_report_rejects_invalid(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema": "hspw-lab/1", "command": "norm"}))
    code, out, err = invoke(capsys, "report", "--input", str(bad))
    assert code == 1 and "input[0]" in err


# -- config files -------------------------------------------------------------------

def test_config_file(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"command": "hspw-verify", "domain": json.loads(I01_JSON),
                                "field": "poly:t*(1-t)", "p": 2, "quadrature": {"rel_tol": 1e-9}}))
    code, doc = report_of(capsys, "hspw-verify", "--config", str(path))
    assert code == 0 and doc["config"]["quadrature"]["rel_tol"] == 1e-9
    assert doc["config"]["p"] == [2.0]
    code, doc = report_of(capsys, "hspw-verify", "--config", str(path), "--p", "3")
    assert doc["config"]["p"] == [3.0]
    code, out, err = invoke(capsys, "norm", "--config", str(path))
    assert code == 1 and "config.command" in err
    path.write_text(json.dumps({"command": "norm", "colour": 1}))
    code, out, err = invoke(capsys, "norm", "--config", str(path))
    assert code == 1 and "config.colour" in err


# -- tables and JSON --------------------------------------------------------------------

def test_csv_single_report():
    rep = verify_hspw(expression_field("t*(1-t)", 1), Interval(0.0, 1.0), 0.0, 2.0)
    rows = list(csv.reader(io.StringIO(emit_sweep_table([rep]))))
    assert len(rows) == 2 and len(rows[0]) == 9 and len(rows[1]) == 9


def test_csv_sweep_sorted(tmp_path, capsys):
    out_csv = tmp_path / "sweep.csv"
    argv = ["hspw-verify", "--domain", I01_JSON, "--field", "poly:t*(1-t)", "--out-csv", str(out_csv)]
    ps = [3.0, 1.5, 8.0, 2.0, 4.0, 1.2, 6.0, 2.5, 5.0, 10.0]
    for p in ps:
        argv += ["--p", str(p)]
    code, out, err = invoke(capsys, *argv)
    assert code == 0
    rows = list(csv.DictReader(out_csv.open()))
    assert [float(r["p"]) for r in rows] == sorted(ps)
    assert all(r["pass"] == "true" for r in rows)


def test_csv_refuses_empty():
    with pytest.raises(ValueError):
        emit_sweep_table([])


def test_format_and_jsonable():
    assert format_cell(0.1) == "0.10000000000000001"
    assert format_cell(True) == "true" and format_cell(None) == ""
    doc = to_jsonable({"a": math.inf, "b": np.float64(2.5), "c": np.arange(2), "d": np.bool_(True)})
    assert doc == {"a": None, "b": 2.5, "c": [0, 1], "d": True}


def test_schema_rejects_unknown_status():
    doc = json.loads(dumps_report(run(resolve_config(build_parser().parse_args(
        ["exponents", "--n", "3", "--p", "2", "--a", "0", "--h", "0", "--solve", "q"])))[1]))
    validate_report(doc)
    doc["status"] = "maybe"
    with pytest.raises(jsonschema.ValidationError):
        validate_report(doc)


# -- threads and search ---------------------------------------------------------------

def test_thread_count(monkeypatch):
    monkeypatch.setenv("HSPW_LAB_THREADS", "8")
    assert thread_count() == 8
    assert ordered_map(lambda x: x * x, range(20)) == [x * x for x in range(20)]
    monkeypatch.setenv("HSPW_LAB_THREADS", "zero")
    assert thread_count() == 1
    monkeypatch.setenv("HSPW_LAB_THREADS", "-3")
    assert thread_count() == 1


def test_nelder_mead_finds_box_minimum():
    res = restarted_nelder_mead(lambda x: (x[0] - 0.3) ** 2 + (x[1] + 1.0) ** 2, [(0.0, 1.0), (-2.0, 2.0)],
                                budget=400, seed=1)
    np.testing.assert_allclose(res.x, [0.3, -1.0], atol=1e-3)
    # the minimizer of a function decreasing past the box edge is the edge
    res = restarted_nelder_mead(lambda x: -x[0], [(0.0, 2.0)], budget=200)
    assert res.x[0] == 2.0


def test_nelder_mead_budget_prefix():
    def f(x):
        return math.sin(3 * x[0]) * math.cos(2 * x[1]) + 0.1 * x[0] ** 2

    small = restarted_nelder_mead(f, [(-2.0, 2.0), (-2.0, 2.0)], budget=25, seed=7)
    large = restarted_nelder_mead(f, [(-2.0, 2.0), (-2.0, 2.0)], budget=90, seed=7)
    assert small.exhausted and small.evaluations == 25
    assert [v for _, v in small.history] == [v for _, v in large.history[:25]]
    assert large.fun <= small.fun
    nan = restarted_nelder_mead(lambda x: math.nan, [(0.0, 1.0)], budget=5)
    assert nan.fun == math.inf
