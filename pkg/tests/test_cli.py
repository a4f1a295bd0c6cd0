import json
import subprocess
import sys
from pathlib import Path

import pytest

from monolab.cli import main, run
from monolab.problem import ParseError, SchemaError, load_problem, problem_from_dict

FIX = Path(__file__).resolve().parent.parent / "fixtures"


def fx(name):
    return str(FIX / name)


def report_of(capsys, argv):
    code = main(argv)
    return json.loads(capsys.readouterr().out), code


# --- problem files ---------------------------------------------------------


def test_minimal_problem():
    prob = problem_from_dict({"space": {"dim": 1, "p": 2}, "function": {"kind": "abs_sum"}})
    assert prob.function.kind == "abs_sum" and prob.space.dim == 1


def test_p_equal_one_names_constraint():
    with pytest.raises(SchemaError, match=r"space\.p.*\(1, inf\)"):
        load_problem(fx("bad_p.json"))


def test_csv_row_dimension_diagnostic():
    with pytest.raises(SchemaError, match=r"bad_row\.csv:2: row has 3 columns, expected 4"):
        load_problem(fx("bad_row_graph.json"))


def test_invalid_json_is_parse_error():
    with pytest.raises(ParseError, match=r"broken\.json:1:"):
        load_problem(fx("broken.json"))


@pytest.mark.parametrize("raw,path", [
    ({}, r"\$\.space"),
    ({"space": {"dim": 0, "p": 2}}, r"space\.dim"),
    ({"space": {"dim": 2, "p": 2}, "z": [1]}, r"^z: has 1 entries"),
    ({"space": {"dim": 1, "p": 2}, "function": {"kind": "nope"}}, r"function\.kind"),
    ({"space": {"dim": 1, "p": 2}, "function": {"kind": "sum", "terms": [{"kind": "scaled", "factor": -1,
                                                 "function": {"kind": "abs_sum"}}]}},
     r"function\.terms\[0\]\.factor"),
    ({"space": {"dim": 1, "p": 2}, "solver": {"lambda": 0}}, r"solver\.lambda"),
    ({"space": {"dim": 1, "p": 2}, "solver": {"epsilon": 1}}, r"solver\.epsilon"),
    ({"space": {"dim": 1, "p": 2}, "extra": 1}, r"^extra"),
    ({"space": {"dim": 2, "p": 2}, "operator": {"kind": "psd_matrix", "matrix": [[1, 2], [0, 1]]}},
     r"^operator"),
])
def test_schema_errors_name_field(raw, path):
    with pytest.raises(SchemaError, match=path):
        problem_from_dict(raw)


def test_null_bound_is_infinite():
    prob = load_problem(fx("box_affine_p3.json"))
    box = prob.function.terms[0]
    assert box.lower[2] == float("-inf")


# --- exit codes ------------------------------------------------------------

EXIT_CASES = [
    # monotone checks
    ("check-monotone", "nonmonotone_graph.json", 1),
    ("check-monotone", "two_point_graph.json", 0),
    ("check-monotone", "graph_csv.json", 0),
    ("check-monotone", "psd_identity.json", 0),
    # Fitzpatrick: on-graph equality breaks for a non-monotone graph
    ("fitzpatrick", "nonmonotone_graph.json", 1),
    ("fitzpatrick", "two_point_graph.json", 0),
    ("fitzpatrick", "psd_identity.json", 0),
    # Ekeland: f(x) = x and a half-line box with a linear term are unbounded below
    ("ekeland", "soft_threshold.json", 0),
    ("ekeland", "psi_quadratic.json", 0),
    ("ekeland", "unbounded.json", 4),
    ("ekeland", "box_affine_p3.json", 4),
    # resolvents exist for every subdifferential
    ("resolve", "soft_threshold.json", 0),
    ("resolve", "box_affine_p3.json", 0),
    ("maximality-test", "abs_boundary.json", 0),
    ("maximality-test", "psi_quadratic.json", 0),
    # finite graphs are not surjective
    ("minty", "single_pair_graph.json", 1),
    ("minty", "two_point_graph.json", 1),
    ("minty", "psd_identity.json", 0),
    ("minty", "box_affine_p3.json", 0),
    ("rockafellar", "psd_identity.json", 0),
    ("rockafellar", "single_pair_graph.json", 1),
    # parse and schema failures
    ("resolve", "broken.json", 2),
    ("resolve", "missing.json", 2),
    ("resolve", "bad_p.json", 3),
    ("check-monotone", "bad_row_graph.json", 3),
    ("check-monotone", "soft_threshold.json", 3),
    ("rockafellar", "soft_threshold.json", 3),
    ("maximality-test", "soft_threshold.json", 3),
]


@pytest.mark.parametrize("cmd,fixture,code", EXIT_CASES)
def test_exit_codes(cmd, fixture, code, capsys):
    rep, got = report_of(capsys, [cmd, "--problem", fx(fixture)])
    assert got == code and rep["exit_code"] == code
    assert rep["passed"] == (code == 0)
    if code >= 2:
        assert rep["error"]["message"]


def test_missing_problem_flag(capsys):
    rep, code = report_of(capsys, ["resolve"])
    assert code == 2 and "needs --problem" in rep["error"]["message"]


def test_unknown_command_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


@pytest.mark.parametrize("flag", [["--lambda", "0"], ["--eps", "-1"], ["--budget", "0"], ["--seed", "-1"]])
def test_bad_flags_are_schema_errors(flag, capsys):
    _, code = report_of(capsys, ["resolve", "--problem", fx("soft_threshold.json")] + flag)
    assert code == 3


# --- report content --------------------------------------------------------


def test_check_monotone_reports_violation(capsys):
    rep, _ = report_of(capsys, ["check-monotone", "--problem", fx("nonmonotone_graph.json")])
    v = rep["results"]["violation"]
    assert v == {"pair_a": [[0.0], [1.0]], "pair_b": [[1.0], [0.0]]}
    assert rep["results"]["check"]["value"] == -1.0


def test_resolve_soft_threshold(capsys):
    rep, code = report_of(capsys, ["resolve", "--problem", fx("soft_threshold.json")])
    sol = rep["results"]["solutions"][0]
    assert code == 0 and sol["x"] == [1.0]


def test_lambda_flag_overrides_file(capsys):
    rep, code = report_of(capsys, ["resolve", "--problem", fx("soft_threshold.json"), "--lambda", "3"])
    # lam = 3: 6 in x + 3 d|x|, so x = soft(6, 3) = 3
    assert code == 0 and rep["results"]["solutions"][0]["x"] == [3.0]
    assert rep["inputs"]["solver"]["lambda"] == 3.0


def test_two_point_graph_scan(capsys):
    rep, _ = report_of(capsys, ["fitzpatrick", "--problem", fx("two_point_graph.json")])
    scan = rep["results"]["extension_scan"]
    hit = [c for c in scan["candidates"] if c["x"] == [2.0] and c["xs"] == [2.0]]
    assert hit and hit[0]["gap"] == pytest.approx(1.0)
    assert not scan["maximal_evidence"]


def test_provenance(capsys):
    rep, _ = report_of(capsys, ["ekeland", "--problem", fx("psi_quadratic.json"), "--seed", "11"])
    prov = rep["provenance"]
    assert prov["seed"] == 11
    assert {"numpy", "scipy", "monolab"} <= set(prov["versions"])
    assert "timestamp" in prov and "tolerances" in prov


@pytest.mark.parametrize("cmd,fixture", [
    ("ekeland", "psi_quadratic.json"),
    ("maximality-test", "abs_boundary.json"),
    ("fitzpatrick", "two_point_graph.json"),
    ("minty", "box_affine_p3.json"),
])
def test_deterministic_reports(cmd, fixture):
    a, _ = run([cmd, "--problem", fx(fixture)])
    b, _ = run([cmd, "--problem", fx(fixture)])
    a["provenance"].pop("timestamp")
    b["provenance"].pop("timestamp")
    assert json.dumps(a, sort_keys=False) == json.dumps(b, sort_keys=False)


def test_text_format_and_out(tmp_path, capsys):
    out = tmp_path / "r.txt"
    code = main(["resolve", "--problem", fx("soft_threshold.json"), "--format", "text", "--out", str(out)])
    assert code == 0 and capsys.readouterr().out == ""
    text = out.read_text()
    assert "results.solutions[0].x" in text and "exit_code" in text


def test_console_entry_point(tmp_path):
    out = tmp_path / "r.json"
    p = subprocess.run(
        [sys.executable, "-m", "monolab.cli", "check-monotone", "--problem",
         fx("nonmonotone_graph.json"), "--out", str(out)],
        capture_output=True, text=True,
    )
    assert p.returncode == 1
    assert json.loads(out.read_text())["results"]["check"]["monotone"] is False


def test_selftest_passes(capsys):
    rep, code = report_of(capsys, ["selftest"])
    assert code == 0
    assert len(rep["results"]["criteria"]) == 9
