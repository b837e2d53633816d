import csv
import io
import json
import subprocess
import sys

import pytest

from singlecopy.cli import COMMANDS, build_parser, round_floats, run
from singlecopy.densmat import matrix_to_json
from singlecopy.states import eq10_state


def _run(argv):
    buf = io.StringIO()
    code = run(argv, stdout=buf)
    return code, buf.getvalue()


def _err(capsys):
    lines = capsys.readouterr().err.strip().splitlines()
    assert len(lines) == 1
    return json.loads(lines[0])


def test_quasidistill_csv():
    code, out = _run(["quasidistill", "--p", "0.5", "--d", "3", "--n", "1,2,10"])
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert list(rows[0]) == ["n", "F_sim", "F_closed", "p_sim", "p_closed"]
    assert [r["n"] for r in rows] == ["1", "2", "10"]
    for r in rows:
        assert abs(float(r["F_sim"]) - float(r["F_closed"])) < 1e-12


def test_optimize_one_way_b():
    code, out = _run(["optimize", "--family", "eq10-2x2", "--p", "0.5",
                      "--class", "one-way-B", "--restarts", "8"])
    assert code == 0
    doc = json.loads(out)
    assert abs(doc["best_F"] - 2 / 3) < 1e-6
    assert doc["filter_class"] == "one_way_B_filters"


def test_teleport():
    code, out = _run(["teleport", "--F", "1", "--d", "4"])
    assert json.loads(out)["f"] == 1.0
    code, out = _run(["teleport", "--F", "1/2", "--d", "2"])
    assert json.loads(out)["f_exact"] == "2/3"
    code, out = _run(["teleport", "--F", "1/2", "--d", "2", "--format", "csv"])
    assert out.splitlines()[0] == "F,d,f"


def test_same_seed_is_byte_identical():
    argv = ["optimize", "--family", "random", "--d", "2", "--seed", "7", "--restarts", "4"]
    assert _run(argv)[1] == _run(argv)[1]


@pytest.mark.parametrize("argv", [
    ["state", "--family", "eq10", "--p", "0.3", "--d", "3"],
    ["fidelity", "--family", "isotropic", "--F", "2/3", "--d", "2"],
    ["filter", "--family", "eq10-2x2", "--p", "0.5", "--diag-b", "1,1/3"],
    ["scd", "--family", "eq10", "--p", "0.5", "--d", "3", "--m", "2"],
    ["channel", "--channel", "random", "--d", "3", "--kraus", "2"],
    ["ecfeas", "--channel", "identity", "--d", "2"],
])
def test_commands_emit_json(argv):
    code, out = _run(argv)
    assert code == 0
    assert isinstance(json.loads(out), dict)


def test_filter_reports_fraction():
    doc = json.loads(_run(["filter", "--family", "eq10-2x2", "--p", "0.5",
                           "--diag-b", "1,1/3"])[1])
    assert abs(doc["achieved_F"] - 2 / 3) < 1e-12


def test_scd_impossible_for_full_m():
    doc = json.loads(_run(["scd", "--family", "eq10", "--p", "0.5", "--d", "3", "--m", "3"])[1])
    assert doc["rank_condition"] == "impossible" and not doc["found"]


def test_input_files(tmp_path):
    state = tmp_path / "s.json"
    state.write_text(json.dumps(matrix_to_json(eq10_state(0.5, 2).mat, 2, 2)))
    code, out = _run(["fidelity", "--in", str(state)])
    assert code == 0 and json.loads(out)["singlet_fraction"] == 0.5
    filt = tmp_path / "f.json"
    filt.write_text(json.dumps({"state": {"family": "eq10", "p": 0.5, "d": 2},
                                "filter_B": {"re": [[1, 0], [0, 1 / 3]]}}))
    out_path = tmp_path / "o.json"
    assert _run(["filter", "--in", str(filt), "--out", str(out_path)]) == (0, "")
    assert abs(json.loads(out_path.read_text())["achieved_F"] - 2 / 3) < 1e-12


def test_validation_error_exit_2(capsys, tmp_path):
    assert _run(["state", "--family", "eq10", "--p", "1.5", "--d", "2"])[0] == 2
    rec = _err(capsys)
    assert rec["error"] == "ValueError"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"dim_a": 1, "dim_b": 2, "re": [[1, 0], [0, 1]]}))
    assert _run(["state", "--in", str(bad)])[0] == 2
    assert _err(capsys)["error"] == "NonUnitTrace"
    bad.write_text(json.dumps({"family": "eq10", "p": 0.5, "d": 2, "colour": 1}))
    assert _run(["state", "--in", str(bad)])[0] == 2
    assert "unknown" in _err(capsys)["message"]


def test_usage_error_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        run(["optimize", "--format", "xml"])
    assert exc.value.code == 2
    assert _err(capsys)["error"] == "UsageError"


def test_vanishing_outcome_exit_3(capsys):
    code, _ = _run(["filter", "--family", "eq10", "--p", "1", "--d", "2",
                    "--diag-a", "1,0", "--diag-b", "0,1"])
    assert code == 3
    assert _err(capsys)["error"] == "VanishingOutcome"


def test_help_names_construct():
    sub = build_parser()._subparsers._group_actions[0].choices
    assert set(sub) == set(COMMANDS)
    assert "(dF+1)/(d+1)" in sub["teleport"].format_help()
    assert "Channel-state duality" in sub["channel"].format_help()
    assert "rank condition" in sub["scd"].format_help()


def test_round_floats():
    assert round_floats({"x": [0.1 + 0.2, 1 / 3]}) == {"x": [0.3, 0.333333333333333]}


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "singlecopy", "teleport", "--F", "1", "--d", "4"],
                         capture_output=True, text=True, check=True)
    assert json.loads(res.stdout)["f"] == 1.0
