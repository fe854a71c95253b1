import csv
import io
import json

import pytest

from prtnep.casefile import BUNDLED
from prtnep.cli import EXIT_CASE_ERROR, EXIT_INFEASIBLE, EXIT_OK, main

GARVER_DC = (BUNDLED / "garver6-dc.case").read_text()

QUICK = ["plan", "--case", "garver6", "--model", "dc", "--security", "for", "--seed", "3",
         "--colony", "8", "--iter", "6", "--crisp-trials", "1", "--trials", "2"]


@pytest.mark.parametrize("name", ["garver6-dc", "garver6-ac", "ieee24-dc", "ieee24-ac"])
def test_bundled_cases_validate(name, capsys):
    assert main(["validate", name]) == EXIT_OK
    assert capsys.readouterr().out.strip().endswith(": ok")


def test_negative_n_bar_is_diagnosed(tmp_path, capsys):
    path = tmp_path / "bad.case"
    path.write_text(GARVER_DC.replace("1   1     2   0.40  100    40    1   3", "1   1     2   0.40  100    40    1   -1"))
    assert main(["validate", str(path)]) == EXIT_CASE_ERROR
    assert "corridor 1: negative n_bar" in capsys.readouterr().out


def test_missing_uncertainty_rows_block_a_full_study(tmp_path, capsys):
    path = tmp_path / "nowind.case"
    path.write_text(GARVER_DC.replace("wind  4       9.0    2.0   3     12    25    120   -          -\n", ""))
    code = main(["plan", "--case", str(path), "--model", "dc", "--security", "for"])
    assert code == EXIT_CASE_ERROR
    assert "no wind rows" in capsys.readouterr().err


def test_parse_error_reports_position(tmp_path, capsys):
    path = tmp_path / "typo.case"
    path.write_text(GARVER_DC.replace("1   1     2   0.40  100", "1   1     2   0.4O  100"))
    assert main(["validate", str(path)]) == EXIT_CASE_ERROR
    err = capsys.readouterr().err
    assert f"{path}:32:15:" in err and "bad value '0.4O'" in err


def test_unknown_case(capsys):
    assert main(["validate", "atlantis"]) == EXIT_CASE_ERROR


def test_evaluate_exit_codes(capsys):
    ok = main(["evaluate", "--case", "garver6", "--model", "dc", "--security", "for",
               "--plan", "2-6:3,3-5:2,4-6:3"])
    doc = json.loads(capsys.readouterr().out)
    assert ok == EXIT_OK and doc["cost"] == 220.0 and doc["expected_penalty"] == 0.0
    bad = main(["evaluate", "--case", "garver6", "--model", "ac", "--security", "n-1", "--no-wind", "--no-load",
                "--crisp", "--plan", "2-6:2,3-5:2,4-6:2"])
    assert bad == EXIT_INFEASIBLE


def test_reports_are_byte_identical_for_a_seed(tmp_path, capsys):
    outs = []
    for run in ("a", "b"):
        assert main(QUICK + ["--out", str(tmp_path / run)]) in (EXIT_OK, EXIT_INFEASIBLE)
        outs.append(tmp_path / run)
    for name in ("report.json", "report.csv", "traces/full_trial001.csv"):
        a, b = (o / name for o in outs)
        if name == "report.csv":
            # the elapsed-time row is the only run-dependent line
            strip = lambda p: [r for r in p.read_text().splitlines() if not r.startswith("tp,")]
            assert strip(a) == strip(b)
        else:
            assert a.read_bytes() == b.read_bytes()
    doc = json.loads((outs[0] / "report.json").read_text())
    assert doc["schema"] == "prtnep.report/1"
    assert [s["stage"] for s in doc["stages"]] == ["crisp", "full"]
    assert "elapsed" not in json.dumps(doc)
    assert (outs[0] / "timing.json").exists()


def test_csv_layout(tmp_path, capsys):
    main(QUICK + ["--out", str(tmp_path), "--report", "csv"])
    rows = list(csv.reader(io.StringIO((tmp_path / "report.csv").read_text())))
    assert rows[0] == ["corridor", "additions", "cost_contribution"]
    keys = {r[0] for r in rows[1:]}
    assert {"total_lines", "v_cr", "v_pr", "tp", "pf_calls"} <= keys
    assert not (tmp_path / "report.json").exists()
