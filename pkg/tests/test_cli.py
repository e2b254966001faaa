import json

import pytest

from nlpcanon.cli import EXIT_FAIL, EXIT_INPUT, EXIT_OK, main, read_matrix_pair, InputError

from conftest import PROBLEMS


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    return code, capsys.readouterr().out


@pytest.mark.parametrize(
    "argv, code, marker",
    [
        (["analyze", PROBLEMS / "worked.nlp"], EXIT_OK, "certificate: passed"),
        (["analyze", PROBLEMS / "worked_saddle.nlp"], EXIT_FAIL, "SeparationFailed"),
        (["analyze", PROBLEMS / "mfcq_opposing.nlp"], EXIT_FAIL, "mfcq: failed"),
        (["analyze", PROBLEMS / "missing.nlp"], EXIT_INPUT, "cannot read"),
        (["chart", PROBLEMS / "chart3.nlp"], EXIT_OK, "chart: passed"),
        (["chart", PROBLEMS / "rank_deficient.nlp"], EXIT_FAIL, "chart: failed"),
        (["separate", PROBLEMS / "diagonal.mat", "--interval", "0", "2"], EXIT_OK, "gamma* = 1"),
        (["separate", PROBLEMS / "diagonal_violating.mat", "--interval", "0", "2"], EXIT_FAIL, "separation: failed"),
        (["separate", PROBLEMS / "worked.nlp", "--interval", "0", "2"], EXIT_INPUT, "error"),
        (["factor-hessians", PROBLEMS / "worked.nlp"], EXIT_OK, "alpha = [1.]"),
        (["check-mfcq", PROBLEMS / "mfcq_ok.nlp"], EXIT_OK, "mfcq: passed"),
        (["check-mfcq", PROBLEMS / "rank_deficient.nlp"], EXIT_FAIL, "mfcq: failed"),
        (["invariance", PROBLEMS / "worked.nlp", "--count", "3"], EXIT_OK, "invariance: passed"),
        (["invariance", PROBLEMS / "worked.nlp", "--count", "1", "--magnitude", "50"], EXIT_FAIL, "GenerationFailed"),
    ],
)
def test_exit_codes(capsys, argv, code, marker):
    got, out = run(capsys, *argv)
    assert got == code
    assert marker in out


def test_parse_error_exit(tmp_path, capsys):
    bad = tmp_path / "bad.nlp"
    bad.write_text("vars x\nradius 1\nobjective x +\n")
    assert run(capsys, "analyze", bad)[0] == EXIT_INPUT
    inactive = tmp_path / "inactive.nlp"
    inactive.write_text("vars x\nradius 1\nobjective x\nineq g: x + 1\n")
    assert run(capsys, "check-mfcq", inactive)[0] == EXIT_INPUT


def test_bad_arguments(capsys):
    assert main(["separate", str(PROBLEMS / "diagonal.mat")]) == EXIT_INPUT
    assert main(["frobnicate"]) == EXIT_INPUT
    capsys.readouterr()


def test_json_report(capsys):
    code, out = run(capsys, "analyze", PROBLEMS / "worked.nlp", "--json")
    report = json.loads(out)
    assert code == 0
    assert report["schema"] == "nlpcanon/1"
    assert len(report["digest"]) == 64
    assert report["tolerances"]["tol"] == 1e-8
    cert = report["result"]["checks"]["certificate"]
    assert cert["mu"] == [2.0, 0.0]
    assert "seconds" not in report


def test_flags_before_or_after_subcommand(capsys):
    a = run(capsys, "--json", "--seed", "5", "check-mfcq", PROBLEMS / "mfcq_ok.nlp")[1]
    b = run(capsys, "check-mfcq", PROBLEMS / "mfcq_ok.nlp", "--json", "--seed", "5")[1]
    assert a == b and json.loads(a)["seed"] == 5


def test_timing_flag(capsys):
    out = run(capsys, "check-mfcq", PROBLEMS / "mfcq_ok.nlp", "--json", "--timing")[1]
    assert "seconds" in json.loads(out)


def test_invariance_with_given_multipliers(capsys):
    code, out = run(capsys, "invariance", PROBLEMS / "worked.nlp", "--count", "2", "--mu", "2,0", "--json")
    report = json.loads(out)["result"]["invariance"]
    assert code == 0 and report["first_order"] and report["mu"] == [2.0, 0.0]
    code, out = run(capsys, "invariance", PROBLEMS / "worked.nlp", "--count", "2", "--mu", "0 0", "--json")
    report = json.loads(out)["result"]["invariance"]
    assert code == 0 and not report["first_order"]
    assert run(capsys, "invariance", PROBLEMS / "worked.nlp", "--mu", "1")[0] == EXIT_INPUT


def test_several_files_in_parallel(capsys):
    files = [PROBLEMS / n for n in ("worked.nlp", "linear.nlp", "mfcq_opposing.nlp")]
    serial = run(capsys, "analyze", *files, "--json")
    parallel = run(capsys, "analyze", *files, "--json", "--jobs", "2")
    assert serial == parallel
    assert serial[0] == EXIT_FAIL
    assert len(json.loads(serial[1])["reports"]) == 3


@pytest.mark.parametrize(
    "text",
    ["2\n1 0\n0 1\n", "2\n1 0\n0 1\n\n1 0\n", "2\n1 2\n0 1\n\n1 0\n0 1\n", "x\n1\n\n1\n", "1\nnan\n\n1\n"],
)
def test_malformed_matrix_files(text):
    with pytest.raises(InputError):
        read_matrix_pair(text)


def test_matrix_file_with_repeated_dimension():
    A, B = read_matrix_pair("2\n1 0\n0 2\n\n2\n3 0\n0 4\n")
    assert B[1, 1] == 4.0
