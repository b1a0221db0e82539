"""Sandboxed execution: verdicts, output matching, limits, and batch judging."""
import pytest

from bugcc.core import TestSuite
from bugcc.runner import (
    ExecLimits,
    judge,
    judge_many,
    outputs_match,
    run_function_check,
    run_io_tests,
)

FAST = ExecLimits(wall_time_s=5.0)

FC_SUITE = TestSuite(
    check_program=(
        "def check(candidate):\n"
        "    assert candidate(2) == 4\n"
        "    assert candidate(0) == 0\n"
    ),
    entry_point="double",
)

IO_SUITE = TestSuite(cases=(("3\n", "6\n"), ("0\n", "0\n")), time_limit_s=2.0)


# --- outputs_match ------------------------------------------------------------

def test_outputs_match_exact():
    assert outputs_match("6\n", "6\n")


def test_outputs_match_trailing_newline_and_spaces():
    assert outputs_match("6", "6\n")
    assert outputs_match("6   \n", "6\n")
    assert not outputs_match("6\n\n", "6\n")
    assert not outputs_match(" 6\n", "6\n")


def test_outputs_match_multiline():
    assert outputs_match("a \nb\n", "a\nb\n")
    assert not outputs_match("a\nb\n", "b\na\n")


# --- function_check -------------------------------------------------------------

def test_function_check_accepted():
    verdict = run_function_check("def double(x):\n    return 2 * x\n", FC_SUITE, FAST)
    assert verdict.kind == "accepted"
    assert verdict.passed


def test_function_check_wrong_answer():
    verdict = run_function_check("def double(x):\n    return x\n", FC_SUITE, FAST)
    assert verdict.kind == "wrong_answer"
    assert not verdict.passed


def test_function_check_syntax_error():
    verdict = run_function_check("def double(x:\n", FC_SUITE, FAST)
    assert verdict.kind == "syntax_error"


def test_function_check_missing_entry_point():
    verdict = run_function_check("def halve(x):\n    return x\n", FC_SUITE, FAST)
    assert verdict.kind in {"runtime_error", "wrong_answer"}
    assert not verdict.passed


def test_function_check_runtime_error():
    verdict = run_function_check(
        "def double(x):\n    raise RuntimeError('boom')\n", FC_SUITE, FAST
    )
    assert verdict.kind == "runtime_error"


def test_function_check_timeout():
    suite = TestSuite(
        check_program=FC_SUITE.check_program,
        entry_point="double",
        time_limit_s=1.0,
    )
    verdict = run_function_check(
        "import time\n\ndef double(x):\n    time.sleep(30)\n", suite, FAST
    )
    assert verdict.kind == "time_limit_exceeded"


# --- io_pairs --------------------------------------------------------------------

SUM_PROGRAM = "n = int(input())\nprint(n * (n + 1) // 2)\n"


def test_io_accepted():
    assert run_io_tests(SUM_PROGRAM, IO_SUITE, FAST).kind == "accepted"


def test_io_wrong_answer_reports_first_failed_case():
    program = "n = int(input())\nprint(n)\n"  # wrong on case 0 (3 -> 3, want 6)
    verdict = run_io_tests(program, IO_SUITE, FAST)
    assert verdict.kind == "wrong_answer"
    assert verdict.failed_case == 0


def test_io_second_case_failure():
    program = "n = int(input())\nprint(6 if n else 1)\n"
    # passes "3\n" -> need 6; n=3 truthy prints 6 ok; fails n=0 (prints 1, want 0)
    verdict = run_io_tests(program, IO_SUITE, FAST)
    assert verdict.kind == "wrong_answer"
    assert verdict.failed_case == 1


def test_io_syntax_error():
    assert run_io_tests("print(\n", IO_SUITE, FAST).kind == "syntax_error"


def test_io_runtime_error():
    verdict = run_io_tests("raise ValueError('x')\n", IO_SUITE, FAST)
    assert verdict.kind == "runtime_error"


def test_io_timeout():
    verdict = run_io_tests("while True:\n    pass\n", IO_SUITE, FAST)
    assert verdict.kind == "time_limit_exceeded"


def test_io_output_flood_is_wrong_answer():
    limits = ExecLimits(wall_time_s=5.0, max_output_bytes=4096)
    program = "print('x' * 100000)\n"
    verdict = run_io_tests(program, IO_SUITE, limits)
    assert verdict.kind == "wrong_answer"


# --- judge dispatch ---------------------------------------------------------------

def test_judge_function_check(tiny_problem):
    good = tiny_problem.full_program()
    assert judge(good, tiny_problem, FAST).kind == "accepted"


def test_judge_io(io_problem):
    assert judge(SUM_PROGRAM, io_problem, FAST).kind == "accepted"


def test_judge_accepts_sample_like_objects(io_problem):
    class Holder:
        program = SUM_PROGRAM

    assert judge(Holder(), io_problem, FAST).kind == "accepted"


def test_judge_rejects_non_text(io_problem):
    with pytest.raises(TypeError):
        judge(42, io_problem, FAST)


def test_judge_many_preserves_order(io_problem, tiny_problem):
    pairs = [
        (SUM_PROGRAM, io_problem),
        ("print('nope')\n", io_problem),
        (tiny_problem.full_program(), tiny_problem),
    ]
    kinds = [v.kind for v in judge_many(pairs, FAST, jobs=2)]
    assert kinds == ["accepted", "wrong_answer", "accepted"]
