"""Shared fixtures: a tiny corpus of function-check and stdin/stdout problems
plus a judge wired to the real sandboxed runner."""
import json

import pytest

from bugcc.core import BCCInstance, PairDiff, Problem, TestSuite
from bugcc.pairer import first_half
from bugcc.runner import ExecLimits, judge

import fixture_pairs
from fixture_pairs import PROBLEM as IO_PROBLEM

# Header is two lines; the body has flippable sites on body lines 3 (+=) and
# 4 (<) and a blank line before the final return, so one split per site lands
# on the blank line and must be dropped.
BELOW_HEADER = (
    'def below_zero(operations):\n'
    '    """True when a running sum of operations dips below zero."""\n'
)
BELOW_BODY = (
    "    balance = 0\n"
    "    for op in operations:\n"
    "        balance += op\n"
    "        if balance < 0:\n"
    "            return True\n"
    "\n"
    "    return False\n"
)
BELOW_CHECK = (
    "def check(candidate):\n"
    "    assert candidate([1, 2, 3]) == False\n"
    "    assert candidate([1, 2, -4, 5]) == True\n"
    "    assert candidate([1, -1]) == False\n"
)

# Both flips here survive the single weak test (empty input), so the problem
# contributes no instances and two still-passing sites to the report.
WEAK_HEADER = 'def double_sum(xs):\n    """Twice the sum of xs."""\n'
WEAK_BODY = (
    "    total = 0\n"
    "    for x in xs:\n"
    "        total += x\n"
    "    return total * 2\n"
)
WEAK_CHECK = "def check(candidate):\n    assert candidate([]) == 0\n"

# One site, one split; the canonical completion of the split is the final
# return line.
TINY_HEADER = 'def add_one(x):\n    """Add one to x."""\n'
TINY_BODY = "    y = x + 1\n    return y\n"
TINY_CHECK = (
    "def check(candidate):\n"
    "    assert candidate(1) == 2\n"
    "    assert candidate(-5) == -4\n"
)


def _fc_problem(pid, header, body, check, entry_point):
    return Problem(
        problem_id=pid,
        statement=f"Implement {entry_point}.",
        judge_mode="function_check",
        prompt_header=header,
        tests=TestSuite(check_program=check, entry_point=entry_point, time_limit_s=5.0),
        reference_solution=body,
    )


@pytest.fixture(scope="session")
def below_problem():
    return _fc_problem("fc/below", BELOW_HEADER, BELOW_BODY, BELOW_CHECK, "below_zero")


@pytest.fixture(scope="session")
def weak_problem():
    return _fc_problem("fc/weak", WEAK_HEADER, WEAK_BODY, WEAK_CHECK, "double_sum")


@pytest.fixture(scope="session")
def tiny_problem():
    return _fc_problem("fc/tiny", TINY_HEADER, TINY_BODY, TINY_CHECK, "add_one")


@pytest.fixture(scope="session")
def io_problem():
    return IO_PROBLEM


@pytest.fixture(scope="session")
def corpus(below_problem, weak_problem, tiny_problem, io_problem):
    problems = [below_problem, weak_problem, tiny_problem, io_problem]
    return {p.problem_id: p for p in problems}


@pytest.fixture(scope="session")
def realistic_instance():
    buggy = first_half(fixture_pairs.REJECTED_OFF_BY_ONE)
    clean = first_half(fixture_pairs.ACCEPTED)
    return BCCInstance(
        instance_id="sum1n:u01:s01a-01b",
        problem_id="sum1n",
        origin="realistic",
        clean_prefix=clean,
        buggy_prefix=buggy,
        bug_line=2,
        split_line=3,
        solution_lines=5,
        edit_descriptor=PairDiff(
            rejected_prefix=buggy,
            accepted_prefix=clean,
            normalized_distance=1,
            rejected_source=fixture_pairs.REJECTED_OFF_BY_ONE,
            accepted_source=fixture_pairs.ACCEPTED,
        ),
    )


@pytest.fixture(scope="session")
def quick_limits():
    return ExecLimits(wall_time_s=5.0)


@pytest.fixture(scope="session")
def real_judge(quick_limits):
    def judge_fn(program, problem):
        return judge(program, problem, limits=quick_limits)

    return judge_fn


def write_fixture(path, data):
    """Write a mock endpoint fixture file and return its path as str."""
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)
