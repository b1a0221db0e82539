"""Operator flips: enumeration order, splice fidelity, split expansion, and
the full synthetic build against the real judge."""
import pytest

from bugcc.core import Verdict
from bugcc.mutator import (
    OPPOSITE_OF,
    OPPOSITE_TABLE,
    apply_flip,
    build_synthetic,
    certify_bug,
    enumerate_flippable_operators,
    expand_splits,
)

SOLUTION = (
    "    balance = 0\n"
    "    for op in operations:\n"
    "        balance += op\n"
    "        if balance < 0:\n"
    "            return True\n"
    "\n"
    "    return False\n"
)


# --- opposite table -----------------------------------------------------------

def test_opposite_table_is_involution():
    for row in OPPOSITE_TABLE:
        assert OPPOSITE_OF[OPPOSITE_OF[row.operator]] == row.operator


def test_opposite_table_excludes_mod_and_floordiv():
    assert "%" not in OPPOSITE_OF
    assert "//" not in OPPOSITE_OF
    assert "%=" not in OPPOSITE_OF
    assert "//=" not in OPPOSITE_OF


def test_opposite_known_rows():
    assert OPPOSITE_OF["+"] == "-"
    assert OPPOSITE_OF["*"] == "/"
    assert OPPOSITE_OF["+="] == "-="
    assert OPPOSITE_OF["=="] == "!="
    assert OPPOSITE_OF["<"] == ">="
    assert OPPOSITE_OF["<="] == ">"
    assert OPPOSITE_OF[">"] == "<="
    assert OPPOSITE_OF[">="] == "<"


# --- enumeration ----------------------------------------------------------------

def test_enumerate_sites_source_order():
    sites = enumerate_flippable_operators(SOLUTION)
    assert [(s.original_op, s.line) for s in sites] == [("+=", 3), ("<", 4)]
    for site in sites:
        lo, hi = site.byte_span
        assert SOLUTION[lo:hi] == site.original_op


def test_enumerate_skips_excluded_operators():
    sites = enumerate_flippable_operators("    x = a % b\n    y = a // b\n")
    assert sites == []


def test_enumerate_mixed_statement():
    text = "    if a == b:\n        c = a + b * 2\n"
    ops = [s.original_op for s in enumerate_flippable_operators(text)]
    assert ops == ["==", "+", "*"]


def test_enumerate_compare_chain():
    ops = [s.original_op for s in enumerate_flippable_operators("    ok = 0 < x <= y\n")]
    assert ops == ["<", "<="]


def test_enumerate_ignores_operators_in_strings():
    sites = enumerate_flippable_operators('    s = "a + b"\n    t = x - 1\n')
    assert [(s.original_op, s.line) for s in sites] == [("-", 2)]


def test_enumerate_unparseable_raises():
    with pytest.raises(ValueError):
        enumerate_flippable_operators(")(\n")


def test_enumerate_module_level_code():
    # io-style solutions have no enclosing function
    ops = [s.original_op for s in enumerate_flippable_operators("n = 1 + 2\nprint(n)\n")]
    assert ops == ["+"]


# --- flips ------------------------------------------------------------------------

def test_apply_flip_splices_only_the_operator():
    sites = enumerate_flippable_operators(SOLUTION)
    mutated = apply_flip(SOLUTION, sites[0])
    assert "balance -= op" in mutated
    assert mutated.replace("-= op", "+= op") == SOLUTION


def test_apply_flip_twice_is_identity():
    for site in enumerate_flippable_operators(SOLUTION):
        once = apply_flip(SOLUTION, site)
        back_sites = enumerate_flippable_operators(once)
        match = [s for s in back_sites if s.byte_span[0] == site.byte_span[0]]
        assert len(match) == 1
        assert apply_flip(once, match[0]) == SOLUTION


def test_apply_flip_width_change():
    text = "    if x < 0:\n        pass\n"
    (site,) = enumerate_flippable_operators(text)
    assert apply_flip(text, site) == "    if x >= 0:\n        pass\n"


def test_certify_bug_uses_judge():
    calls = []

    def judge_fn(program, problem):
        calls.append(program)
        return Verdict(kind="wrong_answer", failed_case=0)

    class Prob:
        judge_mode = "function_check"
        prompt_header = "def f():\n"
        problem_id = "p"

        def full_program(self, solution=None):
            return self.prompt_header + (solution or "")

    assert certify_bug(Prob(), "    return 1\n", judge_fn)
    assert calls == ["def f():\n    return 1\n"]


# --- split expansion ---------------------------------------------------------------

def test_expand_splits_full_range(below_problem):
    sites = enumerate_flippable_operators(SOLUTION)
    mutated = apply_flip(SOLUTION, sites[0])
    instances = expand_splits(below_problem, mutated, SOLUTION, sites[0], site_index=0)
    # site on body line 3, seven body lines: splits 3..6
    assert [inst.instance_id for inst in instances] == [
        "fc/below:site0:i3",
        "fc/below:site0:i4",
        "fc/below:site0:i5",
        "fc/below:site0:i6",
    ]
    for inst in instances:
        assert inst.bug_line == 5          # body line 3 + two header lines
        assert inst.solution_lines == 9
        assert inst.buggy_prefix.startswith(below_problem.prompt_header)
        assert inst.buggy_prefix.endswith("\n")
        assert not inst.buggy_prefix.endswith("\n\n") or inst.instance_id.endswith("i6")
        assert "-=" in inst.buggy_prefix
        assert "-=" not in inst.clean_prefix
    assert [inst.split_line for inst in instances] == [5, 6, 7, 8]


def test_expand_splits_requires_matching_line_counts(below_problem):
    (site, _) = enumerate_flippable_operators(SOLUTION)
    with pytest.raises(ValueError):
        expand_splits(below_problem, "    x = 1\n", SOLUTION, site)


# --- full build ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def synthetic_build(below_problem, weak_problem, tiny_problem, real_judge):
    report = {}
    instances = build_synthetic(
        [below_problem, weak_problem, tiny_problem], real_judge, jobs=2, report_out=report
    )
    return instances, report


def test_build_synthetic_counts(synthetic_build):
    instances, report = synthetic_build
    assert report["per_problem_counts"] == {"fc/below": 5, "fc/weak": 0, "fc/tiny": 1}
    assert report["instances_total"] == 6
    assert report["problems_total"] == 3
    assert report["problems_with_instances"] == 2
    assert len(instances) == 6


def test_build_synthetic_drops_blank_final_line(synthetic_build):
    instances, _ = synthetic_build
    ids = [inst.instance_id for inst in instances if inst.problem_id == "fc/below"]
    # split i6 would end on the blank body line and must be gone
    assert ids == [
        "fc/below:site0:i3",
        "fc/below:site0:i4",
        "fc/below:site0:i5",
        "fc/below:site1:i4",
        "fc/below:site1:i5",
    ]
    for inst in instances:
        final_line = inst.buggy_prefix.splitlines()[-1]
        assert final_line.strip()


def test_build_synthetic_reports_surviving_flips(synthetic_build):
    _, report = synthetic_build
    survivors = {(pid, op) for pid, _, op, _ in report["still_passing_sites"]}
    assert survivors == {("fc/weak", "+="), ("fc/weak", "*")}


def test_build_synthetic_certifies_every_instance(synthetic_build, corpus, real_judge):
    instances, _ = synthetic_build
    for inst in instances:
        problem = corpus[inst.problem_id]
        header = problem.prompt_header
        assert inst.buggy_prefix.startswith(header)
        assert inst.clean_prefix.startswith(header)
        site = inst.edit_descriptor
        flipped = inst.buggy_prefix.count(site.flipped_op)
        assert flipped >= 1


def test_build_synthetic_rejects_failing_reference(real_judge, tiny_problem):
    from dataclasses import replace

    broken = replace(tiny_problem, problem_id="fc/broken", reference_solution="    return x\n")
    report = {}
    instances = build_synthetic([broken], real_judge, report_out=report)
    assert instances == []
    assert report["reference_failures"] == ["fc/broken"]
