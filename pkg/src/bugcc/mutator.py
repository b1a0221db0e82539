"""Synthetic bCC construction: semantic-opposite operator flips.

A reference solution is scanned for occurrences of the operators in the
opposite table (a full parse plus tokenization, so occurrences inside strings
and comments are never touched). Each occurrence is flipped, the flipped
program is certified as buggy by actually failing at least one test, and every
certified flip is expanded into one instance per split point at or after the
flipped line.
"""
from __future__ import annotations

import ast
import io
import logging
import tokenize
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

from .core import (
    BCCInstance,
    MutationSite,
    Problem,
    Verdict,
    instance_line_from_body,
)

logger = logging.getLogger(__name__)

JudgeFn = Callable[[str, Problem], Verdict]


@dataclass(frozen=True)
class OppositeRow:
    operator: str
    opposite: str
    syntactic_class: str


# The 14 operator rows eligible for flipping. Arithmetic and augmented rows
# are mutual opposites; comparison rows pair each operator with its logical
# negation. % and // (and their augmented forms) are excluded as ambiguous:
# they have no single semantic opposite.
OPPOSITE_TABLE: tuple[OppositeRow, ...] = (
    OppositeRow("+", "-", "binary"),
    OppositeRow("-", "+", "binary"),
    OppositeRow("*", "/", "binary"),
    OppositeRow("/", "*", "binary"),
    OppositeRow("+=", "-=", "augmented_assign"),
    OppositeRow("-=", "+=", "augmented_assign"),
    OppositeRow("*=", "/=", "augmented_assign"),
    OppositeRow("/=", "*=", "augmented_assign"),
    OppositeRow("==", "!=", "comparison"),
    OppositeRow("!=", "==", "comparison"),
    OppositeRow("<", ">=", "comparison"),
    OppositeRow("<=", ">", "comparison"),
    OppositeRow(">", "<=", "comparison"),
    OppositeRow(">=", "<", "comparison"),
)

OPPOSITE_OF = {row.operator: row.opposite for row in OPPOSITE_TABLE}

_BINOP_SYMBOLS = {ast.Add: "+", ast.Sub: "-", ast.Mult: "*", ast.Div: "/"}
_COMPARE_SYMBOLS = {
    ast.Eq: "==",
    ast.NotEq: "!=",
    ast.Lt: "<",
    ast.LtE: "<=",
    ast.Gt: ">",
    ast.GtE: ">=",
}

_WRAPPER = "if True:\n"


def _parse_with_wrapper(solution: str) -> tuple[ast.Module, str, int, int]:
    """Parse a solution that may be an indented function body.

    Returns (tree, parsed_text, line_shift, offset_shift) where shifts map
    positions in parsed_text back to the original solution text.
    """
    try:
        return ast.parse(solution), solution, 0, 0
    except SyntaxError:
        pass
    wrapped = _WRAPPER + solution
    try:
        return ast.parse(wrapped), wrapped, 1, len(_WRAPPER)
    except SyntaxError as exc:
        raise ValueError(f"solution does not parse: {exc}") from exc


def _line_starts(text: str) -> list[int]:
    starts = [0]
    for i, ch in enumerate(text):
        if ch == "\n":
            starts.append(i + 1)
    return starts


def _op_tokens(text: str) -> list[tuple[tuple[int, int], tuple[int, int], str]]:
    """All operator tokens of the text as (start, end, string), where start
    and end are (row, col). Tokenization stops quietly at a bad tail; for a
    parseable solution it covers everything."""
    out = []
    try:
        for tok in tokenize.generate_tokens(io.StringIO(text).readline):
            if tok.type == tokenize.OP:
                out.append((tok.start, tok.end, tok.string))
    except (tokenize.TokenError, IndentationError, SyntaxError):  # pragma: no cover
        logger.debug("tokenizer stopped early on parseable text")
    return out


def enumerate_flippable_operators(solution: str) -> list[MutationSite]:
    """All table-operator occurrences in a solution, in source order.

    Sites carry character spans into the solution text and 1-based solution
    line numbers. Occurrences inside string literals and comments never
    tokenize as operators, so they are structurally excluded.
    """
    tree, parsed, line_shift, offset_shift = _parse_with_wrapper(solution)
    tokens = _op_tokens(parsed)
    starts = _line_starts(parsed)

    def to_offset(pos: tuple[int, int]) -> int:
        row, col = pos
        return starts[row - 1] + col

    def find_op(symbol: str, lo: tuple[int, int], hi: tuple[int, int]) -> tuple[int, int] | None:
        for tok_start, tok_end, text in tokens:
            if lo <= tok_start and tok_end <= hi and text == symbol:
                return to_offset(tok_start), to_offset(tok_end)
        return None

    sites = []

    def emit(symbol: str, lo: tuple[int, int], hi: tuple[int, int]) -> None:
        if symbol not in OPPOSITE_OF:
            return
        span = find_op(symbol, lo, hi)
        if span is None:  # pragma: no cover - span bookkeeping guard
            raise ValueError(f"operator {symbol!r} not found between {lo} and {hi}")
        start, end = span[0] - offset_shift, span[1] - offset_shift
        line = parsed.count("\n", 0, span[0]) + 1 - line_shift
        sites.append(
            MutationSite(
                byte_span=(start, end),
                original_op=symbol,
                flipped_op=OPPOSITE_OF[symbol],
                line=line,
            )
        )

    for node in ast.walk(tree):
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOP_SYMBOLS:
            emit(
                _BINOP_SYMBOLS[type(node.op)],
                (node.left.end_lineno, node.left.end_col_offset),
                (node.right.lineno, node.right.col_offset),
            )
        elif isinstance(node, ast.AugAssign) and type(node.op) in _BINOP_SYMBOLS:
            emit(
                _BINOP_SYMBOLS[type(node.op)] + "=",
                (node.target.end_lineno, node.target.end_col_offset),
                (node.value.lineno, node.value.col_offset),
            )
        elif isinstance(node, ast.Compare):
            prev = node.left
            for op, comparator in zip(node.ops, node.comparators):
                if type(op) in _COMPARE_SYMBOLS:
                    emit(
                        _COMPARE_SYMBOLS[type(op)],
                        (prev.end_lineno, prev.end_col_offset),
                        (comparator.lineno, comparator.col_offset),
                    )
                prev = comparator

    sites.sort(key=lambda s: s.byte_span)
    return sites


def apply_flip(solution: str, site: MutationSite) -> str:
    """Replace the site's operator with its opposite; the rest is untouched."""
    start, end = site.byte_span
    found = solution[start:end]
    if found != site.original_op:
        raise ValueError(
            f"span {site.byte_span} holds {found!r}, expected {site.original_op!r}"
        )
    mutated = solution[:start] + site.flipped_op + solution[end:]
    if mutated == solution:  # pragma: no cover - impossible by table construction
        raise ValueError("flip produced identical text")
    try:
        _parse_with_wrapper(mutated)
    except ValueError as exc:  # pragma: no cover - span bookkeeping guard
        raise ValueError(f"flip broke the parse: {exc}") from exc
    return mutated


def certify_bug(problem: Problem, mutated_solution: str, judge_fn: JudgeFn) -> bool:
    """True iff the full mutated program fails at least one test."""
    verdict = judge_fn(problem.full_program(mutated_solution), problem)
    return verdict.kind != "accepted"


def expand_splits(
    problem: Problem,
    mutated_solution: str,
    clean_solution: str,
    site: MutationSite,
    site_index: int = 0,
) -> list[BCCInstance]:
    """One instance per split index i in [site.line, L).

    Prefixes are the prompt header plus the first i solution lines, ending in
    exactly one newline. Stored line fields are rebased to the instance
    coordinate (counted from the function header line).
    """
    mutated_lines = mutated_solution.splitlines()
    clean_lines = clean_solution.splitlines()
    if len(mutated_lines) != len(clean_lines):
        raise ValueError("mutated and clean solutions must have equal line counts")
    total = len(mutated_lines)
    base = problem.prompt_header if problem.judge_mode == "function_check" else ""
    instances = []
    for i in range(site.line, total):
        buggy_prefix = base + "\n".join(mutated_lines[:i]) + "\n"
        clean_prefix = base + "\n".join(clean_lines[:i]) + "\n"
        instances.append(
            BCCInstance(
                instance_id=f"{problem.problem_id}:site{site_index}:i{i}",
                problem_id=problem.problem_id,
                origin="synthetic",
                clean_prefix=clean_prefix,
                buggy_prefix=buggy_prefix,
                bug_line=instance_line_from_body(problem, site.line),
                split_line=instance_line_from_body(problem, i),
                solution_lines=instance_line_from_body(problem, total),
                edit_descriptor=site,
            )
        )
    return instances


def build_synthetic(
    corpus: Sequence[Problem],
    judge_fn: JudgeFn,
    jobs: int = 1,
    report_out: dict | None = None,
) -> list[BCCInstance]:
    """Build the full synthetic instance set for a problem corpus.

    Per problem: verify the reference passes, enumerate sites in source order,
    flip and certify each site concurrently, then expand certified flips into
    split instances. Splits whose prefix would end on a blank line are dropped:
    such a prefix is code-identical to the previous split and would only add
    duplicates. Output order and instance ids are deterministic.
    """
    report = {
        "problems_total": len(corpus),
        "problems_with_instances": 0,
        "instances_total": 0,
        "per_problem_counts": {},
        "still_passing_sites": [],
        "reference_failures": [],
        "unparseable_solutions": [],
    }

    def certify(job: tuple[Problem, int, MutationSite, str]) -> bool:
        problem, _, _, mutated = job
        return certify_bug(problem, mutated, judge_fn)

    # Reference certification first: a problem whose reference fails its own
    # tests cannot anchor clean prefixes and is skipped with a log line.
    def reference_ok(problem: Problem) -> bool:
        return judge_fn(problem.full_program(), problem).kind == "accepted"

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        ok_flags = list(pool.map(reference_ok, corpus))

    flip_jobs: list[tuple[Problem, int, MutationSite, str]] = []
    for problem, ok in zip(corpus, ok_flags):
        report["per_problem_counts"][problem.problem_id] = 0
        if not ok:
            logger.warning("%s: reference solution fails its tests; skipped", problem.problem_id)
            report["reference_failures"].append(problem.problem_id)
            continue
        try:
            sites = enumerate_flippable_operators(problem.reference_solution)
        except ValueError as exc:
            logger.warning("%s: %s; skipped", problem.problem_id, exc)
            report["unparseable_solutions"].append(problem.problem_id)
            continue
        for site_index, site in enumerate(sites):
            mutated = apply_flip(problem.reference_solution, site)
            flip_jobs.append((problem, site_index, site, mutated))

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        certified = list(pool.map(certify, flip_jobs))

    instances: list[BCCInstance] = []
    for (problem, site_index, site, mutated), is_bug in zip(flip_jobs, certified):
        if not is_bug:
            logger.info(
                "%s: flip %s->%s at line %d still passes all tests; excluded",
                problem.problem_id, site.original_op, site.flipped_op, site.line,
            )
            report["still_passing_sites"].append(
                (problem.problem_id, site_index, site.original_op, site.line)
            )
            continue
        clean_lines = problem.reference_solution.splitlines()
        for instance in expand_splits(
            problem, mutated, problem.reference_solution, site, site_index
        ):
            split_body_line = instance.split_line - (
                instance.solution_lines - len(clean_lines)
            )
            if not clean_lines[split_body_line - 1].strip():
                continue
            instances.append(instance)
            report["per_problem_counts"][problem.problem_id] += 1

    report["instances_total"] = len(instances)
    report["problems_with_instances"] = sum(
        1 for n in report["per_problem_counts"].values() if n
    )
    if report_out is not None:
        report_out.update(report)
    return instances
