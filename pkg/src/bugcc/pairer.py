"""Realistic bCC construction from submission streaks.

A streak is one user's chronological run of submissions to one problem, cut at
the first accepted submission. The last prior submission that failed for a
reason other than compilation or runtime error is paired with the accepted
one; the first halves of the pair become buggy and clean prefixes. Pairs pass
through an exit-call screen, execution certification, an edit-distance window,
and a four-case classification before becoming instances.
"""
from __future__ import annotations

import ast
import builtins
import io
import logging
import tokenize
from dataclasses import dataclass, field
from keyword import iskeyword
from typing import Callable, Iterable, Mapping, Sequence

from .core import (
    BCCInstance,
    PairDiff,
    Problem,
    Verdict,
    ceil_div,
    parse_prefix_ast,
)

logger = logging.getLogger(__name__)

JudgeFn = Callable[[str, Problem], Verdict]

# Verdicts that disqualify a submission from serving as the rejected half.
# Compilation errors are not a completable code state and runtime errors are
# dominated by environment mismatches rather than algorithmic bugs.
NON_QUALIFYING_VERDICTS = frozenset({"accepted", "compilation error", "runtime error"})

KNOWN_REJECTED_VERDICTS = frozenset(
    {
        "wrong answer",
        "time limit exceeded",
        "memory limit exceeded",
        "output limit exceeded",
        "idleness limit exceeded",
    }
)

CASE_TRIVIALLY_COMPLETE = "trivially_complete_clean"
CASE_EQUIVALENT = "equivalent_suspect"
CASE_NO_FLOW_NO_OUTPUT = "no_control_flow_no_output"
CASE_EARLY_WRONG_OUTPUT = "early_wrong_output_suspect"

_CONTROL_FLOW_NODES = tuple(
    node
    for node in (
        ast.If,
        ast.For,
        ast.While,
        ast.AsyncFor,
        ast.Try,
        getattr(ast, "TryStar", None),
        getattr(ast, "Match", None),
    )
    if node is not None
)


@dataclass(frozen=True)
class Submission:
    submission_id: str
    user_id: str
    problem_id: str
    timestamp: int
    verdict: str
    source: str

    @property
    def normalized_verdict(self) -> str:
        return self.verdict.strip().lower()


@dataclass
class PairReport:
    pairs_total: int = 0
    excluded_exit_screen: int = 0
    excluded_accepted_fails: int = 0
    excluded_rejected_passes: int = 0
    excluded_distance_below: int = 0
    excluded_distance_above: int = 0
    excluded_trivially_complete_clean: int = 0
    excluded_no_control_flow_no_output: int = 0
    review_equivalent_suspect: int = 0
    kept_early_wrong_output_suspect: int = 0
    kept_total: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def group_streaks(submissions: Iterable[Submission]) -> list[list[Submission]]:
    """Chronological per-(user, problem) runs ending at the first accepted.

    Runs that never reach an accepted submission are dropped. Within a run,
    submissions after the first accepted one are ignored.
    """
    grouped: dict[tuple[str, str], list[Submission]] = {}
    for sub in submissions:
        grouped.setdefault((sub.user_id, sub.problem_id), []).append(sub)
    streaks = []
    for key in sorted(grouped):
        run = sorted(grouped[key], key=lambda s: (s.timestamp, s.submission_id))
        for idx, sub in enumerate(run):
            if sub.normalized_verdict == "accepted":
                streaks.append(run[: idx + 1])
                break
    return streaks


def select_submission_pairs(
    streaks: Iterable[Sequence[Submission]],
) -> list[tuple[Submission, Submission]]:
    """(rejected, accepted) per streak: the accepted tail paired with the last
    prior submission whose verdict qualifies. Streaks with no qualifying prior
    submission yield nothing. Verdict strings outside the known vocabulary
    qualify, with a log line so corpus quirks stay visible."""
    pairs = []
    for streak in streaks:
        accepted = streak[-1]
        for candidate in reversed(streak[:-1]):
            verdict = candidate.normalized_verdict
            if verdict in NON_QUALIFYING_VERDICTS:
                continue
            if verdict not in KNOWN_REJECTED_VERDICTS:
                logger.info(
                    "submission %s: unmapped verdict %r treated as rejected",
                    candidate.submission_id,
                    candidate.verdict,
                )
            pairs.append((candidate, accepted))
            break
    return pairs


def first_half(source: str) -> str:
    """The first ceil(L/2) physical lines, newline-terminated."""
    lines = source.splitlines()
    if not lines:
        return ""
    return "\n".join(lines[: ceil_div(len(lines), 2)]) + "\n"


def _comment_spans(text: str) -> list[tuple[int, int]]:
    starts = [0]
    for i, ch in enumerate(text):
        if ch == "\n":
            starts.append(i + 1)
    spans = []
    try:
        for tok in tokenize.generate_tokens(io.StringIO(text).readline):
            if tok.type == tokenize.COMMENT:
                spans.append(
                    (starts[tok.start[0] - 1] + tok.start[1], starts[tok.end[0] - 1] + tok.end[1])
                )
    except (tokenize.TokenError, IndentationError, SyntaxError):
        pass  # keep whatever was harvested before the bad tail
    return spans


def normalize_source(text: str) -> str:
    """Comments stripped (best effort on unlexable text), then every
    whitespace character removed."""
    for start, end in reversed(_comment_spans(text)):
        text = text[:start] + text[end:]
    return "".join(text.split())


def levenshtein(a: str, b: str, upper_bound: int | None = None) -> int:
    """Edit distance with unit costs. With upper_bound set, any distance
    above it is reported as upper_bound + 1 and work stops early."""
    if upper_bound is not None and abs(len(a) - len(b)) > upper_bound:
        return upper_bound + 1
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(
                min(
                    previous[j] + 1,
                    current[j - 1] + 1,
                    previous[j - 1] + (ca != cb),
                )
            )
        if upper_bound is not None and min(current) > upper_bound:
            return upper_bound + 1
        previous = current
    return previous[-1]


def prefix_edit_distance(
    rejected_source: str, accepted_source: str, upper_bound: int | None = None
) -> int:
    """Distance between the normalized first halves of two submissions."""
    return levenshtein(
        normalize_source(first_half(rejected_source)),
        normalize_source(first_half(accepted_source)),
        upper_bound=upper_bound,
    )


def first_line_difference(buggy: str, clean: str) -> int:
    """1-based index of the first physical line whose content differs once
    comments and all whitespace are stripped. A line missing on one side is
    treated the same as a blank line. Returns the shared line count + 1 when
    no line differs."""
    buggy_lines = buggy.splitlines()
    clean_lines = clean.splitlines()
    for idx in range(max(len(buggy_lines), len(clean_lines))):
        left = normalize_source(buggy_lines[idx]) if idx < len(buggy_lines) else ""
        right = normalize_source(clean_lines[idx]) if idx < len(clean_lines) else ""
        if left != right:
            return idx + 1
    return max(len(buggy_lines), len(clean_lines)) + 1


_FIXED_NAMES = frozenset(dir(builtins))


def _rename_equivalent(a: str, b: str) -> bool:
    """True when the two texts lex to identical token streams up to a
    bijective renaming of names, keywords and builtins held fixed."""

    def stream(text: str) -> list[tuple[int, str]] | None:
        skip = {
            tokenize.COMMENT,
            tokenize.NL,
            tokenize.NEWLINE,
            tokenize.INDENT,
            tokenize.DEDENT,
            tokenize.ENCODING,
            tokenize.ENDMARKER,
        }
        out = []
        try:
            for tok in tokenize.generate_tokens(io.StringIO(text).readline):
                if tok.type not in skip:
                    out.append((tok.type, tok.string))
        except (tokenize.TokenError, IndentationError, SyntaxError):
            return None
        return out

    left, right = stream(a), stream(b)
    if left is None or right is None or len(left) != len(right):
        return False
    forward: dict[str, str] = {}
    backward: dict[str, str] = {}
    for (ltype, ltext), (rtype, rtext) in zip(left, right):
        if ltype != rtype:
            return False
        fixed = iskeyword(ltext) or iskeyword(rtext) or ltext in _FIXED_NAMES or rtext in _FIXED_NAMES
        if ltype == tokenize.NAME and not fixed:
            if forward.setdefault(ltext, rtext) != rtext:
                return False
            if backward.setdefault(rtext, ltext) != ltext:
                return False
        elif ltext != rtext:
            return False
    return True


def _is_output_call(node: ast.AST) -> bool:
    if not isinstance(node, ast.Call):
        return False
    func = node.func
    if isinstance(func, ast.Name):
        return func.id == "print"
    if isinstance(func, ast.Attribute) and func.attr in {"write", "writelines"}:
        value = func.value
        if isinstance(value, ast.Name) and value.id in {"stdout", "stderr"}:
            return True
        if isinstance(value, ast.Name) and value.id == "os" and func.attr == "write":
            return True
        if (
            isinstance(value, ast.Attribute)
            and value.attr in {"stdout", "stderr"}
            and isinstance(value.value, ast.Name)
            and value.value.id == "sys"
        ):
            return True
    return False


def _has_exit_call(source: str) -> bool:
    """Screens submissions that terminate through the interpreter instead of
    finishing normally; those game verdict semantics and never pair well."""
    tree = parse_prefix_ast(source)
    if tree is None:
        needles = ("sys.exit", "os._exit", "os.system", "os.popen", "os.exec", "subprocess.")
        return any(needle in source for needle in needles)
    for node in ast.walk(tree):
        if not isinstance(node, ast.Call):
            continue
        func = node.func
        if isinstance(func, ast.Name) and func.id in {"exit", "quit"}:
            return True
        if isinstance(func, ast.Attribute) and isinstance(func.value, ast.Name):
            owner, attr = func.value.id, func.attr
            if (owner, attr) in {("sys", "exit"), ("os", "_exit"), ("os", "abort")}:
                return True
            if owner == "os" and (attr in {"system", "popen"} or attr.startswith("exec")):
                return True
            if owner == "subprocess":
                return True
    return False


def _guarded_output_dumps(tree: ast.AST) -> set[str]:
    """Dumps of the test expressions of if-statements whose bodies write
    output."""
    dumps = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.If):
            for child in ast.walk(ast.Module(body=node.body + node.orelse, type_ignores=[])):
                if _is_output_call(child):
                    dumps.add(ast.dump(node.test))
                    break
    return dumps


def _all_guard_dumps(tree: ast.AST) -> set[str]:
    return {ast.dump(node.test) for node in ast.walk(tree) if isinstance(node, ast.If)}


def classify_pair(
    rejected_source: str,
    accepted_source: str,
    problem: Problem,
    judge_fn: JudgeFn,
) -> tuple[str, str | None]:
    """(action, case) for a certified, distance-windowed pair.

    action is "keep", "exclude", or "review"; case names which heuristic
    fired, or None for a plain keep.
    """
    rejected_half = first_half(rejected_source)
    accepted_half = first_half(accepted_source)

    # A clean prefix that is already a passing program leaves nothing to
    # complete: the pair is trivial.
    if judge_fn(accepted_half, problem).kind == "accepted":
        return "exclude", CASE_TRIVIALLY_COMPLETE

    if _rename_equivalent(rejected_half, accepted_half):
        return "review", CASE_EQUIVALENT

    rejected_tree = parse_prefix_ast(rejected_half)
    if rejected_tree is not None:
        has_flow = any(
            isinstance(node, _CONTROL_FLOW_NODES) for node in ast.walk(rejected_tree)
        )
        has_output = any(_is_output_call(node) for node in ast.walk(rejected_tree))
        if not has_flow and not has_output:
            return "exclude", CASE_NO_FLOW_NO_OUTPUT

        accepted_tree = parse_prefix_ast(accepted_half)
        accepted_guards = _all_guard_dumps(accepted_tree) if accepted_tree else set()
        if _guarded_output_dumps(rejected_tree) - accepted_guards:
            return "keep", CASE_EARLY_WRONG_OUTPUT

    return "keep", None


def _pair_to_instance(
    rejected: Submission,
    accepted: Submission,
    problem: Problem,
    distance: int,
    flags: list[str],
) -> BCCInstance:
    buggy_prefix = first_half(rejected.source)
    clean_prefix = first_half(accepted.source)
    diff = PairDiff(
        rejected_prefix=buggy_prefix,
        accepted_prefix=clean_prefix,
        normalized_distance=distance,
        auto_flags=tuple(flags),
        rejected_source=rejected.source,
        accepted_source=accepted.source,
    )
    return BCCInstance(
        instance_id=(
            f"{problem.problem_id}:u{rejected.user_id}"
            f":s{rejected.submission_id}-{accepted.submission_id}"
        ),
        problem_id=problem.problem_id,
        origin="realistic",
        clean_prefix=clean_prefix,
        buggy_prefix=buggy_prefix,
        bug_line=first_line_difference(buggy_prefix, clean_prefix),
        split_line=len(buggy_prefix.splitlines()),
        solution_lines=len(accepted.source.splitlines()),
        edit_descriptor=diff,
    )


def build_realistic(
    submissions: Iterable[Submission],
    corpus: Sequence[Problem],
    judge_fn: JudgeFn,
    min_dist: int = 1,
    max_dist: int = 20,
    report_out: dict | None = None,
) -> tuple[list[BCCInstance], list[BCCInstance]]:
    """(kept_instances, review_instances) from a submission corpus.

    Pairs flow through, in order: an exit-call screen over both full sources,
    execution certification (the rejected program must fail, the accepted one
    must pass), the normalized-distance window [min_dist, max_dist], and the
    four-case classification. Review instances carry the equivalent_suspect
    flag and are returned separately for human triage rather than silently
    kept or dropped.
    """
    problems: Mapping[str, Problem] = {p.problem_id: p for p in corpus}
    report = PairReport()
    kept: list[BCCInstance] = []
    review: list[BCCInstance] = []

    for rejected, accepted in select_submission_pairs(group_streaks(submissions)):
        problem = problems.get(rejected.problem_id)
        if problem is None:
            logger.warning(
                "pair %s/%s references unknown problem %s; skipped",
                rejected.submission_id,
                accepted.submission_id,
                rejected.problem_id,
            )
            continue
        report.pairs_total += 1

        if _has_exit_call(rejected.source) or _has_exit_call(accepted.source):
            report.excluded_exit_screen += 1
            continue

        if judge_fn(accepted.source, problem).kind != "accepted":
            report.excluded_accepted_fails += 1
            continue
        if judge_fn(rejected.source, problem).kind == "accepted":
            report.excluded_rejected_passes += 1
            continue

        distance = prefix_edit_distance(
            rejected.source, accepted.source, upper_bound=max_dist
        )
        if distance < min_dist:
            report.excluded_distance_below += 1
            continue
        if distance > max_dist:
            report.excluded_distance_above += 1
            continue

        action, case = classify_pair(rejected.source, accepted.source, problem, judge_fn)
        if action == "exclude":
            if case == CASE_TRIVIALLY_COMPLETE:
                report.excluded_trivially_complete_clean += 1
            else:
                report.excluded_no_control_flow_no_output += 1
            continue

        flags = [case] if case else []
        instance = _pair_to_instance(rejected, accepted, problem, distance, flags)
        if action == "review":
            report.review_equivalent_suspect += 1
            review.append(instance)
        else:
            if case == CASE_EARLY_WRONG_OUTPUT:
                report.kept_early_wrong_output_suspect += 1
            kept.append(instance)

    report.kept_total = len(kept)
    if report_out is not None:
        report_out.update(report.as_dict())
    return kept, review
