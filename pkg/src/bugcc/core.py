"""Shared data model and canonical on-disk dataset formats.

Every other module builds on the types here: problems, benchmark instances,
completion samples, verdicts, and evaluation records, plus JSONL readers and
writers that validate records on the way in and serialize deterministically on
the way out.

Line-number convention used throughout: instance line fields (bug_line,
split_line, solution_lines) are 1-based and counted from the line containing
the function header for function_check problems (imports above the header do
not count, docstring lines after it do), and from the first code line for
io_pairs problems. Helpers at the bottom convert between this convention and
solution-body-relative lines.
"""
from __future__ import annotations

import ast
import codeop
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Union

logger = logging.getLogger(__name__)

JUDGE_MODES = ("function_check", "io_pairs")
VERDICT_KINDS = (
    "accepted",
    "wrong_answer",
    "time_limit_exceeded",
    "runtime_error",
    "syntax_error",
)
VARIANTS = ("buggy", "clean")
ORIGINS = ("synthetic", "realistic")
PIPELINES = ("naive", "removal", "rewrite_then_complete", "complete_then_rewrite")


class DatasetError(ValueError):
    """A dataset record failed validation or parsing."""


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TestSuite:
    """Tests for one problem.

    function_check problems carry a check_program (assertion script defining
    check(candidate)) plus the entry point name; io_pairs problems carry
    (stdin, expected_stdout) cases. time_limit_s/memory_limit_bytes override
    the runner defaults when set.
    """

    __test__ = False  # not a pytest class despite the name

    check_program: str | None = None
    entry_point: str | None = None
    cases: tuple[tuple[str, str], ...] = ()
    time_limit_s: float | None = None
    memory_limit_bytes: int | None = None

    def validate(self, judge_mode: str) -> None:
        if judge_mode == "function_check":
            if not self.check_program or not self.entry_point:
                raise DatasetError(
                    "function_check suite needs check_program and entry_point"
                )
        elif judge_mode == "io_pairs":
            if len(self.cases) < 1:
                raise DatasetError("io_pairs suite needs at least one case")
        else:
            raise DatasetError(f"unknown judge_mode {judge_mode!r}")
        if self.time_limit_s is not None and self.time_limit_s <= 0:
            raise DatasetError("time_limit_s must be positive")
        if self.memory_limit_bytes is not None and self.memory_limit_bytes <= 0:
            raise DatasetError("memory_limit_bytes must be positive")


@dataclass(frozen=True)
class Problem:
    problem_id: str
    statement: str
    judge_mode: str
    prompt_header: str
    tests: TestSuite
    reference_solution: str
    subject_language: str = "python3"

    def validate(self) -> None:
        if not self.problem_id:
            raise DatasetError("problem_id must be non-empty")
        if not self.statement:
            raise DatasetError(f"{self.problem_id}: statement must be non-empty")
        if self.judge_mode not in JUDGE_MODES:
            raise DatasetError(f"{self.problem_id}: bad judge_mode {self.judge_mode!r}")
        self.tests.validate(self.judge_mode)

    def full_program(self, solution: str | None = None) -> str:
        """Assemble a complete runnable program from a solution body."""
        body = self.reference_solution if solution is None else solution
        if self.judge_mode == "function_check":
            return self.prompt_header + body
        return body


@dataclass(frozen=True)
class MutationSite:
    """One operator-flip location inside a reference solution.

    byte_span indexes into the solution body text; line is 1-based within the
    body (not the rebased instance coordinate).
    """

    byte_span: tuple[int, int]
    original_op: str
    flipped_op: str
    line: int

    def validate(self) -> None:
        start, end = self.byte_span
        if not (0 <= start < end):
            raise DatasetError(f"bad byte_span {self.byte_span}")
        if self.line < 1:
            raise DatasetError("site line must be 1-based")


@dataclass(frozen=True)
class PairDiff:
    """Metadata for a realistic rejected/accepted prefix pair.

    The full submission sources are kept so instances can be re-certified by
    execution later (bugcc validate) without the original submissions file.
    """

    rejected_prefix: str
    accepted_prefix: str
    normalized_distance: int
    auto_flags: tuple[str, ...] = ()
    rejected_source: str = ""
    accepted_source: str = ""

    def validate(self) -> None:
        if self.normalized_distance < 0:
            raise DatasetError("normalized_distance must be >= 0")


EditDescriptor = Union[MutationSite, PairDiff, None]


@dataclass(frozen=True)
class BCCInstance:
    instance_id: str
    problem_id: str
    origin: str
    clean_prefix: str
    buggy_prefix: str
    bug_line: int
    split_line: int
    solution_lines: int
    edit_descriptor: EditDescriptor = None

    def validate(self) -> None:
        if not self.instance_id:
            raise DatasetError("instance_id must be non-empty")
        if self.origin not in ORIGINS:
            raise DatasetError(f"{self.instance_id}: bad origin {self.origin!r}")
        if min(self.bug_line, self.split_line, self.solution_lines) < 1:
            raise DatasetError(f"{self.instance_id}: line fields must be 1-based")
        if self.origin == "synthetic":
            if not (self.bug_line <= self.split_line < self.solution_lines):
                raise DatasetError(
                    f"{self.instance_id}: need bug_line <= split_line < "
                    f"solution_lines, got {self.bug_line}/{self.split_line}"
                    f"/{self.solution_lines}"
                )
        if prefix_state(self.buggy_prefix) == "invalid":
            raise DatasetError(f"{self.instance_id}: buggy_prefix has a syntax error")
        if self.clean_prefix == self.buggy_prefix:
            raise DatasetError(f"{self.instance_id}: clean and buggy prefixes equal")
        if isinstance(self.edit_descriptor, (MutationSite, PairDiff)):
            self.edit_descriptor.validate()


@dataclass(frozen=True)
class SamplingConfig:
    n: int
    temperature: float
    top_p: float
    max_new_tokens: int
    seed: int

    def validate(self) -> None:
        if self.n < 1:
            raise DatasetError("sampling n must be >= 1")
        if self.temperature < 0:
            raise DatasetError("temperature must be >= 0")
        if not (0 < self.top_p <= 1):
            raise DatasetError("top_p must be in (0, 1]")
        if self.max_new_tokens < 1:
            raise DatasetError("max_new_tokens must be >= 1")


@dataclass(frozen=True)
class CompletionSample:
    instance_id: str
    variant: str
    pipeline: str
    raw_text: str
    program: str
    sample_index: int
    sampling: SamplingConfig
    metadata: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise DatasetError(f"bad variant {self.variant!r}")
        if self.pipeline not in PIPELINES:
            raise DatasetError(f"bad pipeline {self.pipeline!r}")
        if self.sample_index < 0:
            raise DatasetError("sample_index must be >= 0")
        self.sampling.validate()


@dataclass(frozen=True)
class Verdict:
    kind: str
    failed_case: int | None = None
    detail: str = ""

    def validate(self) -> None:
        if self.kind not in VERDICT_KINDS:
            raise DatasetError(f"bad verdict kind {self.kind!r}")

    @property
    def passed(self) -> bool:
        return self.kind == "accepted"


@dataclass(frozen=True)
class EvaluationRecord:
    instance_id: str
    pipeline: str
    variant: str
    n: int
    num_passing: int
    pass_at_k: dict[int, float]

    def validate(self) -> None:
        if self.pipeline not in PIPELINES:
            raise DatasetError(f"bad pipeline {self.pipeline!r}")
        if self.variant not in VARIANTS:
            raise DatasetError(f"bad variant {self.variant!r}")
        if not (0 <= self.num_passing <= self.n):
            raise DatasetError(
                f"{self.instance_id}: need 0 <= num_passing <= n, got "
                f"{self.num_passing}/{self.n}"
            )
        prev = 0.0
        for k in sorted(self.pass_at_k):
            v = self.pass_at_k[k]
            if not (0.0 <= v <= 1.0):
                raise DatasetError(f"{self.instance_id}: pass@{k}={v} outside [0,1]")
            if v < prev - 1e-12:
                raise DatasetError(f"{self.instance_id}: pass_at_k not monotone in k")
            prev = v


# ---------------------------------------------------------------------------
# prefix validity
# ---------------------------------------------------------------------------


def prefix_state(src: str) -> str:
    """Classify a (possibly unfinished) program prefix.

    Returns "complete" when the text compiles as-is, "incomplete" when it is a
    syntactically valid prefix that merely stops early (open block, unbalanced
    bracket, unterminated triple-quoted string), and "invalid" when no
    continuation can repair it.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            code = codeop.compile_command(src, "<prefix>", "exec")
        except (SyntaxError, ValueError, OverflowError):
            return "invalid"
    return "complete" if code is not None else "incomplete"


def parse_prefix_ast(src: str) -> ast.Module | None:
    """Best-effort AST for a truncated prefix.

    Tries the text as-is, then with a trailing indented block closed by
    ``pass``, then with trailing lines dropped one at a time. Returns None
    when nothing parses; callers treat that as "no structural information".
    """
    attempts = [src]
    stripped = src.rstrip("\n")
    if stripped.endswith(":"):
        indent = len(stripped.splitlines()[-1]) - len(stripped.splitlines()[-1].lstrip())
        attempts.append(stripped + "\n" + " " * (indent + 4) + "pass\n")
    lines = src.splitlines()
    for cut in range(len(lines) - 1, 0, -1):
        attempts.append("\n".join(lines[:cut]) + "\n")
    for text in attempts:
        try:
            return ast.parse(text)
        except SyntaxError:
            continue
    return None


# ---------------------------------------------------------------------------
# line coordinate helpers
# ---------------------------------------------------------------------------


def line_of_offset(text: str, offset: int) -> int:
    """1-based line containing the character at ``offset`` (clamped to end)."""
    if offset < 0:
        raise ValueError("offset must be >= 0")
    return text.count("\n", 0, min(offset, len(text))) + 1


def header_span_lines(problem: Problem) -> int:
    """Lines the prompt header contributes to the instance line coordinate.

    For function_check this is the count of physical header lines from the
    line containing the entry point's ``def`` through the end of the header
    (so imports above the header contribute nothing and the docstring counts).
    io_pairs instances count from the first code line, so the span is 0.
    """
    if problem.judge_mode != "function_check":
        return 0
    lines = problem.prompt_header.splitlines()
    def_row = None
    try:
        tree = ast.parse(problem.prompt_header + "    pass\n")
    except SyntaxError:
        tree = None
    if tree is not None:
        for node in ast.walk(tree):
            if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
                if node.name == problem.tests.entry_point:
                    def_row = node.lineno
                    break
    if def_row is None:
        for row, text in enumerate(lines, start=1):
            if text.lstrip().startswith(("def ", "async def ")):
                def_row = row
                break
    if def_row is None:
        raise DatasetError(
            f"{problem.problem_id}: prompt_header has no function header line"
        )
    return len(lines) - def_row + 1


def instance_line_from_body(problem: Problem, body_line: int) -> int:
    """Map a 1-based solution-body line to the stored instance coordinate."""
    if body_line < 1:
        raise ValueError("body_line must be 1-based")
    return header_span_lines(problem) + body_line


def body_line_from_instance(problem: Problem, instance_line: int) -> int:
    """Inverse of instance_line_from_body."""
    body_line = instance_line - header_span_lines(problem)
    if body_line < 1:
        raise ValueError(f"instance line {instance_line} precedes the solution body")
    return body_line


# ---------------------------------------------------------------------------
# JSONL serialization
# ---------------------------------------------------------------------------

DATASET_KINDS = ("problems", "instances", "completions", "evaluations")


def _suite_to_json(suite: TestSuite) -> dict:
    out: dict[str, Any] = {}
    if suite.check_program is not None:
        out["check_program"] = suite.check_program
        out["entry_point"] = suite.entry_point
    if suite.cases:
        out["cases"] = [list(c) for c in suite.cases]
    if suite.time_limit_s is not None:
        out["time_limit_s"] = suite.time_limit_s
    if suite.memory_limit_bytes is not None:
        out["memory_limit_bytes"] = suite.memory_limit_bytes
    return out


def _suite_from_json(obj: dict) -> TestSuite:
    return TestSuite(
        check_program=obj.get("check_program"),
        entry_point=obj.get("entry_point"),
        cases=tuple((c[0], c[1]) for c in obj.get("cases", ())),
        time_limit_s=obj.get("time_limit_s"),
        memory_limit_bytes=obj.get("memory_limit_bytes"),
    )


def _descriptor_to_json(desc: EditDescriptor) -> dict | None:
    if desc is None:
        return None
    if isinstance(desc, MutationSite):
        return {
            "kind": "mutation_site",
            "byte_span": list(desc.byte_span),
            "original_op": desc.original_op,
            "flipped_op": desc.flipped_op,
            "line": desc.line,
        }
    return {
        "kind": "pair_diff",
        "rejected_prefix": desc.rejected_prefix,
        "accepted_prefix": desc.accepted_prefix,
        "normalized_distance": desc.normalized_distance,
        "auto_flags": sorted(desc.auto_flags),
        "rejected_source": desc.rejected_source,
        "accepted_source": desc.accepted_source,
    }


def _descriptor_from_json(obj: dict | None) -> EditDescriptor:
    if obj is None:
        return None
    kind = obj.get("kind")
    if kind == "mutation_site":
        return MutationSite(
            byte_span=(obj["byte_span"][0], obj["byte_span"][1]),
            original_op=obj["original_op"],
            flipped_op=obj["flipped_op"],
            line=obj["line"],
        )
    if kind == "pair_diff":
        return PairDiff(
            rejected_prefix=obj["rejected_prefix"],
            accepted_prefix=obj["accepted_prefix"],
            normalized_distance=obj["normalized_distance"],
            auto_flags=tuple(obj.get("auto_flags", ())),
            rejected_source=obj.get("rejected_source", ""),
            accepted_source=obj.get("accepted_source", ""),
        )
    raise DatasetError(f"unknown edit_descriptor kind {kind!r}")


def record_to_json(record: Any) -> dict:
    if isinstance(record, Problem):
        return {
            "problem_id": record.problem_id,
            "statement": record.statement,
            "judge_mode": record.judge_mode,
            "prompt_header": record.prompt_header,
            "tests": _suite_to_json(record.tests),
            "reference_solution": record.reference_solution,
            "subject_language": record.subject_language,
        }
    if isinstance(record, BCCInstance):
        return {
            "instance_id": record.instance_id,
            "problem_id": record.problem_id,
            "origin": record.origin,
            "clean_prefix": record.clean_prefix,
            "buggy_prefix": record.buggy_prefix,
            "bug_line": record.bug_line,
            "split_line": record.split_line,
            "solution_lines": record.solution_lines,
            "edit_descriptor": _descriptor_to_json(record.edit_descriptor),
        }
    if isinstance(record, CompletionSample):
        return {
            "instance_id": record.instance_id,
            "variant": record.variant,
            "pipeline": record.pipeline,
            "raw_text": record.raw_text,
            "program": record.program,
            "sample_index": record.sample_index,
            "sampling": {
                "n": record.sampling.n,
                "temperature": record.sampling.temperature,
                "top_p": record.sampling.top_p,
                "max_new_tokens": record.sampling.max_new_tokens,
                "seed": record.sampling.seed,
            },
            "metadata": record.metadata,
        }
    if isinstance(record, EvaluationRecord):
        return {
            "instance_id": record.instance_id,
            "pipeline": record.pipeline,
            "variant": record.variant,
            "n": record.n,
            "num_passing": record.num_passing,
            "pass_at_k": {str(k): v for k, v in sorted(record.pass_at_k.items())},
        }
    raise DatasetError(f"unserializable record type {type(record).__name__}")


def record_from_json(obj: dict, kind: str) -> Any:
    if kind == "problems":
        rec = Problem(
            problem_id=obj["problem_id"],
            statement=obj["statement"],
            judge_mode=obj["judge_mode"],
            prompt_header=obj["prompt_header"],
            tests=_suite_from_json(obj["tests"]),
            reference_solution=obj["reference_solution"],
            subject_language=obj.get("subject_language", "python3"),
        )
    elif kind == "instances":
        rec = BCCInstance(
            instance_id=obj["instance_id"],
            problem_id=obj["problem_id"],
            origin=obj["origin"],
            clean_prefix=obj["clean_prefix"],
            buggy_prefix=obj["buggy_prefix"],
            bug_line=obj["bug_line"],
            split_line=obj["split_line"],
            solution_lines=obj["solution_lines"],
            edit_descriptor=_descriptor_from_json(obj.get("edit_descriptor")),
        )
    elif kind == "completions":
        s = obj["sampling"]
        rec = CompletionSample(
            instance_id=obj["instance_id"],
            variant=obj["variant"],
            pipeline=obj["pipeline"],
            raw_text=obj["raw_text"],
            program=obj["program"],
            sample_index=obj["sample_index"],
            sampling=SamplingConfig(
                n=s["n"],
                temperature=s["temperature"],
                top_p=s["top_p"],
                max_new_tokens=s["max_new_tokens"],
                seed=s["seed"],
            ),
            metadata=obj.get("metadata", {}),
        )
    elif kind == "evaluations":
        rec = EvaluationRecord(
            instance_id=obj["instance_id"],
            pipeline=obj["pipeline"],
            variant=obj["variant"],
            n=obj["n"],
            num_passing=obj["num_passing"],
            pass_at_k={int(k): v for k, v in obj["pass_at_k"].items()},
        )
    else:
        raise DatasetError(f"unknown dataset kind {kind!r}")
    rec.validate()
    return rec


def read_dataset(path: str | Path, kind: str) -> list:
    """Read and validate a JSONL dataset; order preserved."""
    if kind not in DATASET_KINDS:
        raise DatasetError(f"unknown dataset kind {kind!r}")
    records = []
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise DatasetError(f"{path}: not valid UTF-8 ({exc})") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from exc
        try:
            records.append(record_from_json(obj, kind))
        except (KeyError, TypeError) as exc:
            raise DatasetError(f"{path}:{lineno}: missing/invalid field {exc}") from exc
        except DatasetError as exc:
            raise DatasetError(f"{path}:{lineno}: {exc}") from exc
    return records


def write_dataset(records: Iterable[Any], path: str | Path) -> None:
    """Write records as JSONL, UTF-8, sorted keys: a byte-deterministic form."""
    lines = []
    for record in records:
        if hasattr(record, "validate"):
            record.validate()
        lines.append(json.dumps(record_to_json(record), sort_keys=True, ensure_ascii=False))
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


# ---------------------------------------------------------------------------
# external corpus ingestion
# ---------------------------------------------------------------------------


def load_humaneval(path: str | Path) -> list[Problem]:
    """Convert a HumanEval-format problems file to Problem records.

    Accepts the dataset's native JSONL (optionally gzipped) with fields
    task_id / prompt / canonical_solution / test / entry_point. The docstring
    inside the prompt becomes the statement; the prompt itself is the header.
    """
    import gzip

    p = Path(path)
    if p.suffix == ".gz":
        text = gzip.decompress(p.read_bytes()).decode("utf-8")
    else:
        text = p.read_text(encoding="utf-8")
    problems = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            statement = _docstring_of(obj["prompt"], obj["entry_point"]) or obj["prompt"]
            problem = Problem(
                problem_id=obj["task_id"],
                statement=statement,
                judge_mode="function_check",
                prompt_header=obj["prompt"],
                tests=TestSuite(
                    check_program=obj["test"], entry_point=obj["entry_point"]
                ),
                reference_solution=obj["canonical_solution"],
            )
            problem.validate()
        except (KeyError, json.JSONDecodeError) as exc:
            raise DatasetError(f"{path}:{lineno}: not HumanEval format ({exc})") from exc
        problems.append(problem)
    return problems


def _docstring_of(prompt: str, entry_point: str) -> str | None:
    try:
        tree = ast.parse(prompt + "    pass\n")
    except SyntaxError:
        return None
    for node in ast.walk(tree):
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
            if node.name == entry_point:
                return ast.get_docstring(node)
    return None


def solution_line_count(solution: str) -> int:
    """Physical line count of a solution body (trailing newline not a line)."""
    return len(solution.splitlines())


def ceil_div(a: int, b: int) -> int:
    return math.ceil(a / b)
