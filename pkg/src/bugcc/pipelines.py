"""Completion pipelines and bug-aware mitigation strategies.

Four pipelines share one sampling/judging/evaluation path and differ only in
how they turn an instance prefix into model calls:

    naive                  complete the prefix as-is
    removal                drop the prefix body, complete from the header
                           (or bare statement) alone
    rewrite_then_complete  score the prefix, localize the most suspect line by
                           likelihood gap, infill a replacement when the gap
                           clears the threshold, then complete
    complete_then_rewrite  complete naively, then hand each full program to a
                           repair endpoint that returns a full program

Likelihood localization works on per-token (p2 - p1) gaps: p1 is the
probability of the token actually present, p2 the probability of the model's
preferred token. Lines are scored by aggregating their nonzero gaps (max or
mean); a rewrite happens only when the winning line's score strictly exceeds
the threshold tau, so tau=1 never rewrites and tau=0 rewrites on any nonzero
gap.
"""
from __future__ import annotations

import dataclasses
import io
import logging
import statistics
import tokenize
from typing import Callable, Mapping, Sequence

from .core import (
    BCCInstance,
    CompletionSample,
    EvaluationRecord,
    Problem,
    SamplingConfig,
    Verdict,
)
from .metrics import pass_at_k
from .modelio import ModelClient, TokenScore, token_scores
from .runner import ExecLimits, InfrastructureError, judge_many

logger = logging.getLogger(__name__)

JudgeFn = Callable[[str, Problem], Verdict]

AGGREGATIONS = ("max", "mean")

PROMPT_MODES = ("with_prefix", "without_prefix")

# A raw io_pairs completion runs until one of these opens a line: a fresh
# docstring block or a second program are model chatter, not solution code.
IO_SENTINELS = ('"""', "'''", "if __name__", "### ")


def _canonical_agg(agg: str) -> str:
    if agg == "avg":
        return "mean"
    if agg not in AGGREGATIONS:
        raise ValueError(f"unknown aggregation {agg!r}")
    return agg


def statement_block(statement: str) -> str:
    """The problem statement as a leading file-level docstring for io prompts."""
    body = statement.strip("\n")
    if '"""' not in body:
        return f'"""\n{body}\n"""\n'
    if "'''" not in body:
        return f"'''\n{body}\n'''\n"
    return "".join(f"# {line}".rstrip() + "\n" for line in body.splitlines())


def _instance_prefix(instance: BCCInstance, variant: str) -> str:
    if variant == "buggy":
        return instance.buggy_prefix
    if variant == "clean":
        return instance.clean_prefix
    raise ValueError(f"unknown variant {variant!r}")


def _assemble_prompt(problem: Problem, prefix: str) -> str:
    if problem.judge_mode == "io_pairs":
        return statement_block(problem.statement) + prefix
    return prefix


def build_prompt(
    instance: BCCInstance,
    variant: str,
    problem: Problem,
    mode: str = "with_prefix",
) -> str:
    """The text a completion model sees for one instance and variant.

    with_prefix: function_check prefixes already open with the prompt header
    (signature and docstring) and stand alone; io_pairs prefixes get the
    problem statement prepended as a file-level docstring block.
    without_prefix drops the prefix body: the header alone for
    function_check, the statement block alone for io_pairs.
    """
    if mode not in PROMPT_MODES:
        raise ValueError(f"unknown prompt mode {mode!r}")
    if instance.problem_id != problem.problem_id:
        raise ValueError(
            f"{instance.instance_id} belongs to {instance.problem_id}, "
            f"not {problem.problem_id}"
        )
    if mode == "without_prefix":
        prefix = problem.prompt_header if problem.judge_mode == "function_check" else ""
    else:
        prefix = _instance_prefix(instance, variant)
    return _assemble_prompt(problem, prefix)


def body_start_in_prompt(problem: Problem, prefix: str) -> int:
    """Character offset where solution-body code begins inside the assembled
    prompt; token scores before it are header context, not bug candidates."""
    if problem.judge_mode == "io_pairs":
        return len(statement_block(problem.statement))
    if prefix.startswith(problem.prompt_header):
        return len(problem.prompt_header)
    return 0


def _harvest_tokens(text: str) -> tuple[list[tokenize.TokenInfo], bool]:
    tokens: list[tokenize.TokenInfo] = []
    gen = tokenize.generate_tokens(io.StringIO(text).readline)
    while True:
        try:
            tokens.append(next(gen))
        except StopIteration:
            return tokens, True
        except (tokenize.TokenError, IndentationError, SyntaxError):
            return tokens, False


_TRIGGER_TYPES = frozenset({tokenize.NAME, tokenize.NUMBER, tokenize.STRING, tokenize.OP})


def _function_cut_row(prompt: str, raw: str, stops: Sequence[str]) -> int | None:
    """1-based row within raw where a function-body completion ends.

    The full text is tokenized so column-0 material inside string literals
    never triggers; the first genuine code token at column zero past the
    prompt marks the cut. If lexing dies early (unterminated string and the
    like), rows past the last lexed point fall back to a plain text scan.
    """
    prompt_rows = prompt.count("\n")
    raw_lines = raw.splitlines()
    for row, line in enumerate(raw_lines, start=1):
        if stops and any(line.startswith(stop) for stop in stops):
            return row
    tokens, completed = _harvest_tokens(prompt + raw)
    covered_row = 0
    for tok in tokens:
        covered_row = max(covered_row, tok.end[0])
        if (
            tok.type in _TRIGGER_TYPES
            and tok.start[1] == 0
            and tok.start[0] > prompt_rows
        ):
            return tok.start[0] - prompt_rows
    if completed:
        return None
    for row in range(max(covered_row - prompt_rows, 0), len(raw_lines)):
        line = raw_lines[row]
        if line and not line[0].isspace() and not line.startswith("#"):
            return row + 1
    return None


def postprocess_completion(
    raw_text: str,
    problem: Problem,
    prompt: str,
    stops: Sequence[str] = (),
) -> tuple[str, str]:
    """(kept_text, program) for one raw model completion.

    function_check: keep body lines until a configured stop sequence or the
    first column-0 code token after the prompt (the model has left the
    function). io_pairs: keep lines until a sentinel or stop opens one. The
    program is always prompt + kept_text; if that does not parse it will be
    judged syntax_error downstream rather than silently repaired here.
    """
    if problem.judge_mode == "function_check":
        cut_row = _function_cut_row(prompt, raw_text, stops)
        if cut_row is None:
            return raw_text, prompt + raw_text
        kept_lines = raw_text.splitlines()[: cut_row - 1]
    else:
        lines = raw_text.splitlines()
        kept_lines = []
        for line in lines:
            opener = line.lstrip()
            if any(opener.startswith(s) for s in IO_SENTINELS) or any(
                line.startswith(s) for s in stops
            ):
                break
            kept_lines.append(line)
        if kept_lines and len(kept_lines) == len(lines):
            return raw_text, prompt + raw_text  # nothing cut: keep exact tail
    kept = "\n".join(kept_lines) + "\n" if kept_lines else ""
    return kept, prompt + kept


def line_scores(scores: Sequence[TokenScore], agg: str = "max") -> dict[int, float]:
    """Aggregate nonzero token gaps per line. Lines whose gaps are all zero
    score 0.0."""
    agg = _canonical_agg(agg)
    by_line: dict[int, list[float]] = {}
    for score in scores:
        by_line.setdefault(score.line, []).append(score.gap)
    out = {}
    for line, gaps in by_line.items():
        nonzero = [g for g in gaps if g > 0]
        if not nonzero:
            out[line] = 0.0
        elif agg == "max":
            out[line] = max(nonzero)
        else:
            out[line] = statistics.fmean(nonzero)
    return out


def localize_line(scores: Sequence[TokenScore], agg: str = "max") -> tuple[int, float]:
    """(line, score) of the most implausible line; earliest line wins ties.

    Raises ValueError on an empty score list: no tokens means there is
    nothing to localize, and the caller must decide that case itself.
    """
    if not scores:
        raise ValueError("cannot localize over an empty score list")
    per_line = line_scores(scores, agg)
    best_line = min(per_line, key=lambda line: (-per_line[line], line))
    return best_line, per_line[best_line]


def rewrite_prefix(
    prompt: str,
    body_start: int,
    score_client: ModelClient,
    infill_client: ModelClient,
    sampling: SamplingConfig,
    tau: float = 0.9,
    agg: str = "max",
) -> tuple[str, dict]:
    """Localize the most suspect body line of a prompt and infill it.

    Returns (possibly rewritten prompt, metadata). The rewrite fires only
    when the winning line's score strictly exceeds tau. The infilled line is
    truncated at its first newline; masking the final line sends an empty
    suffix. An infill transport failure falls back to the original prompt
    with a warning instead of killing the run.
    """
    meta: dict = {"rewrote": False, "localized_line": None, "line_score": None}
    if not 0 <= tau <= 1:
        raise ValueError(f"tau must be in [0, 1], got {tau}")
    scores = token_scores(score_client, prompt, body_start)
    if not scores:
        logger.debug("no body tokens to score; prefix left unchanged")
        return prompt, meta
    line, score = localize_line(scores, agg)
    meta["localized_line"] = line
    meta["line_score"] = score
    if not score > tau:
        return prompt, meta

    lines = prompt.splitlines(keepends=True)
    base_rows = prompt.count("\n", 0, body_start)
    row = base_rows + line - 1
    if not (0 <= row < len(lines)):
        logger.warning("localized line %d outside prompt; prefix left unchanged", line)
        return prompt, meta
    before = "".join(lines[:row])
    after = "".join(lines[row + 1 :])
    try:
        replacement = infill_client.infill(before, after, sampling).split("\n", 1)[0]
    except InfrastructureError as exc:
        logger.warning("infill failed (%s); prefix left unchanged", exc)
        return prompt, meta
    if not replacement.strip():
        logger.debug("empty infill for line %d; prefix left unchanged", line)
        return prompt, meta
    meta["rewrote"] = True
    return before + replacement + "\n" + after, meta


def heuristic_oracle_line(buggy_prefix: str, clean_prefix: str) -> int:
    """First line where the prefixes differ beyond comments and whitespace.

    Analysis-only localization upper bound; needs the clean prefix, so it can
    never be a deployable pipeline step. Raises ValueError when no line
    differs, since that would violate the instance invariant.
    """
    from .pairer import first_line_difference

    line = first_line_difference(buggy_prefix, clean_prefix)
    total = max(len(buggy_prefix.splitlines()), len(clean_prefix.splitlines()))
    if line > total:
        raise ValueError("prefixes have no differing line")
    return line


def generate_samples(
    instance: BCCInstance,
    problem: Problem,
    pipeline: str,
    variant: str,
    clients: Mapping[str, ModelClient],
    sampling: SamplingConfig,
    tau: float = 0.9,
    agg: str = "max",
    stops: Sequence[str] = (),
) -> list[CompletionSample]:
    """All n samples for one (instance, variant) under one pipeline.

    clients maps roles to endpoints: "completion" is required; "score" and
    "infill" default to the completion endpoint; "repair" is required only by
    complete_then_rewrite.
    """
    completion_client = clients["completion"]
    meta: dict = {}

    if pipeline == "naive":
        prompt = build_prompt(instance, variant, problem)
    elif pipeline == "removal":
        prompt = build_prompt(instance, variant, problem, mode="without_prefix")
    elif pipeline == "rewrite_then_complete":
        prefix = _instance_prefix(instance, variant)
        base_prompt = build_prompt(instance, variant, problem)
        prompt, meta = rewrite_prefix(
            base_prompt,
            body_start_in_prompt(problem, prefix),
            clients.get("score", completion_client),
            clients.get("infill", completion_client),
            sampling,
            tau=tau,
            agg=agg,
        )
        if meta["rewrote"]:
            preamble_len = len(base_prompt) - len(prefix)
            meta["rewritten_prefix"] = prompt[preamble_len:]
    elif pipeline == "complete_then_rewrite":
        if "repair" not in clients:
            raise ValueError("complete_then_rewrite needs a repair endpoint")
        prompt = build_prompt(instance, variant, problem)
    else:
        raise ValueError(f"unknown pipeline {pipeline!r}")

    raw_texts = completion_client.complete(prompt, sampling)
    samples = []
    one_sample = dataclasses.replace(sampling, n=1)
    for index, raw in enumerate(raw_texts):
        kept, program = postprocess_completion(raw, problem, prompt, stops)
        sample_meta = dict(meta)
        if pipeline == "complete_then_rewrite":
            try:
                repaired = clients["repair"].complete(program, one_sample)[0]
            except InfrastructureError as exc:
                logger.warning(
                    "%s sample %d: repairer failed (%s); candidate kept unrepaired",
                    instance.instance_id,
                    index,
                    exc,
                )
                sample_meta["repaired"] = False
            else:
                sample_meta["repaired"] = True
                sample_meta["repair_noop"] = repaired == program
                if not sample_meta["repair_noop"]:
                    sample_meta["pre_repair_program"] = program
                    program = repaired
        samples.append(
            CompletionSample(
                instance_id=instance.instance_id,
                variant=variant,
                pipeline=pipeline,
                raw_text=raw,
                program=program,
                sample_index=index,
                sampling=sampling,
                metadata=sample_meta,
            )
        )
    return samples


def evaluate_samples(
    samples: Sequence[CompletionSample],
    corpus: Mapping[str, Problem],
    instances: Mapping[str, BCCInstance],
    ks: Sequence[int],
    judge_fn: JudgeFn | None = None,
    limits: ExecLimits = ExecLimits(),
    jobs: int = 1,
    interpreter: str | None = None,
) -> list[EvaluationRecord]:
    """Judge samples and reduce them to per-(instance, variant) records.

    Identical (problem, program) texts are judged once: the judge is
    deterministic and mitigation pipelines produce many duplicate programs.
    Each sample's verdict kind lands in its metadata. Requested k values
    above a group's sample count are dropped with a warning rather than
    inventing an estimate the samples cannot support.
    """
    ks = sorted(set(ks))
    if not ks or ks[0] < 1:
        raise ValueError("k values must be >= 1")

    order: list[tuple[str, str]] = []
    seen = set()
    for sample in samples:
        instance = instances[sample.instance_id]
        key = (instance.problem_id, sample.program)
        if key not in seen:
            seen.add(key)
            order.append(key)

    if judge_fn is None:
        pairs = [(program, corpus[pid]) for pid, program in order]
        verdicts = judge_many(pairs, limits, jobs, interpreter)
    else:
        verdicts = [judge_fn(program, corpus[pid]) for pid, program in order]
    cache = dict(zip(order, verdicts))

    groups: dict[tuple[str, str, str], list[CompletionSample]] = {}
    for sample in samples:
        groups.setdefault(
            (sample.instance_id, sample.pipeline, sample.variant), []
        ).append(sample)

    records = []
    for (instance_id, pipeline, variant), group in groups.items():
        problem_id = instances[instance_id].problem_id
        passing = 0
        for sample in group:
            verdict = cache[(problem_id, sample.program)]
            sample.metadata["verdict"] = verdict.kind
            if verdict.passed:
                passing += 1
        n = len(group)
        for k in ks:
            if k > n:
                logger.warning("%s: k=%d dropped (only %d samples)", instance_id, k, n)
        records.append(
            EvaluationRecord(
                instance_id=instance_id,
                pipeline=pipeline,
                variant=variant,
                n=n,
                num_passing=passing,
                pass_at_k={k: pass_at_k(n, passing, k) for k in ks if k <= n},
            )
        )
    return records


def run_pipeline(
    instances: Sequence[BCCInstance],
    corpus: Sequence[Problem],
    pipeline: str,
    variants: Sequence[str],
    clients: Mapping[str, ModelClient],
    sampling: SamplingConfig,
    ks: Sequence[int] = (1,),
    tau: float = 0.9,
    agg: str = "max",
    stops: Sequence[str] = (),
    judge_fn: JudgeFn | None = None,
    limits: ExecLimits = ExecLimits(),
    jobs: int = 1,
    interpreter: str | None = None,
) -> tuple[list[CompletionSample], list[EvaluationRecord]]:
    """Sample and evaluate one pipeline over instances and variants.

    Output order is deterministic: instances in input order, variants in the
    given order, sample indices ascending; evaluation records follow the same
    grouping order. A per-instance endpoint failure yields a record with the
    samples actually obtained (possibly n=0) instead of aborting the run;
    only configuration errors abort.
    """
    problem_map = {p.problem_id: p for p in corpus}
    instance_map = {i.instance_id: i for i in instances}
    sampling.validate()
    agg = _canonical_agg(agg)

    samples: list[CompletionSample] = []
    failed_groups: list[tuple[str, str]] = []
    for instance in instances:
        problem = problem_map.get(instance.problem_id)
        if problem is None:
            raise ValueError(
                f"{instance.instance_id}: problem {instance.problem_id} not in corpus"
            )
        for variant in variants:
            try:
                samples.extend(
                    generate_samples(
                        instance,
                        problem,
                        pipeline,
                        variant,
                        clients,
                        sampling,
                        tau=tau,
                        agg=agg,
                        stops=stops,
                    )
                )
            except InfrastructureError as exc:
                logger.error(
                    "%s (%s): sampling failed, recording zero samples: %s",
                    instance.instance_id,
                    variant,
                    exc,
                )
                failed_groups.append((instance.instance_id, variant))

    records = evaluate_samples(
        samples,
        problem_map,
        instance_map,
        ks,
        judge_fn=judge_fn,
        limits=limits,
        jobs=jobs,
        interpreter=interpreter,
    )
    for instance_id, variant in failed_groups:
        records.append(
            EvaluationRecord(
                instance_id=instance_id,
                pipeline=pipeline,
                variant=variant,
                n=0,
                num_passing=0,
                pass_at_k={},
            )
        )
    return samples, records
