"""Command-line surface: build, run, report, validate.

Exit codes: 0 success, 1 usage/data error, 2 infrastructure error. Errors
surface as single messages, not stack traces; set BUGCC_DEBUG=1 to re-raise.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import math
import os
import random
import sys
from datetime import datetime, timezone
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__
from .core import (
    DatasetError,
    Problem,
    SamplingConfig,
    body_line_from_instance,
    load_humaneval,
    read_dataset,
    write_dataset,
)
from .metrics import location_heatmap, macro_average
from .modelio import CAPABILITIES, EndpointConfig, make_client
from .mutator import build_synthetic
from .pairer import Submission, build_realistic
from .pipelines import run_pipeline
from .runner import ExecLimits, InfrastructureError, judge

logger = logging.getLogger(__name__)

PIPELINE_NAMES = {
    "naive": "naive",
    "removal": "removal",
    "rewrite-complete": "rewrite_then_complete",
    "complete-rewrite": "complete_then_rewrite",
}

DEFAULT_SAMPLING = {
    "n": 1,
    "temperature": 0.6,
    "top_p": 1.0,
    "max_new_tokens": 512,
    "seed": 0,
}


class UsageError(ValueError):
    """Bad flags, bad config, or inconsistent data supplied by the user."""


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def load_problems(path: str | Path) -> list[Problem]:
    """Read a problems file in either the native JSONL form or the public
    HumanEval release format (detected by its task_id field)."""
    text_path = Path(path)
    first = ""
    if text_path.suffix != ".gz":
        for line in text_path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                first = line
                break
    if text_path.suffix == ".gz" or '"task_id"' in first:
        return load_humaneval(text_path)
    return read_dataset(text_path, "problems")


def _read_submissions(path: str | Path) -> list[Submission]:
    subs = []
    for lineno, line in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), start=1
    ):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            subs.append(
                Submission(
                    submission_id=str(obj["submission_id"]),
                    user_id=str(obj["user_id"]),
                    problem_id=str(obj["problem_id"]),
                    timestamp=int(obj["timestamp"]),
                    verdict=str(obj["verdict"]),
                    source=str(obj["source"]),
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"{path}:{lineno}: bad submission record ({exc})") from exc
    return subs


def _make_judge(limits: ExecLimits, interpreter: str | None):
    def judge_fn(program: str, problem: Problem):
        return judge(program, problem, limits, interpreter)

    return judge_fn


def _parse_ks(text: str) -> list[int]:
    try:
        ks = sorted({int(part) for part in text.split(",") if part.strip()})
    except ValueError as exc:
        raise UsageError(f"--k expects comma-separated integers, got {text!r}") from exc
    if not ks or ks[0] < 1:
        raise UsageError("--k values must be >= 1")
    return ks


def _load_config(path: str | Path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError as exc:
        raise UsageError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"{path}: bad TOML ({exc})") from exc


def _endpoint_from_table(name: str, table: dict, config_dir: Path) -> EndpointConfig:
    fixture = table.get("fixture", "")
    if fixture and not Path(fixture).is_absolute():
        fixture = str(config_dir / fixture)
    return EndpointConfig(
        name=name,
        kind=table.get("kind", "http"),
        base_url=table.get("base_url", ""),
        model=table.get("model", ""),
        fixture=fixture,
        capabilities=tuple(table.get("capabilities", CAPABILITIES)),
        token_env=table.get("token_env", "BUGCC_API_TOKEN"),
        timeout_s=float(table.get("timeout_s", 60.0)),
        max_retries=int(table.get("max_retries", 3)),
        parallelism=int(table.get("parallelism", 4)),
    )


def _sampling_from_config(config: dict, n_flag: int | None) -> SamplingConfig:
    table = dict(DEFAULT_SAMPLING)
    table.update(config.get("sampling", {}))
    if n_flag is not None:
        table["n"] = n_flag
    sampling = SamplingConfig(
        n=int(table["n"]),
        temperature=float(table["temperature"]),
        top_p=float(table["top_p"]),
        max_new_tokens=int(table["max_new_tokens"]),
        seed=int(table["seed"]),
    )
    sampling.validate()
    return sampling


def _limits_from_config(config: dict) -> ExecLimits:
    table = config.get("limits", {})
    limits = ExecLimits(
        wall_time_s=float(table.get("wall_time_s", ExecLimits.wall_time_s)),
        memory_bytes=int(table.get("memory_bytes", ExecLimits.memory_bytes)),
        max_output_bytes=int(
            table.get("max_output_bytes", ExecLimits.max_output_bytes)
        ),
    )
    limits.validate()
    return limits


# ---------------------------------------------------------------------------
# report generation (shared by `run` and `report`)
# ---------------------------------------------------------------------------


def _write_summary_csv(records, instance_map, path: Path) -> list[dict]:
    ks = sorted({k for record in records for k in record.pass_at_k})
    problem_of_instance = {iid: inst.problem_id for iid, inst in instance_map.items()}
    groups: dict[tuple[str, str], list] = {}
    for record in records:
        groups.setdefault((record.pipeline, record.variant), []).append(record)
    rows = []
    for (pipeline, variant) in sorted(groups):
        group = groups[(pipeline, variant)]
        row = {
            "pipeline": pipeline,
            "variant": variant,
            "instances": len(group),
        }
        for k in ks:
            with_k = [r for r in group if k in r.pass_at_k]
            row[f"pass@{k}"] = (
                f"{macro_average(with_k, problem_of_instance, k):.6f}" if with_k else ""
            )
        rows.append(row)
    fieldnames = ["pipeline", "variant", "instances"] + [f"pass@{k}" for k in ks]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    return rows


def _write_heatmap_csv(records, instance_map, path: Path, bins: int) -> None:
    fieldnames = [
        "pipeline",
        "variant",
        "bug_bin",
        "split_bin",
        "bug_lo",
        "bug_hi",
        "split_lo",
        "split_hi",
        "mean_pass_at_1",
        "count",
    ]
    groups: dict[tuple[str, str], list] = {}
    for record in records:
        if 1 in record.pass_at_k:
            groups.setdefault((record.pipeline, record.variant), []).append(record)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for (pipeline, variant) in sorted(groups):
            cells = location_heatmap(
                groups[(pipeline, variant)], instance_map.values(), bins
            )
            for cell in cells:
                writer.writerow(
                    {
                        "pipeline": pipeline,
                        "variant": variant,
                        "bug_bin": cell.bug_loc_bin,
                        "split_bin": cell.split_loc_bin,
                        "bug_lo": f"{cell.bug_loc_edges[0]:.4f}",
                        "bug_hi": f"{cell.bug_loc_edges[1]:.4f}",
                        "split_lo": f"{cell.split_loc_edges[0]:.4f}",
                        "split_hi": f"{cell.split_loc_edges[1]:.4f}",
                        "mean_pass_at_1": f"{cell.mean_pass_at_1:.6f}",
                        "count": cell.count,
                    }
                )


def _print_summary(rows: list[dict]) -> None:
    if not rows:
        print("no evaluation records")
        return
    headers = list(rows[0])
    widths = [
        max(len(str(h)), max(len(str(r[h])) for r in rows)) for h in headers
    ]
    print("  ".join(h.ljust(w) for h, w in zip(headers, widths)))
    for row in rows:
        print("  ".join(str(row[h]).ljust(w) for h, w in zip(headers, widths)))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_build_synthetic(args) -> int:
    problems = load_problems(args.problems)
    limits = ExecLimits()
    judge_fn = _make_judge(limits, args.python)
    report: dict = {}
    instances = build_synthetic(
        problems, judge_fn, jobs=args.jobs, report_out=report
    )
    write_dataset(instances, args.out)
    if args.report:
        Path(args.report).write_text(
            json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    print(
        f"built {report['instances_total']} instances over "
        f"{report['problems_with_instances']} of {report['problems_total']} problems "
        f"-> {args.out}"
    )
    return 0


def _cmd_build_realistic(args) -> int:
    problems = load_problems(args.problems)
    submissions = _read_submissions(args.submissions)
    limits = ExecLimits()
    judge_fn = _make_judge(limits, args.python)
    if args.min_dist < 0 or args.max_dist < args.min_dist:
        raise UsageError("need 0 <= --min-dist <= --max-dist")
    report: dict = {}
    kept, review = build_realistic(
        submissions,
        problems,
        judge_fn,
        min_dist=args.min_dist,
        max_dist=args.max_dist,
        report_out=report,
    )

    if args.apply_review:
        decisions: dict[str, bool] = {}
        for lineno, line in enumerate(
            Path(args.apply_review).read_text(encoding="utf-8").splitlines(), start=1
        ):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                decisions[str(obj["instance_id"])] = bool(obj["keep"])
            except (json.JSONDecodeError, KeyError) as exc:
                raise DatasetError(
                    f"{args.apply_review}:{lineno}: bad review decision ({exc})"
                ) from exc
        accepted = [r for r in review if decisions.get(r.instance_id)]
        review = [r for r in review if r.instance_id not in decisions]
        kept = kept + accepted
        report["review_accepted"] = len(accepted)

    write_dataset(kept, args.out)
    write_dataset(review, args.review)
    if args.report:
        Path(args.report).write_text(
            json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    print(
        f"kept {len(kept)} instances -> {args.out}; "
        f"{len(review)} queued for review -> {args.review}"
    )
    for key in sorted(report):
        print(f"  {key}: {report[key]}")
    return 0


def _cmd_run(args) -> int:
    config_path = Path(args.endpoint)
    config = _load_config(config_path)
    out_dir = Path(args.out)
    manifest_path = out_dir / "manifest.json"
    if manifest_path.exists():
        raise UsageError(
            f"{manifest_path} already exists; runs are immutable, pick a new --out"
        )

    pipeline_flags = (
        list(PIPELINE_NAMES) if args.pipeline == "all" else args.pipeline.split(",")
    )
    pipelines = []
    for flag in pipeline_flags:
        flag = flag.strip()
        if flag not in PIPELINE_NAMES:
            raise UsageError(
                f"unknown pipeline {flag!r}; choose from "
                f"{', '.join(PIPELINE_NAMES)} or 'all'"
            )
        pipelines.append(PIPELINE_NAMES[flag])
    variants = ("clean", "buggy") if args.variant == "both" else (args.variant,)
    ks = _parse_ks(args.k)
    if not 0 <= args.tau <= 1:
        raise UsageError("--tau must be in [0, 1]")

    instances = read_dataset(args.instances, "instances")
    problems = load_problems(args.problems)
    sampling = _sampling_from_config(config, args.n)
    limits = _limits_from_config(config)
    pipeline_table = config.get("pipeline", {})
    stops = tuple(pipeline_table.get("stops", ()))

    endpoint_tables = config.get("endpoints", {})
    if "completion" not in endpoint_tables:
        raise UsageError(f"{config_path}: config needs an [endpoints.completion] table")
    endpoints = {
        name: _endpoint_from_table(name, table, config_path.parent)
        for name, table in endpoint_tables.items()
    }
    if "rewrite_then_complete" in pipelines:
        for role in ("score", "infill"):
            endpoints.get(role, endpoints["completion"]).require(role)
    if "complete_then_rewrite" in pipelines and "repair" not in endpoints:
        raise UsageError(
            f"{config_path}: complete-rewrite needs an [endpoints.repair] table"
        )
    clients = {name: make_client(cfg) for name, cfg in endpoints.items()}

    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "toolkit_version": __version__,
        "command": sys.argv if sys.argv else ["bugcc"],
        "created_at": datetime.now(timezone.utc).isoformat(),
        "config_path": str(config_path),
        "config_sha256": _sha256_file(config_path),
        "config": config,
        "datasets": {
            "instances": {
                "path": str(args.instances),
                "sha256": _sha256_file(Path(args.instances)),
            },
            "problems": {
                "path": str(args.problems),
                "sha256": _sha256_file(Path(args.problems)),
            },
        },
        "endpoints": {
            name: {
                "kind": cfg.kind,
                "base_url": cfg.base_url,
                "model": cfg.model,
                "fixture": cfg.fixture,
                "capabilities": list(cfg.capabilities),
            }
            for name, cfg in endpoints.items()
        },
        "pipelines": pipelines,
        "variants": list(variants),
        "k": ks,
        "tau": args.tau,
        "agg": args.agg,
        "sampling": dataclasses.asdict(sampling),
        "jobs": args.jobs,
    }
    manifest_path.write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    all_samples = []
    all_records = []
    for pipeline in pipelines:
        samples, records = run_pipeline(
            instances,
            problems,
            pipeline,
            variants,
            clients,
            sampling,
            ks=ks,
            tau=args.tau,
            agg=args.agg,
            stops=stops,
            limits=limits,
            jobs=args.jobs,
            interpreter=args.python,
        )
        all_samples.extend(samples)
        all_records.extend(records)
        print(f"{pipeline}: {len(samples)} samples, {len(records)} records")

    write_dataset(all_samples, out_dir / "completions.jsonl")
    write_dataset(all_records, out_dir / "evaluations.jsonl")
    instance_map = {inst.instance_id: inst for inst in instances}
    rows = _write_summary_csv(all_records, instance_map, out_dir / "summary.csv")
    _write_heatmap_csv(all_records, instance_map, out_dir / "heatmap.csv", args.bins)
    _print_summary(rows)
    print(f"run artifacts -> {out_dir}")
    return 0


def _cmd_report(args) -> int:
    run_dir = Path(args.run)
    evaluations_path = run_dir / "evaluations.jsonl"
    if not evaluations_path.exists():
        raise UsageError(f"{run_dir} has no evaluations.jsonl")
    records = read_dataset(evaluations_path, "evaluations")
    instances = read_dataset(args.instances, "instances")
    instance_map = {inst.instance_id: inst for inst in instances}
    rows = _write_summary_csv(records, instance_map, run_dir / "summary.csv")
    _write_heatmap_csv(records, instance_map, run_dir / "heatmap.csv", args.bins)
    _print_summary(rows)
    print(f"wrote {run_dir / 'summary.csv'} and {run_dir / 'heatmap.csv'}")
    return 0


def _cmd_validate(args) -> int:
    instances = read_dataset(args.instances, "instances")
    problems = load_problems(args.problems)
    problem_map = {p.problem_id: p for p in problems}
    failures: list[str] = []

    seen_ids = set()
    for instance in instances:
        if instance.instance_id in seen_ids:
            failures.append(f"{instance.instance_id}: duplicate instance_id")
        seen_ids.add(instance.instance_id)
        if instance.problem_id not in problem_map:
            failures.append(
                f"{instance.instance_id}: unknown problem {instance.problem_id}"
            )

    if not 0 <= args.sample <= 1:
        raise UsageError("--sample must be a fraction in [0, 1]")
    candidates = [i for i in instances if i.problem_id in problem_map]
    count = math.ceil(len(candidates) * args.sample) if args.sample else 0
    sampled = random.Random(args.seed).sample(candidates, min(count, len(candidates)))

    limits = ExecLimits()
    judge_fn = _make_judge(limits, args.python)
    for instance in sampled:
        problem = problem_map[instance.problem_id]
        try:
            buggy_full, clean_full = _reconstruct_programs(instance, problem)
        except (ValueError, DatasetError) as exc:
            failures.append(f"{instance.instance_id}: cannot reconstruct ({exc})")
            continue
        if clean_full is not None and not judge_fn(clean_full, problem).passed:
            failures.append(f"{instance.instance_id}: clean solution fails its tests")
        if buggy_full is not None and judge_fn(buggy_full, problem).passed:
            failures.append(f"{instance.instance_id}: buggy solution passes all tests")

    if failures:
        for failure in failures:
            print(f"FAIL {failure}", file=sys.stderr)
        print(
            f"validate: {len(failures)} problem(s) across {len(instances)} instances",
            file=sys.stderr,
        )
        return 1
    print(
        f"validate: {len(instances)} instances consistent; "
        f"{len(sampled)} re-certified by execution"
    )
    return 0


def _reconstruct_programs(instance, problem) -> tuple[str | None, str | None]:
    """Full buggy/clean programs for re-certification.

    Synthetic instances splice the buggy prefix with the clean solution's
    tail (the flip is at or before the split, so the tail is shared).
    Realistic instances carry both full sources in their descriptor; without
    stored sources there is nothing to re-execute.
    """
    if instance.origin == "synthetic":
        clean_full = problem.full_program()
        header = (
            problem.prompt_header if problem.judge_mode == "function_check" else ""
        )
        body_prefix = instance.buggy_prefix
        if header and body_prefix.startswith(header):
            body_prefix = body_prefix[len(header):]
        clean_body_lines = problem.reference_solution.splitlines()
        split_body = body_line_from_instance(problem, instance.split_line)
        tail_lines = clean_body_lines[split_body:]
        tail = "\n".join(tail_lines) + "\n" if tail_lines else ""
        buggy_full = problem.full_program(body_prefix + tail)
        return buggy_full, clean_full
    descriptor = instance.edit_descriptor
    if descriptor is None or not getattr(descriptor, "rejected_source", ""):
        logger.warning("%s: no stored sources; execution check skipped", instance.instance_id)
        return None, None
    return descriptor.rejected_source, descriptor.accepted_source


# ---------------------------------------------------------------------------
# parser / entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bugcc",
        description="Buggy-code-completion benchmark toolkit.",
    )
    parser.add_argument("--version", action="version", version=f"bugcc {__version__}")
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="log progress details"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-synthetic", help="operator-flip instances from references")
    p.add_argument("--problems", required=True, help="problems JSONL (or HumanEval file)")
    p.add_argument("--out", required=True, help="output instances JSONL")
    p.add_argument("--jobs", type=int, default=1, help="parallel certification runs")
    p.add_argument("--report", help="write per-problem build report JSON here")
    p.add_argument("--python", help="interpreter for judging (default: this one)")
    p.set_defaults(func=_cmd_build_synthetic)

    p = sub.add_parser("build-realistic", help="instances from submission streaks")
    p.add_argument("--submissions", required=True, help="submissions JSONL")
    p.add_argument("--problems", required=True, help="problems JSONL")
    p.add_argument("--out", required=True, help="output instances JSONL")
    p.add_argument("--review", required=True, help="review-queue instances JSONL")
    p.add_argument(
        "--apply-review",
        help="JSONL of {instance_id, keep} decisions for queued instances",
    )
    p.add_argument("--min-dist", type=int, default=1, help="distance window low end")
    p.add_argument("--max-dist", type=int, default=20, help="distance window high end")
    p.add_argument("--report", help="write per-stage counts JSON here")
    p.add_argument("--python", help="interpreter for judging (default: this one)")
    p.set_defaults(func=_cmd_build_realistic)

    p = sub.add_parser("run", help="sample, judge, and evaluate pipelines")
    p.add_argument("--instances", required=True)
    p.add_argument("--problems", required=True)
    p.add_argument(
        "--pipeline",
        default="naive",
        help="naive|removal|rewrite-complete|complete-rewrite, comma list, or 'all'",
    )
    p.add_argument("--variant", choices=("clean", "buggy", "both"), default="both")
    p.add_argument("--endpoint", required=True, help="TOML config for endpoints/sampling")
    p.add_argument("--n", type=int, default=None, help="samples per instance")
    p.add_argument("--k", default="1", help="comma-separated k values")
    p.add_argument("--tau", type=float, default=0.9, help="rewrite threshold")
    p.add_argument("--agg", choices=("max", "mean", "avg"), default="max")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--bins", type=int, default=10, help="heatmap bins per axis")
    p.add_argument("--jobs", type=int, default=1, help="parallel judge processes")
    p.add_argument("--python", help="interpreter for judging (default: this one)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("report", help="summary and heatmap CSVs from a run directory")
    p.add_argument("--run", required=True, help="run directory with evaluations.jsonl")
    p.add_argument("--instances", required=True, help="instances JSONL of the run")
    p.add_argument("--bins", type=int, default=10)
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("validate", help="re-check dataset invariants")
    p.add_argument("instances", help="instances JSONL")
    p.add_argument("--problems", required=True)
    p.add_argument(
        "--sample",
        type=float,
        default=0.1,
        help="fraction of instances to re-certify by execution",
    )
    p.add_argument("--seed", type=int, default=0, help="sampling seed")
    p.add_argument("--python", help="interpreter for judging (default: this one)")
    p.set_defaults(func=_cmd_validate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help/--version and 2 for usage problems;
        # usage problems are exit code 1 here.
        return 0 if exc.code in (0, None) else 1
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except InfrastructureError as exc:
        if os.environ.get("BUGCC_DEBUG"):
            raise
        print(f"bugcc: infrastructure error: {exc}", file=sys.stderr)
        return 2
    except (UsageError, DatasetError, ValueError, OSError) as exc:
        if os.environ.get("BUGCC_DEBUG"):
            raise
        print(f"bugcc: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - last-resort guard
        if os.environ.get("BUGCC_DEBUG"):
            raise
        print(f"bugcc: unexpected {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
