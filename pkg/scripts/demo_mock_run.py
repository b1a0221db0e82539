"""Self-contained demo: build a tiny synthetic set, then run all four
pipelines against a generated mock endpoint and print the summary table.

Everything lands in --out (default ./demo_run): the problem and instance
files, the mock fixture, the endpoint config, and the run directory with
manifest, completions, evaluations, summary.csv, and heatmap.csv.
"""
import argparse
import json
import math
import sys
from pathlib import Path

from bugcc.cli import main as bugcc_main
from bugcc.core import Problem, TestSuite, body_line_from_instance, write_dataset
from bugcc.mutator import build_synthetic
from bugcc.runner import judge

ADD_HEADER = 'def add_one(x):\n    """Add one to x."""\n'
ADD_BODY = "    y = x + 1\n    return y\n"
ADD_CHECK = (
    "def check(candidate):\n"
    "    assert candidate(1) == 2\n"
    "    assert candidate(-5) == -4\n"
)

SUM_HEADER = 'def below_zero(operations):\n    """True when a running sum of operations dips below zero."""\n'
SUM_BODY = (
    "    balance = 0\n"
    "    for op in operations:\n"
    "        balance += op\n"
    "        if balance < 0:\n"
    "            return True\n"
    "    return False\n"
)
SUM_CHECK = (
    "def check(candidate):\n"
    "    assert candidate([1, 2, 3]) == False\n"
    "    assert candidate([1, 2, -4, 5]) == True\n"
)

GARBAGE = "    raise RuntimeError('wrong')\n"


def demo_problems():
    return [
        Problem(
            problem_id="demo/add_one",
            statement="Implement add_one.",
            judge_mode="function_check",
            prompt_header=ADD_HEADER,
            tests=TestSuite(check_program=ADD_CHECK, entry_point="add_one", time_limit_s=5.0),
            reference_solution=ADD_BODY,
        ),
        Problem(
            problem_id="demo/below_zero",
            statement="Implement below_zero.",
            judge_mode="function_check",
            prompt_header=SUM_HEADER,
            tests=TestSuite(check_program=SUM_CHECK, entry_point="below_zero", time_limit_s=5.0),
            reference_solution=SUM_BODY,
        ),
    ]


def oracle_score_tokens(prompt, marked_line, p1, p2):
    """One wire-format token per line; only the marked line has a gap."""
    tokens = []
    offset = 0
    for lineno, text in enumerate(prompt.splitlines(keepends=True), start=1):
        if lineno == marked_line:
            tokens.append(
                {
                    "text": text,
                    "offset": offset,
                    "logprob": math.log(p1),
                    "top_logprob": math.log(p2),
                    "top_text": "<argmax>",
                }
            )
        else:
            tokens.append(
                {"text": text, "offset": offset, "logprob": 0.0, "top_logprob": 0.0}
            )
        offset += len(text)
    return tokens


def build_fixture(problems, instances):
    """A mock endpoint that knows the canonical answers: clean prefixes get
    the real suffix, buggy ones get garbage, scores point at the bug line,
    infills restore the clean line, and repair maps bad programs to good."""
    problem_map = {p.problem_id: p for p in problems}
    completions, scores, infills = {}, {}, {}
    for instance in instances:
        problem = problem_map[instance.problem_id]
        body_lines = problem.reference_solution.splitlines()
        split_body = body_line_from_instance(problem, instance.split_line)
        bug_body = body_line_from_instance(problem, instance.bug_line)
        suffix = "\n".join(body_lines[split_body:]) + "\n"
        full_program = problem.prompt_header + problem.reference_solution

        completions[instance.clean_prefix] = suffix
        completions[instance.buggy_prefix] = GARBAGE
        completions[problem.prompt_header] = problem.reference_solution
        completions[instance.buggy_prefix + GARBAGE] = full_program
        completions[full_program] = full_program
        completions[instance.clean_prefix + suffix] = instance.clean_prefix + suffix

        scores[instance.buggy_prefix] = oracle_score_tokens(
            instance.buggy_prefix, instance.bug_line, 0.01, 0.95
        )
        scores[instance.clean_prefix] = oracle_score_tokens(
            instance.clean_prefix, instance.bug_line, 1.0, 1.0
        )

        # bare-prefix key so the same mask answers every split of the site,
        # whatever suffix follows the masked line
        masked_prefix = problem.prompt_header + "".join(
            line + "\n" for line in instance.buggy_prefix[len(problem.prompt_header):].splitlines()[: bug_body - 1]
        )
        infills[masked_prefix] = body_lines[bug_body - 1]
    return {"completions": completions, "scores": scores, "infills": infills}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="demo_run", help="working directory")
    parser.add_argument("--n", type=int, default=10, help="samples per instance")
    parser.add_argument("--k", default="1,10", help="pass@k values")
    args = parser.parse_args(argv)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    problems = demo_problems()

    print("certifying operator flips by execution...")
    report = {}
    instances = build_synthetic(problems, judge, jobs=2, report_out=report)
    print(
        f"  {report['instances_total']} instances over "
        f"{report['problems_with_instances']} problems"
    )

    problems_path = out / "problems.jsonl"
    instances_path = out / "instances.jsonl"
    write_dataset(problems, problems_path)
    write_dataset(instances, instances_path)
    fixture_path = out / "mock_fixture.json"
    fixture_path.write_text(
        json.dumps(build_fixture(problems, instances), indent=2), encoding="utf-8"
    )
    config_path = out / "endpoint.toml"
    config_path.write_text(
        "\n".join(
            f'[endpoints.{name}]\nkind = "mock"\nfixture = "mock_fixture.json"\n'
            f'capabilities = ["{capability}"]\n'
            for name, capability in (
                ("completion", "complete"),
                ("score", "score"),
                ("infill", "infill"),
                ("repair", "complete"),
            )
        ),
        encoding="utf-8",
    )

    run_dir = out / "run"
    print(f"running all pipelines into {run_dir} ...")
    return bugcc_main(
        [
            "run",
            "--instances", str(instances_path),
            "--problems", str(problems_path),
            "--endpoint", str(config_path),
            "--out", str(run_dir),
            "--pipeline", "all",
            "--variant", "both",
            "--n", str(args.n),
            "--k", args.k,
        ]
    )


if __name__ == "__main__":
    sys.exit(main())
