"""Rebuild the synthetic dataset from a HumanEval problem file and diff the
per-problem instance counts against the published list (1904 instances over
108 problems).

The problem file is not bundled; download the public HumanEval release
(HumanEval.jsonl.gz) separately and pass its path. Expect the build to spend
a few minutes certifying mutants by execution.
"""
import argparse
import sys

from bugcc.cli import load_problems
from bugcc.mutator import build_synthetic
from bugcc.core import write_dataset
from bugcc.runner import judge

PUBLISHED_PER_PROBLEM_COUNTS = (
    9, 31, 0, 5, 1, 0, 13, 0, 3, 0, 1, 4, 1, 0, 1, 0, 0, 0, 8, 0, 23, 0, 0,
    0, 1, 28, 0, 0, 0, 0, 0, 10, 63, 0, 0, 2, 14, 2, 0, 38, 6, 0, 0, 7, 5,
    0, 14, 3, 6, 1, 0, 0, 2, 0, 0, 6, 16, 4, 2, 27, 0, 16, 0, 12, 5, 3, 1,
    0, 6, 21, 0, 51, 26, 7, 14, 13, 12, 0, 1, 0, 22, 180, 12, 1, 0, 0, 0, 1,
    0, 9, 0, 0, 18, 2, 32, 57, 5, 0, 1, 47, 0, 5, 12, 8, 2, 0, 39, 23, 8,
    16, 22, 18, 0, 10, 16, 0, 0, 5, 15, 34, 4, 0, 0, 37, 52, 0, 17, 31, 1,
    133, 29, 14, 21, 1, 0, 11, 3, 1, 0, 6, 174, 20, 14, 15, 13, 8, 6, 35,
    12, 2, 11, 0, 0, 18, 16, 8, 6, 0, 0, 7, 2, 11, 0, 0,
)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("problems", help="HumanEval problem file (.jsonl or .jsonl.gz)")
    parser.add_argument("--jobs", type=int, default=8, help="parallel certification runs")
    parser.add_argument("--out", help="also write the instances JSONL here")
    args = parser.parse_args(argv)

    problems = load_problems(args.problems)
    print(f"loaded {len(problems)} problems; certifying operator flips...")
    report = {}
    instances = build_synthetic(problems, judge, jobs=args.jobs, report_out=report)
    if args.out:
        write_dataset(instances, args.out)
        print(f"wrote {len(instances)} instances -> {args.out}")

    counts = report["per_problem_counts"]
    got = [
        counts.get(f"HumanEval/{i}", 0)
        for i in range(len(PUBLISHED_PER_PROBLEM_COUNTS))
    ]
    mismatches = [
        (i, want, have)
        for i, (want, have) in enumerate(zip(PUBLISHED_PER_PROBLEM_COUNTS, got))
        if want != have
    ]
    print(
        f"built {report['instances_total']} instances over "
        f"{report['problems_with_instances']} problems "
        f"(published: 1904 over 108)"
    )
    survivors = sorted(
        f"{pid} site {idx} ({op} at line {line})"
        for pid, idx, op, line in report["still_passing_sites"]
    )
    if survivors:
        print(f"{len(survivors)} flips still passed all tests and were excluded:")
        for entry in survivors:
            print(f"  {entry}")
    if mismatches:
        print(f"{len(mismatches)} per-problem count mismatches:")
        for i, want, have in mismatches:
            print(f"  HumanEval/{i}: published {want}, built {have}")
        return 1
    print("per-problem counts match the published list element-for-element")
    return 0


if __name__ == "__main__":
    sys.exit(main())
