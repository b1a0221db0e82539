"""pass@k estimation, macro-averaging, and location-normalized aggregation."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

from .core import BCCInstance, EvaluationRecord


def pass_at_k(n: int, c: int, k: int) -> float:
    """Unbiased pass@k estimate: 1 - C(n-c, k) / C(n, k).

    Computed in the stable product form prod_{i=n-c+1..n} (1 - k/i) so large
    binomials never materialize.
    """
    if not (0 <= c <= n):
        raise ValueError(f"need 0 <= c <= n, got c={c}, n={n}")
    if not (1 <= k <= n):
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    if c == 0:
        return 0.0
    if n - c < k:
        return 1.0
    prod = 1.0
    for i in range(n - c + 1, n + 1):
        prod *= 1.0 - k / i
    return 1.0 - prod


def macro_average(
    records: Iterable[EvaluationRecord],
    problem_of_instance: Mapping[str, str],
    k: int,
) -> float:
    """Mean of per-problem means of pass@k.

    Averaging within each problem first keeps instance-rich problems from
    dominating the corpus-level number.
    """
    per_problem: dict[str, list[float]] = {}
    for record in records:
        if k not in record.pass_at_k:
            raise ValueError(
                f"{record.instance_id}: record has no pass@{k} entry"
            )
        problem_id = problem_of_instance.get(record.instance_id)
        if problem_id is None:
            raise ValueError(f"{record.instance_id}: unknown instance")
        per_problem.setdefault(problem_id, []).append(record.pass_at_k[k])
    if not per_problem:
        raise ValueError("macro_average over empty record set")
    means = [sum(vs) / len(vs) for vs in per_problem.values()]
    return sum(means) / len(means)


@dataclass(frozen=True)
class LocationCell:
    """One heatmap cell: mean pass@1 over instances whose normalized bug and
    split locations fall in this (bug_bin, split_bin) rectangle."""

    bug_loc_bin: int
    split_loc_bin: int
    bug_loc_edges: tuple[float, float]
    split_loc_edges: tuple[float, float]
    mean_pass_at_1: float
    count: int


def bin_index(x: float, bins: int) -> int:
    """Right-closed binning of [0, 1]: (j/bins, (j+1)/bins] -> j, 0 -> bin 0."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    if x <= 0.0:
        return 0
    return min(bins - 1, math.ceil(x * bins) - 1)


def location_heatmap(
    records: Iterable[EvaluationRecord],
    instances: Iterable[BCCInstance],
    bins: int = 10,
) -> list[LocationCell]:
    """Aggregate per-instance pass@1 into a bug-location x split-location grid.

    Locations are normalized as line / solution_lines into (0, 1]. Cells with
    no instances are absent from the result, never zero-filled.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    by_id = {inst.instance_id: inst for inst in instances}
    sums: dict[tuple[int, int], list[float]] = {}
    for record in records:
        inst = by_id.get(record.instance_id)
        if inst is None:
            raise ValueError(f"{record.instance_id}: unknown instance")
        if 1 not in record.pass_at_k:
            raise ValueError(f"{record.instance_id}: record has no pass@1 entry")
        bug_loc = inst.bug_line / inst.solution_lines
        split_loc = inst.split_line / inst.solution_lines
        key = (bin_index(bug_loc, bins), bin_index(split_loc, bins))
        sums.setdefault(key, []).append(record.pass_at_k[1])
    cells = []
    for (bug_bin, split_bin) in sorted(sums):
        values = sums[(bug_bin, split_bin)]
        cells.append(
            LocationCell(
                bug_loc_bin=bug_bin,
                split_loc_bin=split_bin,
                bug_loc_edges=(bug_bin / bins, (bug_bin + 1) / bins),
                split_loc_edges=(split_bin / bins, (split_bin + 1) / bins),
                mean_pass_at_1=sum(values) / len(values),
                count=len(values),
            )
        )
    return cells
