"""pass@k against a brute-force oracle, macro-averaging, and heatmap binning."""
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bugcc.core import BCCInstance, EvaluationRecord, MutationSite
from bugcc.metrics import bin_index, location_heatmap, macro_average, pass_at_k

from oracles import brute_force_pass_at_k


def _record(instance_id, k_values, pipeline="naive", variant="buggy", n=10, c=None):
    if c is None:
        c = round(k_values.get(1, 0.0) * n)
    return EvaluationRecord(
        instance_id=instance_id,
        pipeline=pipeline,
        variant=variant,
        n=n,
        num_passing=c,
        pass_at_k=k_values,
    )


# --- pass@k ------------------------------------------------------------------

def test_pass_at_k_matches_oracle_small_grid():
    for n in range(1, 9):
        for c in range(n + 1):
            for k in range(1, n + 1):
                got = pass_at_k(n, c, k)
                want = brute_force_pass_at_k(n, c, k)
                assert math.isclose(got, want, rel_tol=0, abs_tol=1e-12), (n, c, k)


def test_pass_at_k_guards():
    assert pass_at_k(10, 0, 1) == 0.0
    assert pass_at_k(10, 8, 5) == 1.0  # n - c < k forces a hit
    assert pass_at_k(5, 5, 1) == 1.0


def test_pass_at_k_bad_arguments():
    with pytest.raises(ValueError):
        pass_at_k(5, 6, 1)
    with pytest.raises(ValueError):
        pass_at_k(5, -1, 1)
    with pytest.raises(ValueError):
        pass_at_k(5, 3, 0)
    with pytest.raises(ValueError):
        pass_at_k(5, 3, 6)


@given(st.integers(min_value=1, max_value=40), st.data())
@settings(max_examples=100, deadline=None)
def test_pass_at_k_monotone(n, data):
    c = data.draw(st.integers(min_value=0, max_value=n))
    k = data.draw(st.integers(min_value=1, max_value=n))
    value = pass_at_k(n, c, k)
    assert 0.0 <= value <= 1.0
    if c < n:
        assert pass_at_k(n, c + 1, k) >= value
    if k < n:
        assert pass_at_k(n, c, k + 1) >= value


# --- macro average -----------------------------------------------------------

def test_macro_average_per_problem_means():
    # problem A has two instances, problem B one; macro averaging weighs the
    # problems equally rather than the instances.
    records = [
        _record("a1", {1: 1.0}),
        _record("a2", {1: 0.0}),
        _record("b1", {1: 0.0}),
    ]
    owner = {"a1": "A", "a2": "A", "b1": "B"}
    assert macro_average(records, owner, 1) == pytest.approx(0.25)


def test_macro_average_missing_k():
    records = [_record("a1", {1: 1.0})]
    with pytest.raises(ValueError):
        macro_average(records, {"a1": "A"}, 10)


def test_macro_average_unknown_instance():
    records = [_record("zz", {1: 1.0})]
    with pytest.raises(ValueError):
        macro_average(records, {"a1": "A"}, 1)


def test_macro_average_empty():
    with pytest.raises(ValueError):
        macro_average([], {}, 1)


# --- binning ------------------------------------------------------------------

def test_bin_index_edges():
    assert bin_index(0.0, 10) == 0
    assert bin_index(-0.5, 10) == 0
    assert bin_index(0.05, 10) == 0
    assert bin_index(0.1, 10) == 0  # right-closed bins
    assert bin_index(0.1000001, 10) == 1
    assert bin_index(1.0, 10) == 9
    assert bin_index(2.0, 10) == 9


@given(st.floats(min_value=-1, max_value=2, allow_nan=False), st.integers(min_value=1, max_value=30))
@settings(max_examples=120, deadline=None)
def test_bin_index_bounds(x, bins):
    idx = bin_index(x, bins)
    assert 0 <= idx < bins
    if 0 < x <= 1:
        # value sits inside its right-closed bin
        lo, hi = idx / bins, (idx + 1) / bins
        assert lo < x + 1e-12 and x <= hi + 1e-12


# --- heatmap -------------------------------------------------------------------

def _site(line=1):
    return MutationSite(byte_span=(0, 1), original_op="+", flipped_op="-", line=line)


def _heat_instance(instance_id, bug_line, split_line, solution_lines):
    return BCCInstance(
        instance_id=instance_id,
        problem_id="p",
        origin="synthetic",
        clean_prefix="def f():\n    x = 1\n",
        buggy_prefix="def f():\n    x = 2\n",
        bug_line=bug_line,
        split_line=split_line,
        solution_lines=solution_lines,
        edit_descriptor=_site(),
    )


def test_location_heatmap_cells():
    instances = [
        _heat_instance("i1", 1, 1, 10),    # bins (0, 0)
        _heat_instance("i2", 10, 10, 11),  # high bins
        _heat_instance("i3", 1, 1, 10),    # same cell as i1
    ]
    records = [
        _record("i1", {1: 1.0}),
        _record("i3", {1: 0.0}),
        _record("i2", {1: 0.5}, n=10, c=5),
    ]
    cells = location_heatmap(records, instances, bins=10)
    by_key = {(c.bug_loc_bin, c.split_loc_bin): c for c in cells}
    assert by_key[(0, 0)].count == 2
    assert by_key[(0, 0)].mean_pass_at_1 == pytest.approx(0.5)
    hi = bin_index(10 / 11, 10)
    assert by_key[(hi, hi)].count == 1
    # empty cells are simply absent
    assert len(cells) == 2


def test_location_heatmap_requires_pass_at_1():
    instances = [_heat_instance("i1", 1, 1, 10)]
    with pytest.raises(ValueError):
        location_heatmap([_record("i1", {10: 1.0}, n=10, c=0)], instances)


def test_location_heatmap_edges_consistent():
    instances = [_heat_instance("i1", 5, 7, 10)]
    (cell,) = location_heatmap([_record("i1", {1: 0.0})], instances, bins=4)
    lo, hi = cell.bug_loc_edges
    assert lo == pytest.approx(cell.bug_loc_bin / 4)
    assert hi == pytest.approx((cell.bug_loc_bin + 1) / 4)
