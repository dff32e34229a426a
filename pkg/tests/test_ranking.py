from __future__ import annotations

import pytest
from oracles import oracle_select_count

from atlasforge.errors import BadFraction, EmptyInput
from atlasforge.ranking import (
    PriorityEntry,
    build_priority_list,
    from_jsonl,
    select_count,
    select_top,
    to_jsonl,
)


def test_descending_size_with_lexicographic_ties():
    sizes = {"vol-b": 4.0, "vol-a": 4.0, "vol-c": 9.0, "vol-d": 1.0}
    entries = build_priority_list(sizes, 7)
    assert [e.volume_id for e in entries] == ["vol-c", "vol-a", "vol-b", "vol-d"]
    assert [e.rank for e in entries] == [1, 2, 3, 4]
    assert all(e.class_id == 7 for e in entries)


def test_empty_input_rejected():
    with pytest.raises(EmptyInput):
        build_priority_list({}, 7)


def test_selection_counts_match_ceil_oracle():
    for pool, expected in [(1, 1), (4, 1), (19, 1), (20, 1), (100, 5)]:
        assert select_count(pool, 0.05) == expected
        assert oracle_select_count(pool, 0.05) == expected
    for pool in range(0, 200):
        for fraction in (0.01, 0.05, 0.2, 0.5, 1.0):
            assert select_count(pool, fraction) == oracle_select_count(pool, fraction)


def test_select_top_takes_prefix_of_ranking():
    sizes = {f"vol-{i:03d}": float(i % 7) for i in range(40)}
    entries = build_priority_list(sizes, 3)
    sel = select_top(entries, 0.1)
    assert sel.class_id == 3
    assert len(sel.selected) == 4  # ceil(0.1 * 40)
    assert list(sel.selected) == [e.volume_id for e in entries[:4]]


def test_subset_monotonicity_over_fractions():
    sizes = {f"v{i:02d}": float((i * 13) % 11) for i in range(30)}
    entries = build_priority_list(sizes, 1)
    previous: tuple[str, ...] = ()
    for fraction in (0.05, 0.1, 0.2, 0.5, 1.0):
        chosen = select_top(entries, fraction).selected
        assert set(previous) <= set(chosen)
        previous = chosen
    assert len(select_top(entries, 1.0).selected) == 30


def test_fraction_validation():
    entries = build_priority_list({"a": 1.0}, 1)
    for bad in (0.0, -0.1, 1.5):
        with pytest.raises(BadFraction):
            select_top(entries, bad)
    with pytest.raises(BadFraction):
        select_count(10, 0.0)


def test_selection_is_deterministic():
    sizes = {f"vol-{i}": 2.5 for i in range(10)}  # all tied
    first = select_top(build_priority_list(sizes, 2), 0.3)
    second = select_top(build_priority_list(dict(reversed(list(sizes.items()))), 2), 0.3)
    assert first.selected == second.selected


def test_jsonl_round_trip():
    sizes = {"vol-a": 3.25, "vol-b": 1.0}
    entries = build_priority_list(sizes, 9)
    text = to_jsonl(entries, selected=frozenset({"vol-a"}))
    lines = text.strip().splitlines()
    assert len(lines) == 2
    assert from_jsonl(text) == list(entries)


def test_empty_selection_on_empty_entries():
    sel = select_top((), 0.05)
    assert sel.selected == ()


def test_single_entry_pool_selects_it():
    entries = (PriorityEntry("only", 4, 0.0, 1),)
    assert select_top(entries, 0.05).selected == ("only",)
