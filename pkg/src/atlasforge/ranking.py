"""Priority ordering of volumes by attention size, and top-fraction selection.

Ordering is total and deterministic: descending attention size, ties broken
by ascending volume id. Selection takes ceil(fraction * pool) entries, never
fewer than one from a non-empty pool, so small campaigns still move.
"""

from __future__ import annotations

import json
import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass

from .errors import BadFraction, EmptyInput

DEFAULT_FRACTION = 0.05


@dataclass(frozen=True)
class PriorityEntry:
    volume_id: str
    class_id: int
    attention_size: float
    rank: int  # 1-based

    def to_record(self) -> dict:
        return {
            "volume": self.volume_id,
            "class": self.class_id,
            "size": self.attention_size,
            "rank": self.rank,
        }


@dataclass(frozen=True)
class Selection:
    class_id: int
    fraction: float
    selected: tuple[str, ...]
    iteration: int = 0

    def to_record(self) -> dict:
        return {
            "class": self.class_id,
            "fraction": self.fraction,
            "selected": list(self.selected),
            "iteration": self.iteration,
        }


def build_priority_list(
    sizes: Mapping[str, float], class_id: int
) -> tuple[PriorityEntry, ...]:
    """Rank volumes for one class. Raises EmptyInput on an empty mapping."""
    if not sizes:
        raise EmptyInput(f"no attention sizes for class {class_id}")
    ordered = sorted(sizes.items(), key=lambda kv: (-kv[1], kv[0]))
    return tuple(
        PriorityEntry(volume_id=vid, class_id=class_id, attention_size=float(size), rank=i + 1)
        for i, (vid, size) in enumerate(ordered)
    )


def select_count(pool_size: int, fraction: float) -> int:
    """ceil(fraction * pool), with a floor of one for non-empty pools."""
    validate_fraction(fraction)
    if pool_size == 0:
        return 0
    return max(1, math.ceil(fraction * pool_size))


def select_top(
    entries: Iterable[PriorityEntry],
    fraction: float = DEFAULT_FRACTION,
    *,
    iteration: int = 0,
) -> Selection:
    """Select the top ceil(fraction * len) entries of one class's list."""
    entries = tuple(entries)
    validate_fraction(fraction)
    if not entries:
        return Selection(class_id=0, fraction=fraction, selected=(), iteration=iteration)
    class_id = entries[0].class_id
    count = select_count(len(entries), fraction)
    chosen = tuple(e.volume_id for e in sorted(entries, key=lambda e: e.rank)[:count])
    return Selection(class_id=class_id, fraction=fraction, selected=chosen, iteration=iteration)


def validate_fraction(fraction: float) -> None:
    if not (isinstance(fraction, (int, float)) and 0.0 < float(fraction) <= 1.0):
        raise BadFraction(f"fraction {fraction!r} outside (0, 1]")


def to_jsonl(entries: Iterable[PriorityEntry], selected: frozenset[str] | None = None) -> str:
    """One JSON object per line, rank order; optionally marks selection."""
    lines = []
    for e in entries:
        rec = e.to_record()
        if selected is not None:
            rec["selected"] = e.volume_id in selected
        lines.append(json.dumps(rec, sort_keys=True))
    return "\n".join(lines) + ("\n" if lines else "")


def from_jsonl(text: str) -> list[PriorityEntry]:
    """Inverse of to_jsonl. Records carrying a "kind" key (provenance and
    other tool metadata) are skipped, so annotated files stay readable."""
    entries = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        rec = json.loads(line)
        if "kind" in rec:
            continue
        entries.append(
            PriorityEntry(
                volume_id=rec["volume"],
                class_id=int(rec["class"]),
                attention_size=float(rec["size"]),
                rank=int(rec["rank"]),
            )
        )
    return entries
