"""Segmentation quality metrics and the evaluation leaderboard.

DSC (Dice similarity) between binary masks; per-class evaluation over sets of
label grids; and a deterministic leaderboard ordering. The leaderboard rule
(mean DSC rounded to 4 decimals descending, then mean wall-time ascending,
untimed entries after timed ones) is a tooling convention for comparing local
runs, not a published benchmark protocol; outputs carry a note saying so.
"""

from __future__ import annotations

import json
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimMismatch,
    EmptyClassSet,
    EmptyLeaderboard,
    MissingVolume,
    NonBinaryInput,
)
from .labelspace import LabelGrid, to_binary_mask
from .volgrid import VoxelGrid

RANKING_RULE = (
    "mean DSC (rounded to 4 decimals) descending, then mean wall-time ascending;"
    " untimed entries rank after timed ones at equal DSC"
)
RANKING_NOTE = "ranking rule is a local tooling convention, not a published benchmark"


def dsc(a: VoxelGrid, b: VoxelGrid) -> float:
    """Dice coefficient 2|A∩B| / (|A| + |B|); two empty masks score 1.0."""
    if a.dims != b.dims:
        raise DimMismatch(f"dsc: dims {a.dims} vs {b.dims}")
    for name, grid in (("first", a), ("second", b)):
        vals = grid.values
        if not np.isin(vals, (0, 1)).all():
            raise NonBinaryInput(f"{name} mask contains values other than 0/1")
    av = a.values.astype(bool)
    bv = b.values.astype(bool)
    denom = int(av.sum()) + int(bv.sum())
    if denom == 0:
        return 1.0
    inter = int(np.logical_and(av, bv).sum())
    return 2.0 * inter / denom


@dataclass(frozen=True)
class MetricReport:
    """Per-class mean DSC over a volume set, plus the grand mean."""

    per_class: dict[int, float]
    mean_dsc: float
    n_volumes: int
    wall_time_s: float | None = None

    def to_record(self) -> dict:
        return {
            "per_class": {str(c): v for c, v in sorted(self.per_class.items())},
            "mean_dsc": self.mean_dsc,
            "n_volumes": self.n_volumes,
            "wall_time_s": self.wall_time_s,
        }


def evaluate(
    preds: Mapping[str, LabelGrid],
    truths: Mapping[str, LabelGrid],
    classes: Sequence[int],
    *,
    wall_time_s: float | None = None,
) -> MetricReport:
    """Average DSC per class across volumes, then across classes.

    Volume ids must match exactly between predictions and truths.
    """
    if not classes:
        raise EmptyClassSet("evaluation needs at least one class id")
    missing = sorted(set(truths) ^ set(preds))
    if missing or not preds:
        raise MissingVolume(f"prediction/truth volume sets differ: {missing or 'both empty'}")
    per_class: dict[int, float] = {}
    for class_id in classes:
        scores = []
        for vid in sorted(preds):
            pred_mask = to_binary_mask(preds[vid], class_id)
            truth_mask = to_binary_mask(truths[vid], class_id)
            scores.append(dsc(pred_mask, truth_mask))
        per_class[int(class_id)] = float(np.mean(scores))
    mean = float(np.mean(list(per_class.values())))
    return MetricReport(
        per_class=per_class,
        mean_dsc=mean,
        n_volumes=len(preds),
        wall_time_s=wall_time_s,
    )


@dataclass(frozen=True)
class LeaderboardRow:
    rank: int
    entry_id: str
    mean_dsc: float
    mean_dsc_rounded: float
    wall_time_s: float | None

    def to_record(self) -> dict:
        return {
            "rank": self.rank,
            "entry": self.entry_id,
            "mean_dsc": self.mean_dsc,
            "mean_dsc_rounded": self.mean_dsc_rounded,
            "wall_time_s": self.wall_time_s,
        }


@dataclass(frozen=True)
class Leaderboard:
    rows: tuple[LeaderboardRow, ...]
    rule: str = RANKING_RULE
    note: str = RANKING_NOTE

    def to_json(self) -> str:
        doc = {
            "rule": self.rule,
            "note": self.note,
            "rows": [r.to_record() for r in self.rows],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def to_table(self) -> str:
        """Fixed-width text table."""
        header = f"{'rank':>4}  {'entry':<24} {'mean DSC':>9}  {'time (s)':>9}"
        lines = [header, "-" * len(header)]
        for r in self.rows:
            time_s = f"{r.wall_time_s:9.3f}" if r.wall_time_s is not None else "        -"
            lines.append(f"{r.rank:>4}  {r.entry_id:<24} {r.mean_dsc:9.4f}  {time_s}")
        lines.append(f"note: {self.note}")
        return "\n".join(lines) + "\n"


def benchmark_rank(entries: Iterable[tuple[str, MetricReport]]) -> Leaderboard:
    """Order evaluation reports into a leaderboard (see module docstring)."""
    entries = list(entries)
    if not entries:
        raise EmptyLeaderboard("no entries to rank")

    def key(item: tuple[str, MetricReport]):
        entry_id, report = item
        rounded = round(report.mean_dsc, 4)
        untimed = report.wall_time_s is None
        time_s = report.wall_time_s if report.wall_time_s is not None else float("inf")
        return (-rounded, untimed, time_s, entry_id)

    rows = tuple(
        LeaderboardRow(
            rank=i + 1,
            entry_id=entry_id,
            mean_dsc=report.mean_dsc,
            mean_dsc_rounded=round(report.mean_dsc, 4),
            wall_time_s=report.wall_time_s,
        )
        for i, (entry_id, report) in enumerate(sorted(entries, key=key))
    )
    return Leaderboard(rows=rows)
