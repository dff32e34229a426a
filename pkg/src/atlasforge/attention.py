"""Per-voxel attention criteria over an ensemble of soft predictions.

Given N >= 2 architectures that each emit a per-class soft map in [0, 1],
three criteria are computed per voxel and class, then summed:

* inconsistency: population standard deviation of the N soft values,
  sqrt(sum((p - mean)^2) / N). Range [0, 0.5].
* uncertainty: mean over architectures of -p * ln(p), with any p < 1e-12
  contributing exactly 0. Range [0, 1/e].
* overlap: 1.0 iff some architecture gives this class a value strictly above
  the threshold while (scope "same-arch", the default) the same architecture
  also gives some other class a value strictly above it at that voxel; scope
  "any-arch" lets the conflicting class come from any architecture. Range
  {0, 1}.

attention = inconsistency + uncertainty + overlap, so each voxel lies in
[0, 1.5 + 1/e ~ 1.8679]. The attention size of a map is the sum over voxels,
accumulated in 64-bit; with ``spacing_weighted`` it is additionally scaled by
the voxel volume in cubic millimetres.

Unanimous hard (one-hot) ensembles score exactly 0 on all three criteria:
identical values have zero spread, values in {0, 1} have zero entropy term,
and mutually exclusive hard maps cannot put two classes above threshold.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Iterator, Mapping
from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, TooFewArchitectures, UnknownClass
from .volgrid import VoxelGrid

LOG_CLAMP = 1e-12
DEFAULT_THRESHOLD = 0.5
OVERLAP_SCOPES = ("same-arch", "any-arch")

# per-voxel attention can never exceed this (0.5 + 1/e + 1)
ATTENTION_CEIL = 0.5 + math.exp(-1.0) + 1.0

GridSource = VoxelGrid | Callable[[], VoxelGrid]


@dataclass(frozen=True)
class EnsemblePrediction:
    """Per-class soft predictions for one volume from N architectures.

    ``sources`` maps architecture tag -> class id -> grid (or a zero-argument
    loader returning one, so whole ensembles need not sit in memory). Every
    architecture must cover the same class set; every grid must be float32 in
    [0, 1] with identical dims and spacing.
    """

    volume_id: str
    sources: Mapping[str, Mapping[int, GridSource]]

    def __post_init__(self) -> None:
        if len(self.sources) < 2:
            raise TooFewArchitectures(
                f"volume {self.volume_id}: {len(self.sources)} architecture(s), need >= 2"
            )
        class_sets = {arch: frozenset(by_class) for arch, by_class in self.sources.items()}
        first = next(iter(class_sets.values()))
        if not first:
            raise UnknownClass(f"volume {self.volume_id}: empty class set")
        for arch, cs in class_sets.items():
            if cs != first:
                raise UnknownClass(
                    f"volume {self.volume_id}: architecture {arch!r} covers {sorted(cs)}"
                    f" but expected {sorted(first)}"
                )

    @property
    def architectures(self) -> tuple[str, ...]:
        return tuple(sorted(self.sources))

    @property
    def class_ids(self) -> tuple[int, ...]:
        return tuple(sorted(next(iter(self.sources.values()))))

    def grid(self, arch: str, class_id: int) -> VoxelGrid:
        """Materialize one soft map, validating range and geometry."""
        try:
            source = self.sources[arch][class_id]
        except KeyError:
            raise UnknownClass(
                f"volume {self.volume_id}: no prediction for arch {arch!r} class {class_id}"
            ) from None
        grid = source() if callable(source) else source
        if grid.dtype != np.dtype(np.float32):
            raise ValueError(f"soft map {arch}/{class_id} must be float32")
        lo, hi = float(grid.values.min()), float(grid.values.max())
        if not (0.0 <= lo and hi <= 1.0):
            raise ValueError(
                f"soft map {arch}/{class_id} outside [0, 1]: min {lo}, max {hi}"
            )
        return grid


@dataclass(frozen=True)
class AttentionMap:
    """The three criteria and their sum for one (volume, class)."""

    volume_id: str
    class_id: int
    inconsistency: VoxelGrid
    uncertainty: VoxelGrid
    overlap: VoxelGrid
    attention: VoxelGrid
    attention_size: float
    component_sizes: dict[str, float]
    threshold: float
    overlap_scope: str
    spacing_weighted: bool

    def to_record(self) -> dict:
        """JSON-ready size record for ranking and provenance."""
        return {
            "volume": self.volume_id,
            "class": self.class_id,
            "size": self.attention_size,
            "components": dict(self.component_sizes),
            "threshold": self.threshold,
            "overlap_scope": self.overlap_scope,
            "spacing_weighted": self.spacing_weighted,
            "log_base": "e",
        }


def _stack(ens: EnsemblePrediction, class_id: int) -> tuple[np.ndarray, VoxelGrid]:
    """float64 stack of shape (N, nx, ny, nz) for one class, plus a reference grid."""
    grids = [ens.grid(arch, class_id) for arch in ens.architectures]
    ref = grids[0]
    for g in grids[1:]:
        if g.dims != ref.dims or g.spacing != ref.spacing:
            raise DimMismatch(
                f"volume {ens.volume_id} class {class_id}: grids disagree on dims/spacing"
            )
    return np.stack([g.values.astype(np.float64) for g in grids]), ref


def _entropy_term(stack: np.ndarray) -> np.ndarray:
    """Mean over architectures of -p*ln(p), tiny values clamped to zero."""
    safe = np.where(stack < LOG_CLAMP, 1.0, stack)  # ln(1) = 0 stands in for clamped terms
    return np.mean(-safe * np.log(safe), axis=0)


def _exceed_counts(ens: EnsemblePrediction, threshold: float) -> dict[str, np.ndarray]:
    """Per architecture: how many classes sit strictly above threshold per voxel."""
    counts: dict[str, np.ndarray] = {}
    for arch in ens.architectures:
        total = None
        for class_id in ens.class_ids:
            exceeds = ens.grid(arch, class_id).values > threshold
            total = exceeds.astype(np.uint16) if total is None else total + exceeds
        counts[arch] = total
    return counts


def _overlap_flags(
    ens: EnsemblePrediction,
    class_id: int,
    threshold: float,
    scope: str,
    counts: dict[str, np.ndarray],
) -> np.ndarray:
    """Boolean overlap flag per voxel for one class."""
    if scope == "same-arch":
        flag = None
        for arch in ens.architectures:
            own = ens.grid(arch, class_id).values > threshold
            other = counts[arch] - own.astype(np.uint16) >= 1
            both = own & other
            flag = both if flag is None else flag | both
        return flag
    # any-arch: the conflicting exceedance may come from a different architecture
    own_any = None
    other_any = None
    for arch in ens.architectures:
        own = ens.grid(arch, class_id).values > threshold
        other = counts[arch] - own.astype(np.uint16) >= 1
        own_any = own if own_any is None else own_any | own
        other_any = other if other_any is None else other_any | other
    return own_any & other_any


def _voxel_volume_mm3(grid: VoxelGrid) -> float:
    sx, sy, sz = grid.spacing
    return sx * sy * sz


def grid_sum(grid: VoxelGrid) -> float:
    """Sum of all voxels accumulated in 64-bit (numpy pairwise summation)."""
    return float(np.sum(grid.values, dtype=np.float64))


def attention_map(
    ens: EnsemblePrediction,
    class_id: int,
    *,
    threshold: float = DEFAULT_THRESHOLD,
    overlap_scope: str = "same-arch",
    spacing_weighted: bool = False,
) -> AttentionMap:
    """Compute the criteria for one class of one volume."""
    if overlap_scope not in OVERLAP_SCOPES:
        raise ValueError(f"overlap_scope {overlap_scope!r}; one of {OVERLAP_SCOPES}")
    if class_id not in ens.class_ids:
        raise UnknownClass(f"volume {ens.volume_id}: class {class_id} not predicted")
    counts = _exceed_counts(ens, threshold)
    return _finish_map(ens, class_id, threshold, overlap_scope, spacing_weighted, counts)


def attention_maps(
    ens: EnsemblePrediction,
    *,
    threshold: float = DEFAULT_THRESHOLD,
    overlap_scope: str = "same-arch",
    spacing_weighted: bool = False,
) -> Iterator[AttentionMap]:
    """Yield one map per class, sharing the per-architecture exceed counts.

    Peak working set is the N per-architecture count grids plus one class's
    soft maps; maps already yielded are not retained here.
    """
    if overlap_scope not in OVERLAP_SCOPES:
        raise ValueError(f"overlap_scope {overlap_scope!r}; one of {OVERLAP_SCOPES}")
    counts = _exceed_counts(ens, threshold)
    for class_id in ens.class_ids:
        yield _finish_map(ens, class_id, threshold, overlap_scope, spacing_weighted, counts)


def _finish_map(
    ens: EnsemblePrediction,
    class_id: int,
    threshold: float,
    scope: str,
    spacing_weighted: bool,
    counts: dict[str, np.ndarray],
) -> AttentionMap:
    stack, ref = _stack(ens, class_id)
    n = stack.shape[0]
    mean = stack.mean(axis=0)
    inconsistency = np.sqrt(np.sum((stack - mean) ** 2, axis=0) / n)
    uncertainty = _entropy_term(stack)
    overlap = _overlap_flags(ens, class_id, threshold, scope, counts).astype(np.float64)
    attention = inconsistency + uncertainty + overlap

    spacing = ref.spacing

    def as_grid(a: np.ndarray) -> VoxelGrid:
        return VoxelGrid(a.astype(np.float32), spacing)

    inc_g, unc_g, ovl_g, att_g = map(as_grid, (inconsistency, uncertainty, overlap, attention))

    weight = _voxel_volume_mm3(ref) if spacing_weighted else 1.0
    sizes = {
        "inconsistency": grid_sum(inc_g) * weight,
        "uncertainty": grid_sum(unc_g) * weight,
        "overlap": grid_sum(ovl_g) * weight,
    }
    return AttentionMap(
        volume_id=ens.volume_id,
        class_id=class_id,
        inconsistency=inc_g,
        uncertainty=unc_g,
        overlap=ovl_g,
        attention=att_g,
        attention_size=grid_sum(att_g) * weight,
        component_sizes=sizes,
        threshold=threshold,
        overlap_scope=scope,
        spacing_weighted=spacing_weighted,
    )


def attention_sizes(
    ens: EnsemblePrediction,
    *,
    threshold: float = DEFAULT_THRESHOLD,
    overlap_scope: str = "same-arch",
    spacing_weighted: bool = False,
) -> dict[int, float]:
    """class id -> attention size, for ranking."""
    return {
        m.class_id: m.attention_size
        for m in attention_maps(
            ens,
            threshold=threshold,
            overlap_scope=overlap_scope,
            spacing_weighted=spacing_weighted,
        )
    }
