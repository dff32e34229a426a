"""Naive reference implementations used only by the test suite.

Everything here walks voxels one at a time with plain Python floats and the
math module, deliberately sharing no code with the production package, so
that agreement between the two is evidence rather than tautology.
"""

from __future__ import annotations

import math


def oracle_inconsistency(values: list[float]) -> float:
    """Population standard deviation of one voxel's ensemble values."""
    n = len(values)
    mean = sum(values) / n
    return math.sqrt(sum((v - mean) ** 2 for v in values) / n)


def oracle_uncertainty(values: list[float], clamp: float = 1e-12) -> float:
    """Mean of -p*ln(p) over the ensemble; p below clamp contributes 0."""
    total = 0.0
    for p in values:
        if p >= clamp:
            total += -p * math.log(p)
    return total / len(values)


def oracle_overlap(
    by_arch: dict[str, dict[int, float]],
    class_id: int,
    threshold: float = 0.5,
    scope: str = "same-arch",
) -> float:
    """Overlap flag for one voxel given every architecture's value per class."""
    if scope == "same-arch":
        for values in by_arch.values():
            if values[class_id] > threshold and any(
                v > threshold for c, v in values.items() if c != class_id
            ):
                return 1.0
        return 0.0
    own = any(values[class_id] > threshold for values in by_arch.values())
    other = any(
        v > threshold
        for values in by_arch.values()
        for c, v in values.items()
        if c != class_id
    )
    return 1.0 if own and other else 0.0


def oracle_attention_voxel(
    by_arch: dict[str, dict[int, float]],
    class_id: int,
    threshold: float = 0.5,
    scope: str = "same-arch",
) -> tuple[float, float, float, float]:
    """(inconsistency, uncertainty, overlap, attention) for one voxel/class."""
    values = [by_arch[a][class_id] for a in by_arch]
    inc = oracle_inconsistency(values)
    unc = oracle_uncertainty(values)
    ovl = oracle_overlap(by_arch, class_id, threshold, scope)
    return inc, unc, ovl, inc + unc + ovl


def oracle_attention_size(
    preds: dict[str, dict[int, "object"]],
    dims: tuple[int, int, int],
    class_id: int,
    threshold: float = 0.5,
    scope: str = "same-arch",
) -> float:
    """Sum of per-voxel attention over the whole grid, plain float adds.

    ``preds[arch][class_id]`` must support scalar indexing ``[x, y, z]``.
    """
    nx, ny, nz = dims
    total = 0.0
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                by_arch = {
                    arch: {c: float(by_class[c][x, y, z]) for c in by_class}
                    for arch, by_class in preds.items()
                }
                total += oracle_attention_voxel(by_arch, class_id, threshold, scope)[3]
    return total


def oracle_dsc(a, b, dims: tuple[int, int, int]) -> float:
    """Dice coefficient by explicit voxel counting; both-empty defined as 1."""
    nx, ny, nz = dims
    inter = 0
    size_a = 0
    size_b = 0
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                va = int(a[x, y, z])
                vb = int(b[x, y, z])
                size_a += va
                size_b += vb
                inter += va * vb
    if size_a + size_b == 0:
        return 1.0
    return 2.0 * inter / (size_a + size_b)


def oracle_select_count(pool_size: int, fraction: float) -> int:
    """ceil(fraction * pool), minimum 1 for a non-empty pool."""
    if pool_size == 0:
        return 0
    return max(1, math.ceil(fraction * pool_size))
