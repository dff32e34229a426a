"""The 25-structure label registry and label/mask conversions.

Class ids are frozen small integers (1..25); 0 is background everywhere and
never a class id. Each class belongs to exactly one anatomical group. The
registry is identical in every process: its canonical JSON serialization has
a fixed sha256 recorded here and asserted by the test suite.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, MaskConflict, NonBinaryInput, UnknownClass
from .volgrid import VoxelGrid

GROUPS = (
    "gastrointestinal",
    "abdominal-other",
    "thorax",
    "vascular",
    "skeletal",
)


@dataclass(frozen=True)
class ClassDef:
    id: int
    name: str
    group: str


_TABLE: tuple[tuple[int, str, str], ...] = (
    (1, "esophagus", "gastrointestinal"),
    (2, "stomach", "gastrointestinal"),
    (3, "duodenum", "gastrointestinal"),
    (4, "intestine", "gastrointestinal"),
    (5, "colon", "gastrointestinal"),
    (6, "rectum", "gastrointestinal"),
    (7, "liver", "abdominal-other"),
    (8, "gall_bladder", "abdominal-other"),
    (9, "spleen", "abdominal-other"),
    (10, "pancreas", "abdominal-other"),
    (11, "kidney_left", "abdominal-other"),
    (12, "kidney_right", "abdominal-other"),
    (13, "adrenal_gland_left", "abdominal-other"),
    (14, "adrenal_gland_right", "abdominal-other"),
    (15, "bladder", "abdominal-other"),
    (16, "prostate", "abdominal-other"),
    (17, "lung_left", "thorax"),
    (18, "lung_right", "thorax"),
    (19, "aorta", "vascular"),
    (20, "celiac_trunk", "vascular"),
    (21, "postcava", "vascular"),
    (22, "portal_and_splenic_vein", "vascular"),
    (23, "hepatic_vessel", "vascular"),
    (24, "femur_left", "skeletal"),
    (25, "femur_right", "skeletal"),
)

REGISTRY: tuple[ClassDef, ...] = tuple(ClassDef(*row) for row in _TABLE)
_BY_ID = {c.id: c for c in REGISTRY}

# sha256 of registry_json(); must never drift between builds
REGISTRY_SHA256 = "1809857b727d23087ac15726a2640c44dc450fdbe0e01c8b68e3039a43fc204d"


def class_by_id(class_id: int) -> ClassDef:
    try:
        return _BY_ID[class_id]
    except KeyError:
        raise UnknownClass(f"class id {class_id} not registered (1..25)") from None


def class_ids() -> tuple[int, ...]:
    return tuple(c.id for c in REGISTRY)


def classes_in_group(group: str) -> tuple[ClassDef, ...]:
    if group not in GROUPS:
        raise UnknownClass(f"unknown group {group!r}; one of {GROUPS}")
    return tuple(c for c in REGISTRY if c.group == group)


def registry_json() -> str:
    """Canonical JSON export: array of {id, name, group}, id order, compact."""
    rows = [{"id": c.id, "name": c.name, "group": c.group} for c in REGISTRY]
    return json.dumps(rows, separators=(",", ":"), sort_keys=True)


def registry_sha256() -> str:
    return hashlib.sha256(registry_json().encode("ascii")).hexdigest()


@dataclass(frozen=True, eq=False)
class LabelGrid:
    """A uint8 grid whose every voxel is 0 (background) or a registered id."""

    grid: VoxelGrid

    def __post_init__(self) -> None:
        if self.grid.dtype != np.dtype(np.uint8):
            raise ValueError("label grids must be uint8")
        present = np.unique(self.grid.values)
        bad = [int(v) for v in present if v != 0 and int(v) not in _BY_ID]
        if bad:
            raise UnknownClass(f"label grid contains unregistered ids {bad}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.grid.dims

    @property
    def spacing(self) -> tuple[float, float, float]:
        return self.grid.spacing

    def present_ids(self) -> tuple[int, ...]:
        present = np.unique(self.grid.values)
        return tuple(int(v) for v in present if v != 0)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LabelGrid):
            return NotImplemented
        return self.grid == other.grid

    __hash__ = None  # type: ignore[assignment]


def to_binary_mask(labels: LabelGrid, class_id: int) -> VoxelGrid:
    """uint8 grid with 1 where the label equals ``class_id``, else 0."""
    class_by_id(class_id)
    mask = (labels.grid.values == class_id).astype(np.uint8)
    return VoxelGrid(mask, labels.spacing)


def from_binary_masks(masks: dict[int, VoxelGrid]) -> LabelGrid:
    """Merge per-class binary masks into one label grid.

    Inverse of :func:`to_binary_mask` over the present classes. Masks must
    share geometry and be disjoint; overlapping claims raise MaskConflict.
    """
    if not masks:
        raise ValueError("need at least one mask")
    items = sorted(masks.items())
    first = items[0][1]
    out = np.zeros(first.dims, dtype=np.uint8)
    claimed = np.zeros(first.dims, dtype=bool)
    for class_id, mask in items:
        class_by_id(class_id)
        if mask.dims != first.dims or mask.spacing != first.spacing:
            raise DimMismatch(
                f"mask for class {class_id}: dims/spacing {mask.dims}/{mask.spacing}"
                f" vs {first.dims}/{first.spacing}"
            )
        on = mask.values != 0
        if not np.array_equal(mask.values[on], np.ones(int(on.sum()), dtype=mask.values.dtype)):
            raise NonBinaryInput(f"mask for class {class_id} contains values other than 0/1")
        both = claimed & on
        if both.any():
            x, y, z = (int(i[0]) for i in np.nonzero(both))
            raise MaskConflict(f"voxel ({x}, {y}, {z}) claimed by class {class_id} and an earlier class")
        claimed |= on
        out[on] = class_id
    return LabelGrid(VoxelGrid(out, first.spacing))
