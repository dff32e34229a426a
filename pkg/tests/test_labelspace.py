from __future__ import annotations

import hashlib
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atlasforge import labelspace as ls
from atlasforge.errors import DimMismatch, MaskConflict, NonBinaryInput, UnknownClass
from atlasforge.volgrid import VoxelGrid


def test_registry_has_25_classes_with_contiguous_ids():
    assert len(ls.REGISTRY) == 25
    assert [c.id for c in ls.REGISTRY] == list(range(1, 26))
    assert len({c.name for c in ls.REGISTRY}) == 25


def test_registry_group_sizes():
    sizes = {g: len(ls.classes_in_group(g)) for g in ls.GROUPS}
    assert sizes == {
        "gastrointestinal": 6,
        "abdominal-other": 10,
        "thorax": 2,
        "vascular": 5,
        "skeletal": 2,
    }


def test_registry_spot_checks():
    assert ls.class_by_id(1).name == "esophagus"
    assert ls.class_by_id(1).group == "gastrointestinal"
    assert ls.class_by_id(7).name == "liver"
    assert ls.class_by_id(7).group == "abdominal-other"
    assert ls.class_by_id(19).name == "aorta"
    assert ls.class_by_id(19).group == "vascular"
    assert ls.class_by_id(25).name == "femur_right"
    assert ls.class_by_id(25).group == "skeletal"


def test_unknown_ids_rejected():
    with pytest.raises(UnknownClass):
        ls.class_by_id(0)
    with pytest.raises(UnknownClass):
        ls.class_by_id(26)
    with pytest.raises(UnknownClass):
        ls.classes_in_group("head")


def test_registry_hash_is_pinned():
    blob = ls.registry_json()
    assert hashlib.sha256(blob.encode("ascii")).hexdigest() == ls.REGISTRY_SHA256
    assert ls.registry_sha256() == ls.REGISTRY_SHA256
    rows = json.loads(blob)
    assert len(rows) == 25
    assert rows[0] == {"id": 1, "name": "esophagus", "group": "gastrointestinal"}


def label_grid(values) -> ls.LabelGrid:
    return ls.LabelGrid(VoxelGrid(np.asarray(values, dtype=np.uint8)))


def test_label_grid_accepts_background_and_registered_ids():
    g = label_grid([[[0, 1], [7, 25]], [[0, 0], [19, 3]]])
    assert g.present_ids() == (1, 3, 7, 19, 25)


def test_label_grid_rejects_unregistered_value():
    with pytest.raises(UnknownClass):
        label_grid([[[0, 26]]])


def test_to_binary_mask():
    g = label_grid([[[0, 7], [7, 2]]])
    mask = ls.to_binary_mask(g, 7)
    assert mask.values.tolist() == [[[0, 1], [1, 0]]]
    assert mask.dtype == np.dtype(np.uint8)
    # absent class gives the all-zero mask
    assert ls.to_binary_mask(g, 19).values.sum() == 0


def test_to_binary_mask_unknown_class():
    g = label_grid([[[0, 7]]])
    with pytest.raises(UnknownClass):
        ls.to_binary_mask(g, 99)


def test_masks_merge_back_to_labels():
    g = label_grid([[[0, 7], [19, 2]], [[2, 0], [7, 7]]])
    masks = {c: ls.to_binary_mask(g, c) for c in g.present_ids()}
    assert ls.from_binary_masks(masks) == g


def test_merge_conflict_detected():
    a = VoxelGrid(np.array([[[1, 0]]], dtype=np.uint8))
    b = VoxelGrid(np.array([[[1, 1]]], dtype=np.uint8))
    with pytest.raises(MaskConflict):
        ls.from_binary_masks({7: a, 9: b})


def test_merge_rejects_nonbinary():
    bad = VoxelGrid(np.array([[[2, 0]]], dtype=np.uint8))
    with pytest.raises(NonBinaryInput):
        ls.from_binary_masks({7: bad})


def test_merge_rejects_dim_mismatch():
    a = VoxelGrid(np.zeros((2, 2, 2), dtype=np.uint8))
    b = VoxelGrid(np.zeros((2, 2, 3), dtype=np.uint8))
    with pytest.raises(DimMismatch):
        ls.from_binary_masks({7: a, 9: b})


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_mask_split_merge_inverse_property(seed):
    rng = np.random.default_rng(seed)
    ids = rng.choice(np.arange(1, 26), size=int(rng.integers(1, 5)), replace=False)
    values = np.zeros((4, 4, 4), dtype=np.uint8)
    for cid in ids:
        blob = rng.random((4, 4, 4)) < 0.3
        values[blob] = cid  # later classes overwrite: still a valid labeling
    g = ls.LabelGrid(VoxelGrid(values))
    present = g.present_ids()
    if not present:
        return
    masks = {c: ls.to_binary_mask(g, c) for c in present}
    assert ls.from_binary_masks(masks) == g
