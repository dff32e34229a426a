from __future__ import annotations

import math

import numpy as np
import pytest
from conftest import random_ensemble, soft_grid
from oracles import oracle_attention_voxel

from atlasforge import attention
from atlasforge.attention import EnsemblePrediction, attention_map, attention_maps
from atlasforge.errors import DimMismatch, TooFewArchitectures, UnknownClass
from atlasforge.volgrid import VoxelGrid

# The pinned worked point: ensemble values {0.2, 0.5, 0.8} for the class under
# scrutiny, and the 0.8-architecture also giving 0.6 to another class at the
# same voxel (one cross-class exceedance).


def worked_point_ensemble() -> EnsemblePrediction:
    return EnsemblePrediction(
        volume_id="point",
        sources={
            "a": {1: soft_grid([[[0.2]]]), 2: soft_grid([[[0.0]]])},
            "b": {1: soft_grid([[[0.5]]]), 2: soft_grid([[[0.0]]])},
            "c": {1: soft_grid([[[0.8]]]), 2: soft_grid([[[0.6]]])},
        },
    )


def test_worked_point_values():
    m = attention_map(worked_point_ensemble(), 1)
    assert m.inconsistency.at(0, 0, 0) == pytest.approx(0.244949, abs=1e-5)
    assert m.uncertainty.at(0, 0, 0) == pytest.approx(0.282326, abs=1e-5)
    assert m.overlap.at(0, 0, 0) == 1.0
    assert m.attention.at(0, 0, 0) == pytest.approx(1.527275, abs=1e-5)
    assert m.attention_size == pytest.approx(1.527275, abs=1e-5)


def test_worked_point_matches_oracle():
    by_arch = {"a": {1: 0.2, 2: 0.0}, "b": {1: 0.5, 2: 0.0}, "c": {1: 0.8, 2: 0.6}}
    inc, unc, ovl, att = oracle_attention_voxel(by_arch, 1)
    assert inc == pytest.approx(math.sqrt(0.06), abs=1e-12)
    assert ovl == 1.0
    m = attention_map(worked_point_ensemble(), 1)
    assert m.attention.at(0, 0, 0) == pytest.approx(att, abs=1e-6)


def test_one_hot_unanimous_is_exactly_zero():
    one = soft_grid(np.ones((3, 3, 3)))
    zero = soft_grid(np.zeros((3, 3, 3)))
    ens = EnsemblePrediction(
        volume_id="hard",
        sources={
            "a": {1: one, 2: zero},
            "b": {1: one, 2: zero},
        },
    )
    for m in attention_maps(ens):
        assert m.attention_size == 0.0
        assert float(np.max(m.attention.values)) == 0.0


def test_matches_oracle_on_random_ensembles(rng):
    for trial in range(40):
        ens = random_ensemble(rng, volume_id=f"vol-{trial}")
        scope = "same-arch" if trial % 2 == 0 else "any-arch"
        maps = {
            m.class_id: m
            for m in attention_maps(ens, overlap_scope=scope)
        }
        nx, ny, nz = next(iter(next(iter(ens.sources.values())).values())).dims
        for class_id, m in maps.items():
            for _ in range(10):
                x = int(rng.integers(nx))
                y = int(rng.integers(ny))
                z = int(rng.integers(nz))
                by_arch = {
                    arch: {
                        c: float(ens.sources[arch][c].values[x, y, z])
                        for c in ens.class_ids
                    }
                    for arch in ens.architectures
                }
                inc, unc, ovl, att = oracle_attention_voxel(by_arch, class_id, scope=scope)
                assert m.inconsistency.at(x, y, z) == pytest.approx(inc, abs=1e-6)
                assert m.uncertainty.at(x, y, z) == pytest.approx(unc, abs=1e-6)
                assert m.overlap.at(x, y, z) == ovl
                assert m.attention.at(x, y, z) == pytest.approx(att, abs=1e-6)


def test_bounds_hold_on_random_ensembles(rng):
    for trial in range(20):
        ens = random_ensemble(rng, volume_id=f"vol-{trial}")
        for m in attention_maps(ens):
            assert float(np.min(m.inconsistency.values)) >= 0.0
            assert float(np.max(m.inconsistency.values)) <= 0.5 + 1e-6
            assert float(np.min(m.uncertainty.values)) >= 0.0
            assert float(np.max(m.uncertainty.values)) <= math.exp(-1.0) + 1e-6
            assert set(np.unique(m.overlap.values)) <= {0.0, 1.0}
            assert float(np.max(m.attention.values)) <= attention.ATTENTION_CEIL + 1e-6


def test_attention_is_componentwise_sum(rng):
    ens = random_ensemble(rng, dims=(5, 4, 3))
    for m in attention_maps(ens):
        total = (
            m.inconsistency.values.astype(np.float64)
            + m.uncertainty.values.astype(np.float64)
            + m.overlap.values.astype(np.float64)
        )
        assert np.allclose(m.attention.values, total, atol=1e-6)


def test_overlap_strictness_at_threshold():
    # exactly 0.5 must NOT trip the strict > comparison
    ens = EnsemblePrediction(
        volume_id="edge",
        sources={
            "a": {1: soft_grid([[[0.5]]]), 2: soft_grid([[[0.5]]])},
            "b": {1: soft_grid([[[0.5]]]), 2: soft_grid([[[0.5]]])},
        },
    )
    m = attention_map(ens, 1)
    assert m.overlap.at(0, 0, 0) == 0.0


def test_overlap_scope_modes_differ_when_conflict_is_cross_arch():
    # arch a fires class 1, arch b fires class 2; no single arch fires both
    ens = EnsemblePrediction(
        volume_id="scope",
        sources={
            "a": {1: soft_grid([[[0.9]]]), 2: soft_grid([[[0.1]]])},
            "b": {1: soft_grid([[[0.1]]]), 2: soft_grid([[[0.9]]])},
        },
    )
    assert attention_map(ens, 1, overlap_scope="same-arch").overlap.at(0, 0, 0) == 0.0
    assert attention_map(ens, 1, overlap_scope="any-arch").overlap.at(0, 0, 0) == 1.0


def test_uncertainty_peak_at_inverse_e():
    p = float(np.float32(math.exp(-1.0)))
    ens = EnsemblePrediction(
        volume_id="peak",
        sources={
            "a": {1: soft_grid([[[p]]])},
            "b": {1: soft_grid([[[p]]])},
        },
    )
    m = attention_map(ens, 1)
    assert m.uncertainty.at(0, 0, 0) == pytest.approx(math.exp(-1.0), abs=1e-6)


def test_clamp_below_threshold_contributes_zero():
    tiny = float(np.float32(1e-13))
    ens = EnsemblePrediction(
        volume_id="tiny",
        sources={
            "a": {1: soft_grid([[[tiny]]])},
            "b": {1: soft_grid([[[tiny]]])},
        },
    )
    m = attention_map(ens, 1)
    assert m.uncertainty.at(0, 0, 0) == 0.0


def test_spacing_weighted_scales_by_voxel_volume(rng):
    ens = random_ensemble(rng, dims=(4, 4, 4))
    # rebuild with anisotropic spacing
    spaced = EnsemblePrediction(
        volume_id=ens.volume_id,
        sources={
            arch: {
                c: VoxelGrid(g.values, (0.5, 2.0, 3.0))
                for c, g in by_class.items()
            }
            for arch, by_class in ens.sources.items()
        },
    )
    cid = spaced.class_ids[0]
    plain = attention_map(spaced, cid)
    weighted = attention_map(spaced, cid, spacing_weighted=True)
    assert weighted.attention_size == pytest.approx(plain.attention_size * 3.0, rel=1e-9)


def test_single_architecture_rejected():
    with pytest.raises(TooFewArchitectures):
        EnsemblePrediction(volume_id="solo", sources={"a": {1: soft_grid([[[0.5]]])}})


def test_mismatched_class_sets_rejected():
    with pytest.raises(UnknownClass):
        EnsemblePrediction(
            volume_id="bad",
            sources={
                "a": {1: soft_grid([[[0.5]]])},
                "b": {2: soft_grid([[[0.5]]])},
            },
        )


def test_mismatched_dims_rejected():
    ens = EnsemblePrediction(
        volume_id="dims",
        sources={
            "a": {1: soft_grid(np.zeros((2, 2, 2)))},
            "b": {1: soft_grid(np.zeros((3, 2, 2)))},
        },
    )
    with pytest.raises(DimMismatch):
        attention_map(ens, 1)


def test_out_of_range_values_rejected():
    ens = EnsemblePrediction(
        volume_id="range",
        sources={
            "a": {1: soft_grid([[[1.5]]])},
            "b": {1: soft_grid([[[0.5]]])},
        },
    )
    with pytest.raises(ValueError):
        attention_map(ens, 1)


def test_unknown_class_query():
    ens = worked_point_ensemble()
    with pytest.raises(UnknownClass):
        attention_map(ens, 9)


def test_size_record_shape():
    m = attention_map(worked_point_ensemble(), 1)
    rec = m.to_record()
    assert rec["volume"] == "point"
    assert rec["class"] == 1
    assert rec["log_base"] == "e"
    assert rec["size"] == pytest.approx(
        sum(rec["components"].values()), rel=1e-5
    )
