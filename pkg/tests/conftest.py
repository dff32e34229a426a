from __future__ import annotations

import numpy as np
import pytest

from atlasforge.attention import EnsemblePrediction
from atlasforge.volgrid import VoxelGrid


def soft_grid(values, spacing=(1.0, 1.0, 1.0)) -> VoxelGrid:
    return VoxelGrid(np.asarray(values, dtype=np.float32), spacing)


def random_ensemble(
    rng: np.random.Generator,
    *,
    volume_id: str = "vol",
    dims=None,
    n_arch: int | None = None,
    n_classes: int | None = None,
) -> EnsemblePrediction:
    """Random soft ensemble with dims <= 8 per axis, N in {2,3,4}, C <= 5."""
    if dims is None:
        dims = tuple(int(d) for d in rng.integers(1, 9, size=3))
    if n_arch is None:
        n_arch = int(rng.integers(2, 5))
    if n_classes is None:
        n_classes = int(rng.integers(1, 6))
    class_ids = [int(c) for c in rng.choice(np.arange(1, 26), size=n_classes, replace=False)]
    sources = {
        f"arch-{a}": {
            c: soft_grid(rng.random(dims, dtype=np.float64).astype(np.float32))
            for c in class_ids
        }
        for a in range(n_arch)
    }
    return EnsemblePrediction(volume_id=volume_id, sources=sources)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240814)
