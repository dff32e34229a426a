"""
Attention maps from an ensemble of soft predictions
===================================================

Three per-voxel criteria and their sum. Where model architectures agree
confidently on one label, attention is zero; disagreement, hedging, and
cross-class overlap each raise it.
"""

import numpy as np

from atlasforge.attention import ATTENTION_CEIL, EnsemblePrediction, attention_map
from atlasforge.volgrid import VoxelGrid

f32 = lambda v: VoxelGrid(np.asarray(v, dtype=np.float32))

# the worked single-voxel point: class 1 gets {0.2, 0.5, 0.8} across three
# architectures, and the 0.8 architecture also gives 0.6 to class 2
ens = EnsemblePrediction(
    volume_id="demo",
    sources={
        "unet": {1: f32([[[0.2]]]), 2: f32([[[0.0]]])},
        "vit": {1: f32([[[0.5]]]), 2: f32([[[0.0]]])},
        "cnn": {1: f32([[[0.8]]]), 2: f32([[[0.6]]])},
    },
)
m = attention_map(ens, class_id=1)
print("inconsistency:", round(float(m.inconsistency.at(0, 0, 0)), 6))
print("uncertainty:  ", round(float(m.uncertainty.at(0, 0, 0)), 6))
print("overlap:      ", float(m.overlap.at(0, 0, 0)))
print("attention:    ", round(float(m.attention.at(0, 0, 0)), 6))
print("ceiling:      ", round(ATTENTION_CEIL, 6))

# unanimous one-hot predictions carry exactly zero attention
hot = f32(np.ones((4, 4, 4)))
cold = f32(np.zeros((4, 4, 4)))
sure = EnsemblePrediction(
    volume_id="sure",
    sources={a: {1: hot, 2: cold} for a in ("unet", "vit", "cnn")},
)
print("unanimous one-hot attention-size:", attention_map(sure, 1).attention_size)
