"""
Dice similarity scoring
=======================

DSC on binary masks: symmetric, 1.0 on identity and on the both-empty
convention, and the classic worked example 2*|A&B| / (|A|+|B|).
"""

import numpy as np

from atlasforge.labelspace import LabelGrid
from atlasforge.metrics import benchmark_rank, dsc, evaluate
from atlasforge.volgrid import VoxelGrid

mask = lambda a: VoxelGrid(np.asarray(a, dtype=np.uint8))

# |A| = 2, |B| = 4, intersection = 2 -> 2*2/6
a = np.zeros((3, 3, 1), dtype=np.uint8)
a[0, 0, 0] = a[1, 0, 0] = 1
b = a.copy()
b[2, 0, 0] = b[0, 1, 0] = 1
print("worked example:", round(dsc(mask(a), mask(b)), 4))
print("symmetry holds:", dsc(mask(a), mask(b)) == dsc(mask(b), mask(a)))
print("self DSC:", dsc(mask(a), mask(a)))
empty = np.zeros((3, 3, 1), dtype=np.uint8)
print("both empty:", dsc(mask(empty), mask(empty)))

# per-class evaluation works on integer label grids
rng = np.random.default_rng(8)
truth = LabelGrid(VoxelGrid(rng.choice([0, 7, 9], size=(6, 6, 6)).astype(np.uint8)))
pred_values = truth.grid.values.copy()
pred_values[0] = 0  # the prediction misses one slab
pred = LabelGrid(VoxelGrid(pred_values))
report = evaluate({"v1": pred}, {"v1": truth}, classes=[7, 9])
for cid, score in sorted(report.per_class.items()):
    print(f"class {cid}: mean DSC {score:.4f}")
print("overall mean:", round(report.mean_dsc, 4))

# reports from competing models rank into a leaderboard
perfect = evaluate({"v1": truth}, {"v1": truth}, classes=[7, 9])
board = benchmark_rank([("degraded", report), ("perfect", perfect)])
print(board.to_table())
