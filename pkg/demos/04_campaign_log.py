"""
An event-sourced revision campaign
==================================

Every mutation appends one event to a JSONL log; state is a pure fold of
the log, so replaying it reconstructs the campaign byte-for-byte.
"""

import json
import tempfile
from pathlib import Path

import numpy as np

from atlasforge.attention import EnsemblePrediction
from atlasforge.campaign import Campaign, CampaignConfig, RevisionRecord, SignOff
from atlasforge.volgrid import VoxelGrid

dims = (4, 4, 4)
f32 = lambda a: VoxelGrid(np.asarray(a, dtype=np.float32))

# two architectures that disagree everywhere: every voxel draws attention
rng = np.random.default_rng(3)
sources = {
    "unet": {7: f32(np.full(dims, 0.5))},
    "vit": {7: f32(np.zeros(dims))},
}
preds = {
    vid: EnsemblePrediction(volume_id=vid, sources=sources)
    for vid in ("vol-a", "vol-b", "vol-c")
}

masks = {}  # mask_ref -> grid, stands in for a file store
workdir = Path(tempfile.mkdtemp())
log = workdir / "events.jsonl"

campaign = Campaign.create(
    "demo-campaign",
    CampaignConfig(fraction=0.34, max_iterations=3),
    {vid: dims for vid in preds},
    class_ids=[7],
    model_tag="model-r0",
    log_path=log,
    mask_loader=masks.__getitem__,
)

# iteration 0: rank the pool, select the top fraction
selections = campaign.open_iteration(preds)
print("selected for class 7:", selections[7])

# the reviser corrects one volume and waves the rest through
for vid in selections[7]:
    if vid == selections[7][0]:
        ref = f"masks/it0_{vid}.nii"
        masks[ref] = VoxelGrid(rng.integers(0, 2, dims).astype(np.uint8))
        rec = RevisionRecord(vid, 7, 0, "alice", "revised", ref, timestamp=1.0)
    else:
        rec = RevisionRecord(vid, 7, 0, "alice", "no-change", timestamp=2.0)
    campaign.record_revision(rec)

# close the iteration: export the fine-tune manifest, advance, check stop
manifest = campaign.export_finetune_manifest()
print("fine-tune manifest entries:", len(manifest["entries"]))
campaign.advance_iteration("model-r1")
print("stop decision:", campaign.check_stop())

# the log is plain JSONL; replay rebuilds identical state
kinds = [json.loads(l)["kind"] for l in log.read_text().splitlines()]
print("event kinds:", kinds)
replayed = Campaign.replay(log, mask_loader=masks.__getitem__)
assert replayed.snapshot_bytes() == campaign.snapshot_bytes()
print("replay: byte-identical snapshot,", len(kinds), "events")
