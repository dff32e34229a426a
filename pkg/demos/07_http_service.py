"""
Driving the review service over HTTP
====================================

Builds a browsable bundle with the simulator (halting right after the
first selection), mounts the service on it, and walks the /v1 endpoints
the way a review UI would: queue, slices, one revision, metrics.
"""

import base64
import json
import tempfile
from pathlib import Path

import numpy as np
from fastapi.testclient import TestClient

from atlasforge.service import create_app
from atlasforge.simloop import CampaignConfig, Scenario, SimModelSpec, run_loop
from atlasforge.volgrid import VoxelGrid, write_volume

# a small scenario, halted with the first iteration open and awaiting revisers
scenario = Scenario(
    name="demo",
    seed=123,
    n_volumes=5,
    dims=(12, 12, 12),
    classes=((7, "sphere"), (9, "box")),
    models=(
        SimModelSpec("unet", 1.0, 0.4, seed=1, schedule=((0, 1.0), (1, 0.0))),
        SimModelSpec("vit", 1.3, 0.3, seed=2, schedule=((0, 0.9), (1, 0.0))),
    ),
    campaign=CampaignConfig(fraction=0.4, max_iterations=3),
)
root = Path(tempfile.mkdtemp()) / "bundle"
run_loop(scenario, root, halt_after_open=True)

client = TestClient(create_app(root))

# the registry and the campaign state
print("classes served:", client.get("/v1/registry").json()["count"])
state = client.get("/v1/campaigns/sim-demo/state").json()
print("campaign:", state["campaign_id"], "iteration", state["iteration"],
      "open" if state["iteration_open"] else "closed")

# the priority queue for one class, in server order
queue = client.get("/v1/campaigns/sim-demo/priority", params={"class": 7}).json()
top = queue["classes"]["7"][0]
print("queue head:", top["volume"], "size", round(top["size"], 2),
      "selected:", top["selected"])

# one slice through image + attention, base64 of raw little-endian voxels
doc = client.get(
    f"/v1/volumes/{top['volume']}/slices/2/6",
    params={"layers": "image,attention", "class": 7},
).json()
att = doc["layers"]["attention"]
plane = np.frombuffer(base64.b64decode(att["data_b64"]), dtype="<f4")
print("slice", doc["height"], "x", doc["width"], "window", att["window"],
      "max attention", round(float(plane.max()), 3))

# submit one revision: here an all-background corrected mask
body = {
    "volume": top["volume"],
    "class": 7,
    "verdict": "revised",
    "mask_b64": base64.b64encode(
        write_volume(VoxelGrid(np.zeros(scenario.dims, dtype=np.uint8)))
    ).decode(),
    "annotator": "demo-reviewer",
}
r = client.post("/v1/campaigns/sim-demo/revisions", json=body)
print("revision:", r.status_code, r.json()["verdict"], "replayed:", r.json()["replayed"])

# posting the identical body again is idempotent, not an error
r = client.post("/v1/campaigns/sim-demo/revisions", json=body)
print("same body again:", r.status_code, "replayed:", r.json()["replayed"])

# campaign-wide metrics
m = client.get("/v1/campaigns/sim-demo/metrics").json()
print("resolved", m["total_resolved"], "of", m["total_pairs"], "pairs;",
      "status counts", json.dumps(m["status_counts"]))
