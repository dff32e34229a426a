import base64
import json
import shutil

import numpy as np
import pytest
from fastapi.testclient import TestClient

from atlasforge.attention import ATTENTION_CEIL
from atlasforge.campaign import CampaignConfig
from atlasforge.labelspace import registry_sha256, to_binary_mask
from atlasforge.service import create_app, load_tokens
from atlasforge.simloop import Scenario, SimModelSpec, run_loop, scenario_phantoms
from atlasforge.volgrid import VoxelGrid, read_file, write_volume

TOKENS = {"tok-alice": "alice", "tok-bob": "bob"}


def bundle_scenario() -> Scenario:
    return Scenario(
        name="svc",
        seed=99,
        n_volumes=6,
        dims=(12, 12, 12),
        classes=((7, "sphere"), (9, "box")),
        models=(
            SimModelSpec("a", 1.0, 0.4, seed=1, schedule=((0, 1.0), (1, 0.0))),
            SimModelSpec("b", 1.3, 0.3, seed=2, schedule=((0, 1.0), (1, 0.0))),
        ),
        campaign=CampaignConfig(fraction=0.5, max_iterations=4),
    )


@pytest.fixture(scope="module")
def bundle(tmp_path_factory):
    root = tmp_path_factory.mktemp("bundle") / "run"
    scenario = bundle_scenario()
    run_loop(scenario, root, halt_after_open=True)
    return root, scenario


@pytest.fixture()
def client(bundle):
    root, _ = bundle
    return TestClient(create_app(root, tokens=TOKENS))


def truth_mask_b64(scenario, volume_id: str, class_id: int) -> str:
    truth = scenario_phantoms(scenario)[volume_id][1]
    return base64.b64encode(write_volume(to_binary_mask(truth, class_id))).decode()


def first_selected(client) -> tuple[str, int]:
    doc = client.get("/v1/campaigns/sim-svc/priority").json()
    for cid, entries in sorted(doc["classes"].items()):
        for entry in entries:
            if entry["selected"]:
                return entry["volume"], int(cid)
    raise AssertionError("no selected pair in fixture bundle")


def auth(token="tok-alice"):
    return {"Authorization": f"Bearer {token}"}


# --- reads ---------------------------------------------------------------------


def test_health_and_campaign_listing(client):
    health = client.get("/v1/health").json()
    assert health["status"] == "ok"
    assert health["campaign"] == "sim-svc"
    assert client.get("/v1/campaigns").json() == {"campaigns": ["sim-svc"]}


def test_registry_endpoint(client):
    doc = client.get("/v1/registry").json()
    assert doc["count"] == 25
    assert doc["sha256"] == registry_sha256()
    by_id = {c["id"]: c for c in doc["classes"]}
    assert by_id[7] == {"id": 7, "name": "liver", "group": "abdominal-other"}
    assert len(by_id) == 25


def test_volume_listing(client):
    doc = client.get("/v1/volumes").json()
    assert [v["volume"] for v in doc["volumes"]] == [f"vol-{i:03d}" for i in range(6)]
    first = doc["volumes"][0]
    assert first["dims"] == [12, 12, 12]
    assert first["has_label"]
    assert first["attention_classes"] == [7, 9]


def test_image_slice_round_trip(client, bundle):
    root, _ = bundle
    doc = client.get("/v1/volumes/vol-000/slices/2/5", params={"layers": "image"}).json()
    assert doc["height"] == 12 and doc["width"] == 12
    layer = doc["layers"]["image"]
    assert layer["dtype"] == "float32"
    plane = np.frombuffer(base64.b64decode(layer["data_b64"]), dtype="<f4")
    plane = plane.reshape(doc["height"], doc["width"])
    volume = read_file(root / "volumes/vol-000_image.nii")
    assert np.array_equal(plane, volume.values[:, :, 5])
    lo, hi = layer["window"]
    assert lo == float(volume.values.min()) and hi == float(volume.values.max())


def test_axis_changes_slice_shape(client):
    doc = client.get(
        "/v1/volumes/vol-000/slices/0/3", params={"layers": "image"}
    ).json()
    # remaining axes ascending: height from axis 1, width from axis 2
    assert (doc["height"], doc["width"]) == (12, 12)
    assert doc["axis"] == 0 and doc["index"] == 3


def test_label_and_attention_layers(client, bundle):
    root, _ = bundle
    doc = client.get(
        "/v1/volumes/vol-001/slices/1/6",
        params={"layers": "image,label,attention", "class": 7},
    ).json()
    assert set(doc["layers"]) == {"image", "label", "attention"}
    label = doc["layers"]["label"]
    assert label["dtype"] == "uint8"
    assert label["window"] == [0.0, 1.0]
    mask = np.frombuffer(base64.b64decode(label["data_b64"]), dtype=np.uint8)
    truth = read_file(root / "volumes/vol-001_label.nii")
    assert np.array_equal(mask.reshape(12, 12), (truth.values[:, 6, :] == 7))
    att = doc["layers"]["attention"]
    assert att["window"] == [0.0, ATTENTION_CEIL]
    heat = np.frombuffer(base64.b64decode(att["data_b64"]), dtype="<f4")
    stored = read_file(root / "attention/vol-001_c7.nii")
    assert np.array_equal(heat.reshape(12, 12), stored.values[:, 6, :])


def test_slice_errors(client):
    assert client.get("/v1/volumes/vol-000/slices/2/99").status_code == 416
    assert client.get("/v1/volumes/vol-000/slices/7/0").status_code == 422
    assert client.get("/v1/volumes/nope/slices/0/0").status_code == 404
    r = client.get("/v1/volumes/vol-000/slices/0/0", params={"layers": "bogus"})
    assert r.status_code == 422
    r = client.get("/v1/volumes/vol-000/slices/0/0", params={"layers": "attention"})
    assert r.status_code == 422  # class parameter required


def test_state_endpoint_and_unknown_campaign(client, bundle):
    root, _ = bundle
    doc = client.get("/v1/campaigns/sim-svc/state").json()
    assert doc["campaign_id"] == "sim-svc"
    assert doc["iteration"] == 0 and doc["iteration_open"]
    assert client.get("/v1/campaigns/other/state").status_code == 404
    assert client.get("/v1/campaigns/other/priority").status_code == 404


def test_priority_listing_and_limit(client):
    doc = client.get("/v1/campaigns/sim-svc/priority").json()
    assert set(doc["classes"]) == {"7", "9"}
    entries = doc["classes"]["7"]
    sizes = [e["size"] for e in entries]
    assert sizes == sorted(sizes, reverse=True)
    assert sum(e["selected"] for e in entries) == 3  # ceil(0.5 * 6)
    limited = client.get(
        "/v1/campaigns/sim-svc/priority", params={"class": 7, "limit": 2}
    ).json()
    assert set(limited["classes"]) == {"7"}
    assert len(limited["classes"]["7"]) == 2
    assert client.get(
        "/v1/campaigns/sim-svc/priority", params={"class": 4}
    ).status_code == 404


# --- mutations -------------------------------------------------------------------


def test_revision_requires_token(client, bundle):
    _, scenario = bundle
    vid, cid = first_selected(client)
    body = {"volume": vid, "class": cid, "verdict": "no-change"}
    assert client.post("/v1/campaigns/sim-svc/revisions", json=body).status_code == 401
    bad = client.post(
        "/v1/campaigns/sim-svc/revisions", json=body, headers=auth("tok-wrong")
    )
    assert bad.status_code == 401
    assert bad.json()["error"]["type"] == "Unauthorized"


def test_revision_flow_idempotency_and_conflict(bundle, tmp_path):
    root, scenario = bundle
    # private copy of the bundle so module-scoped fixtures stay pristine
    work = tmp_path / "copy"
    shutil.copytree(root, work)
    client = TestClient(create_app(work, tokens=TOKENS))
    vid, cid = first_selected(client)

    mask_b64 = truth_mask_b64(scenario, vid, cid)
    body = {
        "volume": vid,
        "class": cid,
        "verdict": "revised",
        "mask_b64": mask_b64,
        "timestamp": 4.0,
    }
    first = client.post("/v1/campaigns/sim-svc/revisions", json=body, headers=auth())
    assert first.status_code == 201, first.text
    doc = first.json()
    assert doc["verdict"] == "revised"
    assert doc["annotator"] == "alice"  # identity comes from the token
    assert not doc["replayed"]
    assert (work / doc["mask_ref"]).exists()
    events_before = (work / "events.jsonl").read_text().count("\n")

    replay = client.post("/v1/campaigns/sim-svc/revisions", json=body, headers=auth())
    assert replay.status_code == 201
    assert replay.json()["replayed"]
    assert replay.json()["mask_sha256"] == doc["mask_sha256"]
    assert (work / "events.jsonl").read_text().count("\n") == events_before

    # a different mask for the same pair is a conflict, not a replay
    other = np.zeros((12, 12, 12), dtype=np.uint8)
    other[0, 0, 0] = 1
    body_conflict = dict(body, mask_b64=base64.b64encode(write_volume(VoxelGrid(other))).decode())
    conflict = client.post(
        "/v1/campaigns/sim-svc/revisions", json=body_conflict, headers=auth()
    )
    assert conflict.status_code == 409
    assert conflict.json()["error"]["type"] == "DuplicateRevision"

    # resolved pairs drop out of the default queue but stay visible on demand
    queue = client.get("/v1/campaigns/sim-svc/priority", params={"class": cid}).json()
    assert vid not in [e["volume"] for e in queue["classes"][str(cid)]]
    full = client.get(
        "/v1/campaigns/sim-svc/priority",
        params={"class": cid, "include_resolved": "true"},
    ).json()
    flagged = {e["volume"]: e["resolved"] for e in full["classes"][str(cid)]}
    assert flagged[vid] is True


def test_revision_validation_errors(bundle, tmp_path):
    root, scenario = bundle
    work = tmp_path / "copy"
    shutil.copytree(root, work)
    client = TestClient(create_app(work, tokens=TOKENS))
    vid, cid = first_selected(client)

    post = lambda body: client.post(
        "/v1/campaigns/sim-svc/revisions", json=body, headers=auth()
    )
    base = {"volume": vid, "class": cid}
    assert post({**base, "verdict": "maybe"}).status_code == 422
    assert post({**base, "verdict": "revised"}).status_code == 422  # mask required
    assert (
        post({**base, "verdict": "no-change", "mask_b64": "AAAA"}).status_code == 422
    )  # mask forbidden
    assert post({**base, "verdict": "revised", "mask_b64": "!!!"}).status_code == 422
    garbage = base64.b64encode(b"not a volume").decode()
    r = post({**base, "verdict": "revised", "mask_b64": garbage})
    assert r.status_code == 422
    wrong_dims = base64.b64encode(
        write_volume(VoxelGrid(np.zeros((2, 2, 2), dtype=np.uint8)))
    ).decode()
    assert post({**base, "verdict": "revised", "mask_b64": wrong_dims}).status_code == 422
    soft = base64.b64encode(
        write_volume(VoxelGrid(np.full((12, 12, 12), 0.5, dtype=np.float32)))
    ).decode()
    assert post({**base, "verdict": "revised", "mask_b64": soft}).status_code == 422
    # annotator in the body must agree with the bearer identity
    mismatch = post(
        {**base, "verdict": "no-change", "annotator": "bob"}
    )
    assert mismatch.status_code == 422
    # unselected pair is a state conflict
    unselected = None
    queue = client.get(
        "/v1/campaigns/sim-svc/priority", params={"class": cid}
    ).json()["classes"][str(cid)]
    for entry in queue:
        if not entry["selected"]:
            unselected = entry["volume"]
            break
    assert unselected is not None
    r = post({"volume": unselected, "class": cid, "verdict": "no-change"})
    assert r.status_code == 409
    assert r.json()["error"]["type"] == "NotSelected"


def test_advance_and_metrics_and_restart(bundle, tmp_path):
    root, scenario = bundle
    work = tmp_path / "copy"
    shutil.copytree(root, work)
    client = TestClient(create_app(work, tokens=TOKENS))

    early = client.post(
        "/v1/campaigns/sim-svc/iterations/advance",
        json={"model_tag": "model-1"},
        headers=auth(),
    )
    assert early.status_code == 409  # selected pairs still unresolved

    state = client.get("/v1/campaigns/sim-svc/state").json()
    pending = [
        (vid, int(cid))
        for cid, vids in state["selections"].items()
        for vid in vids
    ]
    for vid, cid in pending:
        body = {
            "volume": vid,
            "class": cid,
            "verdict": "revised",
            "mask_b64": truth_mask_b64(scenario, vid, cid),
            "timestamp": 1.0,
        }
        assert (
            client.post(
                "/v1/campaigns/sim-svc/revisions", json=body, headers=auth("tok-bob")
            ).status_code
            == 201
        )

    no_auth = client.post(
        "/v1/campaigns/sim-svc/iterations/advance", json={"model_tag": "model-1"}
    )
    assert no_auth.status_code == 401

    done = client.post(
        "/v1/campaigns/sim-svc/iterations/advance",
        json={"model_tag": "model-1"},
        headers=auth(),
    )
    assert done.status_code == 200, done.text
    doc = done.json()
    assert doc["iteration"] == 1
    assert doc["decision"] in ("continue", "stop")
    assert doc["finetune_manifest"]["entries"]

    metrics = client.get("/v1/campaigns/sim-svc/metrics").json()
    assert metrics["total_pairs"] == 12
    assert metrics["total_revised"] == len(pending)
    assert metrics["status_counts"]["revised"] == len(pending)
    assert not metrics["iteration_open"]
    assert "simulation" in metrics  # summary.json travels with the bundle

    # a fresh process over the same directory sees the exact same world
    reborn = TestClient(create_app(work, tokens=TOKENS))
    assert (
        reborn.get("/v1/campaigns/sim-svc/state").json()
        == client.get("/v1/campaigns/sim-svc/state").json()
    )
    assert (
        reborn.get("/v1/campaigns/sim-svc/metrics").json()
        == client.get("/v1/campaigns/sim-svc/metrics").json()
    )


def test_open_mode_uses_body_annotator(bundle, tmp_path):
    root, scenario = bundle
    work = tmp_path / "copy"
    shutil.copytree(root, work)
    client = TestClient(create_app(work))  # no token map: local review mode
    vid, cid = first_selected(client)
    body = {"volume": vid, "class": cid, "verdict": "no-change", "annotator": "carol"}
    r = client.post("/v1/campaigns/sim-svc/revisions", json=body)
    assert r.status_code == 201
    assert r.json()["annotator"] == "carol"
    anon = None
    for entry in client.get(
        "/v1/campaigns/sim-svc/priority", params={"class": cid}
    ).json()["classes"][str(cid)]:
        if entry["selected"]:
            anon = entry["volume"]
            break
    assert anon is not None
    r2 = client.post(
        "/v1/campaigns/sim-svc/revisions",
        json={"volume": anon, "class": cid, "verdict": "no-change"},
    )
    assert r2.status_code == 201
    assert r2.json()["annotator"] == "anonymous"


def test_token_file_loader(tmp_path):
    path = tmp_path / "tokens.json"
    path.write_text(json.dumps(TOKENS))
    assert load_tokens(path) == TOKENS
    path.write_text(json.dumps({"t": 5}))
    with pytest.raises(ValueError):
        load_tokens(path)
