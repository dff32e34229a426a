"""HTTP review service: the ``/v1`` API over one data bundle and one campaign.

The service is a thin, stateless shell. It reads a bundle directory holding
``manifest.json`` (volume files by role) and ``events.jsonl`` (the campaign
log), serves slices and campaign state to review clients, and funnels every
mutation through the campaign command layer, which appends to the log before
answering. Restarting the process therefore changes nothing observable: the
next process replays the same log into the same state.

Routes (all JSON):

    GET  /v1/health
    GET  /v1/registry
    GET  /v1/volumes
    GET  /v1/volumes/{volume}/slices/{axis}/{index}?layers=...&class=...
    GET  /v1/campaigns
    GET  /v1/campaigns/{id}/state
    GET  /v1/campaigns/{id}/priority?class=...&limit=...&include_resolved=...
    GET  /v1/campaigns/{id}/metrics
    POST /v1/campaigns/{id}/revisions
    POST /v1/campaigns/{id}/iterations/advance

Reads are open; mutations require ``Authorization: Bearer <token>`` when the
service was given a token map (token -> annotator id). Without a token map
the service runs open and trusts the ``annotator`` field in request bodies,
which is only appropriate for local review sessions.

Slice pixels travel as base64 of the raw little-endian array bytes in C row
order, ``height`` rows (the first remaining axis) by ``width`` columns (the
second). Revised masks travel the same way in full: base64 of a complete
serialized volume file, so the upload is self-describing and the server can
hash its canonical form. Resubmitting an identical revision replays the
original outcome; submitting a different one for an already-resolved pair is
a 409 conflict.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import json
import time
from pathlib import Path

import numpy as np
from fastapi import Depends, FastAPI, Query, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict, Field

from .attention import ATTENTION_CEIL
from .campaign import VERDICTS, Campaign, RevisionRecord
from .errors import (
    AtlasforgeError,
    BadRequest,
    CampaignNotStopped,
    CampaignStopped,
    DuplicateRevision,
    IndexOutOfRange,
    InvalidRevision,
    IterationAlreadyOpen,
    IterationIncomplete,
    ManifestNotExported,
    MissingVolume,
    NoOpenIteration,
    NotSelected,
    UnknownCampaign,
    UnknownClass,
)
from .labelspace import REGISTRY, registry_sha256
from .volgrid import VolumeManifest, VoxelGrid, extract_slice, read_file, read_volume, write_file, write_volume

API_PREFIX = "/v1"
EVENTS_NAME = "events.jsonl"
MANIFEST_NAME = "manifest.json"
SUMMARY_NAME = "summary.json"

_STATUS_BY_ERROR: tuple[tuple[tuple[type, ...], int], ...] = (
    ((UnknownCampaign, MissingVolume, UnknownClass), 404),
    ((IndexOutOfRange,), 416),
    (
        (
            DuplicateRevision,
            NotSelected,
            IterationAlreadyOpen,
            NoOpenIteration,
            IterationIncomplete,
            ManifestNotExported,
            CampaignStopped,
            CampaignNotStopped,
        ),
        409,
    ),
)


def _status_for(exc: AtlasforgeError) -> int:
    for types, status in _STATUS_BY_ERROR:
        if isinstance(exc, types):
            return status
    return 422


class BundleStore:
    """Volume files behind the manifest, with a whole-grid cache.

    Grids are immutable once loaded, so caching by resolved path is safe; the
    cache also remembers each image's value range so slice windows stay
    consistent across the volume.
    """

    def __init__(self, manifest: VolumeManifest):
        self.manifest = manifest
        self._grids: dict[Path, VoxelGrid] = {}

    def _load(self, path: Path | None, what: str, volume_id: str) -> VoxelGrid:
        if path is None:
            raise MissingVolume(f"volume {volume_id!r} has no {what} layer")
        if path not in self._grids:
            self._grids[path] = read_file(path)
        return self._grids[path]

    def _checked(self, volume_id: str) -> None:
        if volume_id not in self.manifest.volumes:
            raise MissingVolume(f"volume {volume_id!r} not in manifest")

    def image(self, volume_id: str) -> VoxelGrid:
        self._checked(volume_id)
        return self._load(self.manifest.image_path(volume_id), "image", volume_id)

    def label(self, volume_id: str) -> VoxelGrid:
        self._checked(volume_id)
        return self._load(self.manifest.label_path(volume_id), "label", volume_id)

    def attention(self, volume_id: str, class_id: int) -> VoxelGrid:
        self._checked(volume_id)
        path = self.manifest.attention_path(volume_id, class_id)
        if path is None:
            raise MissingVolume(
                f"volume {volume_id!r} has no attention map for class {class_id}"
            )
        return self._load(path, "attention", volume_id)

    def attention_classes(self, volume_id: str) -> list[int]:
        self._checked(volume_id)
        return sorted(int(c) for c in self.manifest.volumes[volume_id].get("attention", {}))


class ServiceState:
    """Everything one running service instance holds in memory."""

    def __init__(self, root: str | Path, *, tokens: dict[str, str] | None = None):
        self.root = Path(root)
        self.store = BundleStore(VolumeManifest.load(self.root / MANIFEST_NAME))
        self.campaign = Campaign.replay(
            self.root / EVENTS_NAME,
            mask_loader=lambda ref: read_file(self.root / ref),
        )
        self.tokens = dict(tokens) if tokens is not None else None

    def require_campaign(self, campaign_id: str) -> Campaign:
        if campaign_id != self.campaign.state.campaign_id:
            raise UnknownCampaign(f"campaign {campaign_id!r} not served here")
        return self.campaign


def load_tokens(path: str | Path) -> dict[str, str]:
    """Token file: a flat JSON object mapping bearer token -> annotator id."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, dict) or not all(
        isinstance(k, str) and isinstance(v, str) and k and v for k, v in doc.items()
    ):
        raise ValueError("token file must map non-empty strings to non-empty strings")
    return doc


class RevisionIn(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    volume: str
    class_id: int = Field(alias="class")
    verdict: str
    mask_b64: str | None = None
    annotator: str | None = None
    timestamp: float | None = None


class AdvanceIn(BaseModel):
    model_tag: str
    cumulative: bool | None = None


def _slice_b64(plane: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(plane).tobytes()).decode("ascii")


def create_app(root: str | Path, *, tokens: dict[str, str] | None = None) -> FastAPI:
    state = ServiceState(root, tokens=tokens)
    app = FastAPI(title="atlasforge review service", version="1")
    app.state.atlasforge = state

    @app.exception_handler(AtlasforgeError)
    async def _domain_error(_: Request, exc: AtlasforgeError) -> JSONResponse:
        return JSONResponse(
            status_code=_status_for(exc),
            content={"error": {"type": type(exc).__name__, "detail": str(exc)}},
        )

    def identity(request: Request) -> str | None:
        """Resolved annotator id, or None in open (tokenless) mode."""
        if state.tokens is None:
            return None
        header = request.headers.get("authorization", "")
        scheme, _, token = header.partition(" ")
        annotator = state.tokens.get(token.strip()) if scheme.lower() == "bearer" else None
        if annotator is None:
            # the handler never runs; keep the body shape of domain errors
            raise _Unauthorized()
        return annotator

    @app.exception_handler(_Unauthorized)
    async def _auth_error(_: Request, exc: "_Unauthorized") -> JSONResponse:
        return JSONResponse(
            status_code=401,
            content={"error": {"type": "Unauthorized", "detail": "missing or unknown bearer token"}},
            headers={"WWW-Authenticate": "Bearer"},
        )

    # --- read side --------------------------------------------------------

    @app.get(f"{API_PREFIX}/health")
    def health() -> dict:
        return {
            "status": "ok",
            "campaign": state.campaign.state.campaign_id,
            "volumes": len(state.store.manifest.volumes),
        }

    @app.get(f"{API_PREFIX}/registry")
    def registry() -> dict:
        return {
            "count": len(REGISTRY),
            "sha256": registry_sha256(),
            "classes": [{"id": c.id, "name": c.name, "group": c.group} for c in REGISTRY],
        }

    @app.get(f"{API_PREFIX}/volumes")
    def volumes() -> dict:
        out = []
        for vid in state.store.manifest.volume_ids():
            image = state.store.image(vid)
            out.append(
                {
                    "volume": vid,
                    "dims": list(image.dims),
                    "spacing": list(image.spacing),
                    "has_label": state.store.manifest.label_path(vid) is not None,
                    "attention_classes": state.store.attention_classes(vid),
                }
            )
        return {"volumes": out}

    @app.get(f"{API_PREFIX}/volumes/{{volume_id}}/slices/{{axis}}/{{index}}")
    def slices(
        volume_id: str,
        axis: int,
        index: int,
        layers: str = Query("image"),
        class_id: int | None = Query(None, alias="class"),
    ) -> dict:
        requested = [name.strip() for name in layers.split(",") if name.strip()]
        unknown = [n for n in requested if n not in ("image", "label", "attention")]
        if not requested or unknown:
            raise BadRequest(
                f"layers must name image, label and/or attention, got {layers!r}"
            )
        image = state.store.image(volume_id)
        if not 0 <= axis <= 2:
            raise BadRequest(f"axis {axis} outside 0..2")
        if not 0 <= index < image.dims[axis]:
            raise IndexOutOfRange(
                f"index {index} outside axis {axis} of dims {image.dims}"
            )
        remaining = [a for a in range(3) if a != axis]
        payload_layers: dict[str, dict] = {}
        for name in requested:
            if name == "image":
                plane = extract_slice(image, axis, index)
                lo, hi = float(image.values.min()), float(image.values.max())
            elif name == "label":
                grid = state.store.label(volume_id)
                plane = extract_slice(grid, axis, index)
                if class_id is not None:
                    plane = (plane == class_id).astype(np.uint8)
                    lo, hi = 0.0, 1.0
                else:
                    lo, hi = 0.0, float(max(1, int(grid.values.max())))
            else:
                if class_id is None:
                    raise BadRequest("attention layer requires the class parameter")
                grid = state.store.attention(volume_id, class_id)
                plane = extract_slice(grid, axis, index)
                lo, hi = 0.0, ATTENTION_CEIL
            payload_layers[name] = {
                # grids are uint8 or float32 by construction; report what the
                # plane actually holds so clients decode the raw bytes right
                "dtype": "uint8" if plane.dtype == np.uint8 else "float32",
                "data_b64": _slice_b64(plane),
                "window": [lo, hi],
            }
        return {
            "volume": volume_id,
            "axis": axis,
            "index": index,
            "dims": list(image.dims),
            "spacing": list(image.spacing),
            "height": image.dims[remaining[0]],
            "width": image.dims[remaining[1]],
            "class": class_id,
            "layers": payload_layers,
        }

    @app.get(f"{API_PREFIX}/campaigns")
    def campaigns() -> dict:
        return {"campaigns": [state.campaign.state.campaign_id]}

    @app.get(f"{API_PREFIX}/campaigns/{{campaign_id}}/state")
    def campaign_state(campaign_id: str) -> dict:
        return state.require_campaign(campaign_id).state.snapshot()

    @app.get(f"{API_PREFIX}/campaigns/{{campaign_id}}/priority")
    def priority(
        campaign_id: str,
        class_id: int | None = Query(None, alias="class"),
        limit: int | None = Query(None, ge=1),
        include_resolved: bool = Query(False),
    ) -> dict:
        s = state.require_campaign(campaign_id).state
        wanted = s.class_ids if class_id is None else (class_id,)
        if class_id is not None and class_id not in s.class_ids:
            raise UnknownClass(f"class {class_id} not part of campaign {campaign_id!r}")
        classes: dict[str, list[dict]] = {}
        for cid in wanted:
            entries = []
            for record in s.priority.get(cid, ()):
                vid = record["volume"]
                resolved = (s.iteration, vid, cid) in s.revisions
                if resolved and not include_resolved:
                    continue
                entries.append(
                    {
                        **record,
                        "selected": vid in s.selections.get(cid, ()),
                        "status": s.status[(vid, cid)],
                        "resolved": resolved,
                    }
                )
            classes[str(cid)] = entries[:limit] if limit is not None else entries
        return {
            "campaign": campaign_id,
            "iteration": s.iteration,
            "iteration_open": s.iteration_open,
            "classes": classes,
        }

    @app.get(f"{API_PREFIX}/campaigns/{{campaign_id}}/metrics")
    def metrics(campaign_id: str) -> dict:
        s = state.require_campaign(campaign_id).state
        n_pairs = len(s.volumes) * len(s.class_ids)
        n_revised = sum(1 for r in s.revisions.values() if r["verdict"] == "revised")
        doc = {
            "campaign": campaign_id,
            "iteration": s.iteration,
            "iteration_open": s.iteration_open,
            "stopped": s.stopped,
            "pool_size": s.pool_size(),
            "status_counts": s.status_counts(),
            "closed_iterations": list(s.closed_iterations),
            "last_stop": s.last_stop,
            "total_pairs": n_pairs,
            "total_resolved": len(s.revisions),
            "total_revised": n_revised,
            "effort_ratio": n_revised / n_pairs if n_pairs else None,
        }
        summary_path = state.root / SUMMARY_NAME
        if summary_path.exists():
            doc["simulation"] = json.loads(summary_path.read_text(encoding="utf-8"))
        return doc

    # --- write side -------------------------------------------------------

    @app.post(f"{API_PREFIX}/campaigns/{{campaign_id}}/revisions", status_code=201)
    def post_revision(
        campaign_id: str,
        body: RevisionIn,
        annotator: str | None = Depends(identity),
    ) -> dict:
        campaign = state.require_campaign(campaign_id)
        s = campaign.state
        who = annotator or body.annotator or "anonymous"
        if annotator is not None and body.annotator not in (None, annotator):
            raise InvalidRevision(
                f"annotator {body.annotator!r} does not match the bearer token"
            )
        if body.verdict not in VERDICTS:
            raise InvalidRevision(f"verdict {body.verdict!r}; one of {VERDICTS}")
        if (body.verdict == "revised") != (body.mask_b64 is not None):
            raise InvalidRevision("mask_b64 must be present iff verdict is revised")

        mask: VoxelGrid | None = None
        mask_sha = None
        if body.mask_b64 is not None:
            try:
                raw = base64.b64decode(body.mask_b64, validate=True)
            except (binascii.Error, ValueError):
                raise InvalidRevision("mask_b64 is not valid base64") from None
            mask = read_volume(raw)
            mask_sha = _canonical_sha256(mask)

        key = (s.iteration, body.volume, body.class_id)
        existing = s.revisions.get(key)
        if existing is not None:
            if existing["verdict"] == body.verdict and existing["mask_sha256"] == mask_sha:
                return _revision_reply(campaign_id, s.iteration, body, existing, replayed=True)
            raise DuplicateRevision(
                f"pair ({body.volume}, {body.class_id}) already resolved this iteration"
                " with a different outcome"
            )

        mask_ref = None
        if mask is not None:
            mask_ref = f"masks/it{s.iteration}_{body.volume}_c{body.class_id}.nii"
            target = state.root / mask_ref
            target.parent.mkdir(parents=True, exist_ok=True)
            write_file(target, mask)
        campaign.record_revision(
            RevisionRecord(
                volume_id=body.volume,
                class_id=body.class_id,
                iteration=s.iteration,
                annotator_id=who,
                verdict=body.verdict,
                mask_ref=mask_ref,
                timestamp=body.timestamp if body.timestamp is not None else time.time(),
            )
        )
        stored = campaign.state.revisions[key]
        return _revision_reply(campaign_id, s.iteration, body, stored, replayed=False)

    @app.post(f"{API_PREFIX}/campaigns/{{campaign_id}}/iterations/advance")
    def advance(
        campaign_id: str,
        body: AdvanceIn,
        _annotator: str | None = Depends(identity),
    ) -> dict:
        campaign = state.require_campaign(campaign_id)
        manifest = campaign.export_finetune_manifest(body.cumulative)
        iteration = campaign.advance_iteration(body.model_tag)
        decision = campaign.check_stop()
        return {
            "campaign": campaign_id,
            "iteration": iteration,
            "model_tag": body.model_tag,
            "stop": campaign.state.last_stop,
            "decision": decision,
            "finetune_manifest": manifest,
        }

    return app


class _Unauthorized(Exception):
    pass


def _canonical_sha256(grid: VoxelGrid) -> str:
    return hashlib.sha256(write_volume(grid)).hexdigest()


def _revision_reply(
    campaign_id: str, iteration: int, body: RevisionIn, stored: dict, *, replayed: bool
) -> dict:
    return {
        "campaign": campaign_id,
        "iteration": iteration,
        "volume": body.volume,
        "class": body.class_id,
        "verdict": stored["verdict"],
        "annotator": stored["annotator_id"],
        "mask_ref": stored["mask_ref"],
        "mask_sha256": stored["mask_sha256"],
        "replayed": replayed,
    }
