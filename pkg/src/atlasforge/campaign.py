"""Event-sourced annotation campaign state machine.

A campaign walks (volume, class) pairs through
``unrevised -> selected -> {revised | accepted-no-change} -> signed-off``
across numbered iterations. Every mutation is appended to a JSON-lines event
log as ``{"seq", "kind", "payload", "ts"}`` and state is a pure fold over
those events, so replaying a log always reproduces the exact same snapshot
bytes. Commands validate against current state (and, for revisions, against
the mask on disk), emit one event, and apply it; the fold itself never touches
disk or recomputes attention.

One iteration cycle:

1. ``open_iteration`` scores every pool pair via the attention module, builds
   per-class priority lists, and marks the top fraction selected.
2. ``record_revision`` resolves selected pairs one by one (human or oracle).
3. ``export_finetune_manifest`` emits the revised-only training manifest.
4. ``advance_iteration`` closes the books and bumps the model tag.
5. ``check_stop`` records whether the loop should halt (all-no-change ratio,
   empty pool, or the iteration cap).
6. After a stop, ``final_signoff`` either approves pairs into ``signed-off``
   or reopens them to ``unrevised`` and un-stops the campaign.

Writes are funneled through a single lock per campaign instance; reads hand
out plain dict snapshots.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import volgrid
from .attention import EnsemblePrediction, attention_sizes
from .errors import (
    BadConfig,
    CampaignNotStopped,
    CampaignStopped,
    DimMismatch,
    DuplicateRevision,
    EmptyManifest,
    InvalidRevision,
    IterationAlreadyOpen,
    IterationIncomplete,
    ManifestNotExported,
    MissingPredictions,
    NoOpenIteration,
    NonBinaryInput,
    NotSelected,
    UnknownClass,
)
from .labelspace import class_by_id
from .ranking import build_priority_list, select_top, validate_fraction
from .volgrid import VoxelGrid

VERDICTS = ("revised", "no-change")
STATUSES = ("unrevised", "selected", "revised", "accepted-no-change", "signed-off")
# terminal for ranking purposes; only a reopen brings a pair back
RESOLVED_STATUSES = ("revised", "accepted-no-change", "signed-off")

Clock = Callable[[], float]
MaskLoader = Callable[[str], VoxelGrid]


@dataclass(frozen=True)
class CampaignConfig:
    """Knobs for one campaign; validated on creation."""

    fraction: float = 0.05
    threshold: float = 0.5
    overlap_scope: str = "same-arch"
    stop_ratio: float = 1.0
    max_iterations: int = 20
    spacing_weighted: bool = False
    cumulative_manifest: bool = True

    def validate(self) -> None:
        try:
            validate_fraction(self.fraction)
        except Exception as exc:
            raise BadConfig(str(exc)) from None
        if not 0.0 < self.threshold < 1.0:
            raise BadConfig(f"threshold {self.threshold} outside (0, 1)")
        if self.overlap_scope not in ("same-arch", "any-arch"):
            raise BadConfig(f"overlap_scope {self.overlap_scope!r}")
        if not 0.0 <= self.stop_ratio <= 1.0:
            raise BadConfig(f"stop_ratio {self.stop_ratio} outside [0, 1]")
        if not (isinstance(self.max_iterations, int) and self.max_iterations >= 1):
            raise BadConfig(f"max_iterations {self.max_iterations} must be an int >= 1")

    def to_dict(self) -> dict:
        return {
            "fraction": self.fraction,
            "threshold": self.threshold,
            "overlap_scope": self.overlap_scope,
            "stop_ratio": self.stop_ratio,
            "max_iterations": self.max_iterations,
            "spacing_weighted": self.spacing_weighted,
            "cumulative_manifest": self.cumulative_manifest,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "CampaignConfig":
        return cls(**dict(doc))


@dataclass(frozen=True)
class RevisionRecord:
    """One reviser verdict for a selected (volume, class) pair."""

    volume_id: str
    class_id: int
    iteration: int
    annotator_id: str
    verdict: str
    mask_ref: str | None = None
    timestamp: float = 0.0


@dataclass(frozen=True)
class SignOff:
    reviewer_id: str
    scope: str | tuple[str, ...]  # "campaign" or volume ids
    decision: str  # "approve" | "reopen"
    note: str = ""


@dataclass(frozen=True)
class CampaignState:
    """Immutable fold of the event log. Containers are never mutated in place."""

    campaign_id: str
    model_tag: str
    iteration: int
    config: CampaignConfig
    volumes: tuple[str, ...]
    volume_dims: dict[str, tuple[int, int, int]]
    class_ids: tuple[int, ...]
    status: dict[tuple[str, int], str]
    iteration_open: bool = False
    priority: dict[int, tuple[dict, ...]] = field(default_factory=dict)
    selections: dict[int, tuple[str, ...]] = field(default_factory=dict)
    revisions: dict[tuple[int, str, int], dict] = field(default_factory=dict)
    manifest_iteration: int | None = None
    closed_iterations: tuple[dict, ...] = ()
    last_stop: dict | None = None
    stopped: bool = False
    signoffs: tuple[dict, ...] = ()
    last_seq: int = 0

    # --- derived views -----------------------------------------------------

    def pool(self, class_id: int) -> tuple[str, ...]:
        """Volumes still competing for selection in one class."""
        return tuple(
            vid for vid in self.volumes if self.status[(vid, class_id)] == "unrevised"
        )

    def pool_size(self) -> int:
        return sum(1 for s in self.status.values() if s == "unrevised")

    def open_selected_pairs(self) -> tuple[tuple[str, int], ...]:
        return tuple(
            (vid, cid)
            for cid, vids in sorted(self.selections.items())
            for vid in vids
        )

    def unresolved_selected(self) -> tuple[tuple[str, int], ...]:
        return tuple(
            (vid, cid)
            for vid, cid in self.open_selected_pairs()
            if (self.iteration, vid, cid) not in self.revisions
        )

    def revised_entries(self, *, cumulative: bool) -> list[dict]:
        """Manifest entries, deduplicated to the latest revision per pair."""
        chosen: dict[tuple[str, int], dict] = {}
        for (it, vid, cid), rev in sorted(self.revisions.items()):
            if rev["verdict"] != "revised":
                continue
            if not cumulative and it != self.iteration:
                continue
            entry = {
                "volume": vid,
                "class": cid,
                "mask-path": rev["mask_ref"],
                "annotator": rev["annotator_id"],
                "iteration": it,
            }
            prior = chosen.get((vid, cid))
            if prior is None or prior["iteration"] < it:
                chosen[(vid, cid)] = entry
        return [chosen[k] for k in sorted(chosen)]

    def status_counts(self) -> dict[str, int]:
        counts = {s: 0 for s in STATUSES}
        for s in self.status.values():
            counts[s] += 1
        return counts

    def snapshot(self) -> dict:
        """JSON-safe, deterministic view of the entire state."""
        return {
            "campaign_id": self.campaign_id,
            "model_tag": self.model_tag,
            "iteration": self.iteration,
            "iteration_open": self.iteration_open,
            "stopped": self.stopped,
            "config": self.config.to_dict(),
            "volumes": list(self.volumes),
            "volume_dims": {v: list(d) for v, d in sorted(self.volume_dims.items())},
            "class_ids": list(self.class_ids),
            "status": {
                f"{vid}:{cid}": s for (vid, cid), s in sorted(self.status.items())
            },
            "priority": {str(c): list(v) for c, v in sorted(self.priority.items())},
            "selections": {str(c): list(v) for c, v in sorted(self.selections.items())},
            "revisions": {
                f"{it}:{vid}:{cid}": dict(rev)
                for (it, vid, cid), rev in sorted(self.revisions.items())
            },
            "manifest_iteration": self.manifest_iteration,
            "closed_iterations": list(self.closed_iterations),
            "last_stop": self.last_stop,
            "signoffs": list(self.signoffs),
            "last_seq": self.last_seq,
        }

    def snapshot_bytes(self) -> bytes:
        return canonical_json(self.snapshot()).encode("utf-8")


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


# --- the fold ----------------------------------------------------------------


def apply_event(state: CampaignState | None, event: Mapping) -> CampaignState:
    """Pure state transition; raises on unknown kinds, never on content."""
    kind = event["kind"]
    payload = event["payload"]
    seq = int(event["seq"])
    if kind == "campaign-created":
        config = CampaignConfig.from_dict(payload["config"])
        volumes = tuple(payload["volumes"])
        class_ids = tuple(int(c) for c in payload["class_ids"])
        return CampaignState(
            campaign_id=payload["campaign_id"],
            model_tag=payload["model_tag"],
            iteration=0,
            config=config,
            volumes=volumes,
            volume_dims={
                v: tuple(d) for v, d in payload["volume_dims"].items()
            },
            class_ids=class_ids,
            status={(v, c): "unrevised" for v in volumes for c in class_ids},
            last_seq=seq,
        )
    assert state is not None, "first event must be campaign-created"
    if kind == "iteration-opened":
        status = dict(state.status)
        selections = {
            int(c): tuple(vids) for c, vids in payload["selected"].items()
        }
        for cid, vids in selections.items():
            for vid in vids:
                status[(vid, cid)] = "selected"
        priority = {
            int(c): tuple(dict(e) for e in lst)
            for c, lst in payload["lists"].items()
        }
        return replace(
            state,
            iteration_open=True,
            status=status,
            priority=priority,
            selections=selections,
            last_seq=seq,
        )
    if kind == "revision-recorded":
        vid = payload["volume"]
        cid = int(payload["class"])
        it = int(payload["iteration"])
        status = dict(state.status)
        status[(vid, cid)] = (
            "revised" if payload["verdict"] == "revised" else "accepted-no-change"
        )
        revisions = dict(state.revisions)
        revisions[(it, vid, cid)] = {
            "verdict": payload["verdict"],
            "annotator_id": payload["annotator"],
            "mask_ref": payload["mask_ref"],
            "mask_sha256": payload["mask_sha256"],
            "timestamp": payload["timestamp"],
        }
        return replace(state, status=status, revisions=revisions, last_seq=seq)
    if kind == "manifest-exported":
        return replace(state, manifest_iteration=int(payload["iteration"]), last_seq=seq)
    if kind == "iteration-advanced":
        closed = state.closed_iterations + (dict(payload["closed"]),)
        return replace(
            state,
            iteration=int(payload["iteration"]),
            model_tag=payload["model_tag"],
            iteration_open=False,
            closed_iterations=closed,
            last_seq=seq,
        )
    if kind == "stop-checked":
        return replace(
            state,
            last_stop=dict(payload),
            stopped=payload["decision"] == "stop",
            last_seq=seq,
        )
    if kind == "signoff-recorded":
        scope = payload["scope"]
        volumes = state.volumes if scope == "campaign" else tuple(scope)
        status = dict(state.status)
        new_status = "signed-off" if payload["decision"] == "approve" else "unrevised"
        for vid in volumes:
            for cid in state.class_ids:
                status[(vid, cid)] = new_status
        stopped = state.stopped if payload["decision"] == "approve" else False
        return replace(
            state,
            status=status,
            stopped=stopped,
            signoffs=state.signoffs + (dict(payload),),
            last_seq=seq,
        )
    raise ValueError(f"unknown event kind {kind!r}")


def fold_events(events: Sequence[Mapping]) -> CampaignState:
    state: CampaignState | None = None
    for event in events:
        state = apply_event(state, event)
    if state is None:
        raise EmptyManifest("event log holds no events")
    return state


# --- log ---------------------------------------------------------------------


class EventLog:
    """Append-only JSON-lines event log, optionally backed by a file."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self.events: list[dict] = []
        if self.path is not None and self.path.exists():
            self.events = self.read(self.path)

    def append(self, event: dict) -> None:
        self.events.append(event)
        if self.path is not None:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(canonical_json(event) + "\n")

    @staticmethod
    def read(path: str | Path) -> list[dict]:
        events = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if line:
                events.append(json.loads(line))
        return events


# --- command side --------------------------------------------------------------


def _default_mask_loader(ref: str) -> VoxelGrid:
    return volgrid.read_file(ref)


class Campaign:
    """Command interface over one event log. Single writer, snapshot reads."""

    def __init__(
        self,
        log: EventLog,
        state: CampaignState,
        *,
        clock: Clock | None = None,
        mask_loader: MaskLoader | None = None,
    ):
        self._log = log
        self._state = state
        self._clock = clock if clock is not None else time.time
        self._mask_loader = mask_loader if mask_loader is not None else _default_mask_loader
        self._lock = threading.Lock()

    # --- constructors ------------------------------------------------------

    @classmethod
    def create(
        cls,
        campaign_id: str,
        config: CampaignConfig,
        volume_dims: Mapping[str, Sequence[int]],
        class_ids: Sequence[int],
        model_tag: str,
        *,
        log_path: str | Path | None = None,
        clock: Clock | None = None,
        mask_loader: MaskLoader | None = None,
    ) -> "Campaign":
        config.validate()
        if not campaign_id or not model_tag:
            raise BadConfig("campaign_id and model_tag must be non-empty")
        if not volume_dims or not class_ids:
            raise EmptyManifest("campaign needs at least one volume and one class")
        if len(set(class_ids)) != len(class_ids):
            raise BadConfig("duplicate class ids")
        for cid in class_ids:
            class_by_id(int(cid))
        dims_by_id: dict[str, tuple[int, int, int]] = {}
        for vid in sorted(volume_dims):
            dims = tuple(int(d) for d in volume_dims[vid])
            if len(dims) != 3 or min(dims) < 1:
                raise BadConfig(f"volume {vid!r}: dims {dims} must be three positive ints")
            dims_by_id[vid] = dims
        log = EventLog(log_path)
        if log.events:
            raise BadConfig(f"event log {log_path} already holds a campaign")
        campaign = cls(log, None, clock=clock, mask_loader=mask_loader)  # type: ignore[arg-type]
        campaign._state = None  # type: ignore[assignment]
        campaign._emit(
            "campaign-created",
            {
                "campaign_id": campaign_id,
                "model_tag": model_tag,
                "config": config.to_dict(),
                "volumes": sorted(dims_by_id),
                "volume_dims": {v: list(d) for v, d in dims_by_id.items()},
                "class_ids": [int(c) for c in sorted(class_ids)],
            },
        )
        return campaign

    @classmethod
    def replay(
        cls,
        log_path: str | Path,
        *,
        clock: Clock | None = None,
        mask_loader: MaskLoader | None = None,
    ) -> "Campaign":
        log = EventLog(log_path)
        state = fold_events(log.events)
        return cls(log, state, clock=clock, mask_loader=mask_loader)

    @classmethod
    def from_events(cls, events: Sequence[Mapping], **kwargs) -> "Campaign":
        log = EventLog(None)
        log.events = [dict(e) for e in events]
        return cls(log, fold_events(log.events), **kwargs)

    # --- plumbing ------------------------------------------------------------

    @property
    def state(self) -> CampaignState:
        return self._state

    @property
    def events(self) -> list[dict]:
        return list(self._log.events)

    def _emit(self, kind: str, payload: dict) -> None:
        seq = (self._state.last_seq if self._state is not None else 0) + 1
        event = {"seq": seq, "kind": kind, "payload": payload, "ts": float(self._clock())}
        self._state = apply_event(self._state, event)
        self._log.append(event)

    # --- commands -------------------------------------------------------------

    def open_iteration(
        self, predictions: Mapping[str, EnsemblePrediction]
    ) -> dict[int, tuple[str, ...]]:
        """Score the pool, rank per class, select the top fraction."""
        with self._lock:
            s = self._state
            if s.iteration_open:
                raise IterationAlreadyOpen(f"iteration {s.iteration} is open")
            if s.stopped:
                raise CampaignStopped("campaign is stopped; reopen via final_signoff")
            pools = {cid: s.pool(cid) for cid in s.class_ids}
            pool_volumes = sorted({vid for vids in pools.values() for vid in vids})
            missing = [vid for vid in pool_volumes if vid not in predictions]
            if missing:
                raise MissingPredictions(f"no predictions for volumes {missing}")
            for vid in pool_volumes:
                ens = predictions[vid]
                if ens.volume_id != vid:
                    raise MissingPredictions(
                        f"prediction keyed {vid!r} is for volume {ens.volume_id!r}"
                    )
                absent = set(s.class_ids) - set(ens.class_ids)
                if absent:
                    raise MissingPredictions(
                        f"volume {vid}: missing classes {sorted(absent)}"
                    )
            cfg = s.config
            sizes: dict[str, dict[int, float]] = {
                vid: attention_sizes(
                    predictions[vid],
                    threshold=cfg.threshold,
                    overlap_scope=cfg.overlap_scope,
                    spacing_weighted=cfg.spacing_weighted,
                )
                for vid in pool_volumes
            }
            lists: dict[str, list[dict]] = {}
            selected: dict[str, list[str]] = {}
            for cid in s.class_ids:
                if not pools[cid]:
                    lists[str(cid)] = []
                    selected[str(cid)] = []
                    continue
                entries = build_priority_list(
                    {vid: sizes[vid][cid] for vid in pools[cid]}, cid
                )
                sel = select_top(entries, cfg.fraction, iteration=s.iteration)
                lists[str(cid)] = [e.to_record() for e in entries]
                selected[str(cid)] = list(sel.selected)
            self._emit(
                "iteration-opened",
                {"iteration": s.iteration, "lists": lists, "selected": selected},
            )
            return {int(c): tuple(v) for c, v in selected.items()}

    def record_revision(self, record: RevisionRecord) -> None:
        with self._lock:
            s = self._state
            if not s.iteration_open:
                raise NoOpenIteration("no iteration open")
            if record.iteration != s.iteration:
                raise InvalidRevision(
                    f"revision targets iteration {record.iteration}, open is {s.iteration}"
                )
            if record.verdict not in VERDICTS:
                raise InvalidRevision(f"verdict {record.verdict!r}; one of {VERDICTS}")
            if (record.verdict == "revised") != (record.mask_ref is not None):
                raise InvalidRevision("mask_ref must be present iff verdict is revised")
            if not record.annotator_id:
                raise InvalidRevision("annotator_id must be non-empty")
            cid = int(record.class_id)
            vid = record.volume_id
            if cid not in s.class_ids:
                raise UnknownClass(f"class {cid} not part of this campaign")
            key = (s.iteration, vid, cid)
            if key in s.revisions:
                raise DuplicateRevision(f"pair ({vid}, {cid}) already resolved this iteration")
            if vid not in s.selections.get(cid, ()):
                raise NotSelected(f"pair ({vid}, {cid}) not selected in iteration {s.iteration}")
            mask_sha256 = None
            if record.verdict == "revised":
                mask = self._mask_loader(record.mask_ref)
                if mask.dims != s.volume_dims[vid]:
                    raise DimMismatch(
                        f"mask dims {mask.dims} != volume dims {s.volume_dims[vid]}"
                    )
                if not np.isin(mask.values, (0, 1)).all():
                    raise NonBinaryInput("revised mask contains values other than 0/1")
                # hash of canonical content, independent of where the file lives
                mask_sha256 = hashlib.sha256(volgrid.write_volume(mask)).hexdigest()
            self._emit(
                "revision-recorded",
                {
                    "iteration": s.iteration,
                    "volume": vid,
                    "class": cid,
                    "annotator": record.annotator_id,
                    "verdict": record.verdict,
                    "mask_ref": record.mask_ref,
                    "mask_sha256": mask_sha256,
                    "timestamp": float(record.timestamp),
                },
            )

    def export_finetune_manifest(self, cumulative: bool | None = None) -> dict:
        """Training manifest of revised pairs; never includes no-change pairs."""
        with self._lock:
            s = self._state
            if not s.iteration_open:
                raise NoOpenIteration("no iteration open")
            unresolved = s.unresolved_selected()
            if unresolved:
                raise IterationIncomplete(f"unresolved selected pairs: {list(unresolved)}")
            if cumulative is None:
                cumulative = s.config.cumulative_manifest
            manifest = {
                "iteration": s.iteration,
                "model-tag": s.model_tag,
                "cumulative": bool(cumulative),
                "entries": s.revised_entries(cumulative=bool(cumulative)),
            }
            self._emit(
                "manifest-exported",
                {"iteration": s.iteration, "cumulative": bool(cumulative),
                 "n_entries": len(manifest["entries"])},
            )
            return manifest

    def advance_iteration(self, new_model_tag: str) -> int:
        """Close the open iteration and move to t+1 under the new model tag."""
        with self._lock:
            s = self._state
            if not s.iteration_open:
                raise NoOpenIteration("no iteration open")
            if not new_model_tag:
                raise BadConfig("new model tag must be non-empty")
            unresolved = s.unresolved_selected()
            if unresolved:
                raise IterationIncomplete(f"unresolved selected pairs: {list(unresolved)}")
            if s.manifest_iteration != s.iteration:
                raise ManifestNotExported(
                    f"export the fine-tune manifest for iteration {s.iteration} first"
                )
            pairs = s.open_selected_pairs()
            n_revised = sum(
                1
                for vid, cid in pairs
                if s.revisions[(s.iteration, vid, cid)]["verdict"] == "revised"
            )
            closed = {
                "iteration": s.iteration,
                "n_selected": len(pairs),
                "n_revised": n_revised,
                "n_no_change": len(pairs) - n_revised,
            }
            self._emit(
                "iteration-advanced",
                {"iteration": s.iteration + 1, "model_tag": new_model_tag, "closed": closed},
            )
            return self._state.iteration

    def check_stop(self) -> str:
        """Record and return the stop decision for the just-closed iteration."""
        with self._lock:
            s = self._state
            if s.iteration_open:
                raise IterationAlreadyOpen("close the iteration before check_stop")
            pool_size = s.pool_size()
            ratio = None
            decision = "continue"
            if s.closed_iterations:
                last = s.closed_iterations[-1]
                if last["n_selected"] > 0:
                    ratio = last["n_no_change"] / last["n_selected"]
                    if ratio >= s.config.stop_ratio:
                        decision = "stop"
            if pool_size == 0:
                decision = "stop"
            if s.iteration >= s.config.max_iterations:
                decision = "stop"
            self._emit(
                "stop-checked",
                {
                    "iteration": s.iteration,
                    "decision": decision,
                    "no_change_ratio": ratio,
                    "pool_size": pool_size,
                },
            )
            return decision

    def final_signoff(self, signoff: SignOff) -> None:
        with self._lock:
            s = self._state
            if not s.stopped:
                raise CampaignNotStopped("check_stop must record a stop before sign-off")
            if signoff.decision not in ("approve", "reopen"):
                raise BadConfig(f"decision {signoff.decision!r}; approve or reopen")
            if signoff.scope != "campaign":
                scope = tuple(signoff.scope)
                unknown = [v for v in scope if v not in s.volumes]
                if unknown:
                    raise BadConfig(f"sign-off scope references unknown volumes {unknown}")
            else:
                scope = "campaign"
            if not signoff.reviewer_id:
                raise BadConfig("reviewer_id must be non-empty")
            self._emit(
                "signoff-recorded",
                {
                    "reviewer": signoff.reviewer_id,
                    "scope": scope if scope == "campaign" else list(scope),
                    "decision": signoff.decision,
                    "note": signoff.note,
                },
            )

    # --- persistence ----------------------------------------------------------

    def snapshot(self) -> dict:
        return self._state.snapshot()

    def snapshot_bytes(self) -> bytes:
        return self._state.snapshot_bytes()

    def save_snapshot(self, path: str | Path) -> None:
        Path(path).write_bytes(self.snapshot_bytes() + b"\n")
