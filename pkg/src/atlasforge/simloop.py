"""Synthetic end-to-end simulation of the revision campaign.

Builds phantom volumes (spheres, boxes, thin tubes) with known ground truth,
fakes an ensemble of imperfect model architectures whose error decays on a
fixed per-iteration schedule, lets a deterministic oracle annotator play the
human reviser, and drives a full campaign to its stop condition while
recording quality and effort per iteration.

The simulated model for architecture A, volume V, class C freezes one
corruption field ``base = clip(blur(onehot, sigma) + bias + confusion *
smooth_noise, 0, 1)`` derived only from (A.seed, V, C), and predicts
``p_t = (1 - m_t) * onehot + m_t * base`` at iteration t, where m_t is the
architecture's non-increasing error multiplier. Because every voxel moves
monotonically toward the truth as m_t shrinks, mean DSC never decreases
across iterations, and m_t = 0 reproduces the one-hot truth exactly (zero
attention everywhere).

Everything (phantoms, noise, campaign events, file layout) is a pure function
of (scenario, seed); two runs of the same scenario produce byte-identical
traces, summaries and event logs. All paths recorded inside artifacts are
relative to the output directory.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage, stats

from .attention import EnsemblePrediction, attention_maps
from .campaign import Campaign, CampaignConfig, RevisionRecord, SignOff
from .errors import BadConfig, ShapeOutOfBounds, TooFewArchitectures
from .labelspace import LabelGrid, to_binary_mask
from .metrics import dsc
from .volgrid import VolumeManifest, VoxelGrid, write_file

DEFAULT_ACCEPTANCE_DSC = 0.95


# --- phantoms -----------------------------------------------------------------


@dataclass(frozen=True)
class ShapeSpec:
    """One analytic shape; all coordinates are voxel indices."""

    class_id: int
    kind: str  # "sphere" | "box" | "tube"
    params: dict

    def bounds(self) -> tuple[tuple[float, float], ...]:
        """Axis-aligned extent that must fit inside the volume."""
        p = self.params
        if self.kind == "sphere":
            c, r = p["center"], p["radius"]
            return tuple((c[i] - r, c[i] + r) for i in range(3))
        if self.kind == "box":
            c, h = p["center"], p["half_extents"]
            return tuple((c[i] - h[i], c[i] + h[i]) for i in range(3))
        if self.kind == "tube":
            axis, r = p["axis"], p["radius"]
            lo, hi = p["span"]
            cross = p["cross_center"]
            others = [a for a in range(3) if a != axis]
            out: list[tuple[float, float]] = [(0.0, 0.0)] * 3
            out[axis] = (lo, hi)
            for cc, a in zip(cross, others):
                out[a] = (cc - r, cc + r)
            return tuple(out)
        raise BadConfig(f"unknown shape kind {self.kind!r}")


@dataclass(frozen=True)
class PhantomSpec:
    dims: tuple[int, int, int]
    shapes: tuple[ShapeSpec, ...]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    seed: int = 0
    image_noise: float = 0.05


def _membership(shape: ShapeSpec, dims: tuple[int, int, int]) -> np.ndarray:
    x, y, z = np.meshgrid(*(np.arange(n, dtype=np.float64) for n in dims), indexing="ij")
    coords = (x, y, z)
    p = shape.params
    if shape.kind == "sphere":
        cx, cy, cz = p["center"]
        r = p["radius"]
        return (x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2 <= r**2
    if shape.kind == "box":
        c, h = p["center"], p["half_extents"]
        inside = np.ones(dims, dtype=bool)
        for i in range(3):
            inside &= np.abs(coords[i] - c[i]) <= h[i]
        return inside
    if shape.kind == "tube":
        axis, r = p["axis"], p["radius"]
        lo, hi = p["span"]
        others = [a for a in range(3) if a != axis]
        ca, cb = p["cross_center"]
        dist2 = (coords[others[0]] - ca) ** 2 + (coords[others[1]] - cb) ** 2
        return (dist2 <= r**2) & (coords[axis] >= lo) & (coords[axis] <= hi)
    raise BadConfig(f"unknown shape kind {shape.kind!r}")


def generate_phantom(spec: PhantomSpec) -> tuple[VoxelGrid, LabelGrid]:
    """Deterministic (image, truth-labels) pair for one phantom volume.

    Shapes must lie fully inside the volume; later-listed shapes overwrite
    earlier ones where they overlap.
    """
    dims = spec.dims
    for shape in spec.shapes:
        for axis, (lo, hi) in enumerate(shape.bounds()):
            if lo < 0 or hi > dims[axis] - 1:
                raise ShapeOutOfBounds(
                    f"class {shape.class_id} {shape.kind} spans [{lo}, {hi}]"
                    f" outside axis {axis} of dims {dims}"
                )
    labels = np.zeros(dims, dtype=np.uint8)
    intensity = np.full(dims, 0.1, dtype=np.float64)
    for i, shape in enumerate(spec.shapes):
        inside = _membership(shape, dims)
        labels[inside] = shape.class_id
        intensity[inside] = 0.35 + 0.18 * i
    rng = np.random.default_rng(spec.seed)
    intensity = intensity + rng.normal(0.0, spec.image_noise, size=dims)
    image = VoxelGrid(np.clip(intensity, 0.0, 1.0).astype(np.float32), spec.spacing)
    truth = LabelGrid(VoxelGrid(labels, spec.spacing))
    return image, truth


# --- simulated architectures ----------------------------------------------------


@dataclass(frozen=True)
class SimModelSpec:
    """One fake architecture: frozen corruption plus an error-decay schedule."""

    tag: str
    blur_sigma: float
    confusion_rate: float
    bias: float = 0.0
    seed: int = 0
    schedule: tuple[tuple[int, float], ...] = ((0, 1.0),)

    def __post_init__(self) -> None:
        if not self.tag:
            raise BadConfig("model tag must be non-empty")
        if self.blur_sigma < 0 or self.confusion_rate < 0:
            raise BadConfig("blur_sigma and confusion_rate must be >= 0")
        sched = tuple(sorted((int(k), float(v)) for k, v in self.schedule))
        if not sched or sched[0][0] != 0:
            raise BadConfig("schedule must define iteration 0")
        mults = [v for _, v in sched]
        if any(not 0.0 <= v <= 1.0 for v in mults):
            raise BadConfig("error multipliers must lie in [0, 1]")
        if any(later > earlier for earlier, later in zip(mults, mults[1:])):
            raise BadConfig("error multiplier schedule must be non-increasing")
        object.__setattr__(self, "schedule", sched)

    def multiplier_at(self, iteration: int) -> float:
        value = self.schedule[0][1]
        for it, mult in self.schedule:
            if it <= iteration:
                value = mult
            else:
                break
        return value

    def to_dict(self) -> dict:
        return {
            "tag": self.tag,
            "blur_sigma": self.blur_sigma,
            "confusion_rate": self.confusion_rate,
            "bias": self.bias,
            "seed": self.seed,
            "schedule": {str(k): v for k, v in self.schedule},
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "SimModelSpec":
        return cls(
            tag=doc["tag"],
            blur_sigma=float(doc["blur_sigma"]),
            confusion_rate=float(doc["confusion_rate"]),
            bias=float(doc.get("bias", 0.0)),
            seed=int(doc.get("seed", 0)),
            schedule=tuple((int(k), float(v)) for k, v in doc["schedule"].items()),
        )


def _volume_key(volume_id: str) -> int:
    digest = hashlib.sha256(volume_id.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def volume_difficulty(volume_id: str) -> float:
    """Intrinsic per-volume difficulty in [0.5, 1.5], shared by all architectures.

    Scales each architecture's corruption so that hard volumes are hard for
    the whole ensemble; this is what makes attention size track actual error
    across volumes rather than just anatomy size.
    """
    rng = np.random.default_rng([_volume_key(volume_id), 7919])
    return 0.5 + float(rng.uniform(0.0, 1.0))


def _base_field(spec: SimModelSpec, volume_id: str, class_id: int, onehot: np.ndarray) -> np.ndarray:
    rng = np.random.default_rng([spec.seed, _volume_key(volume_id), class_id])
    difficulty = volume_difficulty(volume_id)
    noise = ndimage.gaussian_filter(rng.standard_normal(onehot.shape), sigma=2.0)
    lo, hi = float(noise.min()), float(noise.max())
    noise = (noise - lo) / (hi - lo) if hi > lo else np.zeros_like(noise)
    sigma = spec.blur_sigma * difficulty
    base = ndimage.gaussian_filter(onehot, sigma=sigma) if sigma > 0 else onehot
    return np.clip(base + spec.bias + spec.confusion_rate * difficulty * noise, 0.0, 1.0)


def simulate_ensemble(
    volume_id: str,
    truth: LabelGrid,
    specs: Sequence[SimModelSpec],
    iteration: int,
    class_ids: Sequence[int] | None = None,
) -> EnsemblePrediction:
    """Soft per-class predictions for one volume at one iteration."""
    if len(specs) < 2:
        raise TooFewArchitectures(f"{len(specs)} architecture(s), need >= 2")
    if len({s.tag for s in specs}) != len(specs):
        raise BadConfig("duplicate architecture tags")
    ids = tuple(class_ids) if class_ids is not None else truth.present_ids()
    sources: dict[str, dict[int, VoxelGrid]] = {}
    for spec in specs:
        m = spec.multiplier_at(iteration)
        by_class: dict[int, VoxelGrid] = {}
        for cid in ids:
            onehot = (truth.grid.values == cid).astype(np.float64)
            if m == 0.0:
                p = onehot
            else:
                base = _base_field(spec, volume_id, int(cid), onehot)
                p = np.clip((1.0 - m) * onehot + m * base, 0.0, 1.0)
            by_class[int(cid)] = VoxelGrid(p.astype(np.float32), truth.spacing)
        sources[spec.tag] = by_class
    return EnsemblePrediction(volume_id=volume_id, sources=sources)


def consensus_mask(ens: EnsemblePrediction, class_id: int, threshold: float = 0.5) -> VoxelGrid:
    """Binary mask where the architecture-mean soft value exceeds threshold."""
    grids = [ens.grid(arch, class_id) for arch in ens.architectures]
    mean = np.mean([g.values.astype(np.float64) for g in grids], axis=0)
    return VoxelGrid((mean > threshold).astype(np.uint8), grids[0].spacing)


# --- oracle annotator -----------------------------------------------------------


def oracle_annotator(
    volume_id: str,
    class_id: int,
    iteration: int,
    ai_mask: VoxelGrid,
    truth_mask: VoxelGrid,
    *,
    acceptance_dsc: float = DEFAULT_ACCEPTANCE_DSC,
    annotator_id: str = "oracle-1",
    mask_dir: Path | None = None,
    mask_ref: str | None = None,
    timestamp: float = 0.0,
) -> RevisionRecord:
    """Simulated reviser: accepts when the AI mask's DSC clears the bar.

    Below the bar it replaces the mask with ground truth (written under
    ``mask_dir`` at the relative path ``mask_ref``) and reports ``revised``;
    at or above the bar it reports ``no-change``.
    """
    score = dsc(ai_mask, truth_mask)
    if score >= acceptance_dsc:
        return RevisionRecord(
            volume_id=volume_id,
            class_id=class_id,
            iteration=iteration,
            annotator_id=annotator_id,
            verdict="no-change",
            timestamp=timestamp,
        )
    if mask_dir is None:
        raise BadConfig("mask_dir is required when the oracle revises")
    ref = mask_ref or f"masks/it{iteration}_{volume_id}_c{class_id}.nii"
    target = Path(mask_dir) / ref
    target.parent.mkdir(parents=True, exist_ok=True)
    write_file(target, truth_mask)
    return RevisionRecord(
        volume_id=volume_id,
        class_id=class_id,
        iteration=iteration,
        annotator_id=annotator_id,
        verdict="revised",
        mask_ref=ref,
        timestamp=timestamp,
    )


# --- scenario -------------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    """Everything needed to reproduce one simulated campaign."""

    name: str
    seed: int
    n_volumes: int
    dims: tuple[int, int, int]
    classes: tuple[tuple[int, str], ...]  # (class id, shape kind), listing order
    models: tuple[SimModelSpec, ...]
    campaign: CampaignConfig = field(default_factory=CampaignConfig)
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    image_noise: float = 0.05
    acceptance_dsc: float = DEFAULT_ACCEPTANCE_DSC

    def __post_init__(self) -> None:
        if self.n_volumes < 1:
            raise BadConfig("scenario needs at least one volume")
        if not self.classes:
            raise BadConfig("scenario needs at least one class")
        if len(self.models) < 2:
            raise TooFewArchitectures("scenario needs at least two architectures")
        if not 0.0 < self.acceptance_dsc <= 1.0:
            raise BadConfig("acceptance_dsc outside (0, 1]")
        kinds = {kind for _, kind in self.classes}
        bad = kinds - {"sphere", "box", "tube"}
        if bad:
            raise BadConfig(f"unknown shape kinds {sorted(bad)}")

    @property
    def class_ids(self) -> tuple[int, ...]:
        return tuple(cid for cid, _ in self.classes)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "volumes": self.n_volumes,
            "dims": list(self.dims),
            "spacing": list(self.spacing),
            "image_noise": self.image_noise,
            "acceptance_dsc": self.acceptance_dsc,
            "classes": [{"id": cid, "shape": kind} for cid, kind in self.classes],
            "models": [m.to_dict() for m in self.models],
            "campaign": self.campaign.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "Scenario":
        return cls(
            name=doc["name"],
            seed=int(doc["seed"]),
            n_volumes=int(doc["volumes"]),
            dims=tuple(int(d) for d in doc["dims"]),
            spacing=tuple(float(s) for s in doc.get("spacing", (1.0, 1.0, 1.0))),
            image_noise=float(doc.get("image_noise", 0.05)),
            acceptance_dsc=float(doc.get("acceptance_dsc", DEFAULT_ACCEPTANCE_DSC)),
            classes=tuple((int(c["id"]), c["shape"]) for c in doc["classes"]),
            models=tuple(SimModelSpec.from_dict(m) for m in doc["models"]),
            campaign=CampaignConfig.from_dict(doc.get("campaign", {})),
        )


def load_scenario(path: str | Path) -> Scenario:
    return Scenario.from_dict(json.loads(Path(path).read_text()))


def _random_shape(
    rng: np.random.Generator, dims: tuple[int, int, int], class_id: int, kind: str
) -> ShapeSpec:
    n = min(dims)
    if kind == "sphere":
        r = float(rng.uniform(0.13 * n, 0.2 * n))
        center = [float(rng.uniform(r + 1, d - r - 2)) for d in dims]
        return ShapeSpec(class_id, "sphere", {"center": center, "radius": r})
    if kind == "box":
        half = [float(rng.uniform(0.1 * n, 0.16 * n)) for _ in range(3)]
        center = [float(rng.uniform(h + 1, d - h - 2)) for h, d in zip(half, dims)]
        return ShapeSpec(class_id, "box", {"center": center, "half_extents": half})
    # thin tube along a random axis
    axis = int(rng.integers(0, 3))
    r = float(rng.uniform(1.5, 2.4))
    lo = float(rng.uniform(1, 0.2 * dims[axis]))
    hi = float(rng.uniform(0.8 * dims[axis], dims[axis] - 2))
    others = [a for a in range(3) if a != axis]
    cross = [float(rng.uniform(r + 1, dims[a] - r - 2)) for a in others]
    return ShapeSpec(
        class_id, "tube", {"axis": axis, "radius": r, "span": [lo, hi], "cross_center": cross}
    )


def scenario_phantoms(scenario: Scenario) -> dict[str, tuple[VoxelGrid, LabelGrid]]:
    """volume id -> (image, truth), deterministic in the scenario seed."""
    out: dict[str, tuple[VoxelGrid, LabelGrid]] = {}
    for i in range(scenario.n_volumes):
        rng = np.random.default_rng([scenario.seed, i])
        shapes = tuple(
            _random_shape(rng, scenario.dims, cid, kind) for cid, kind in scenario.classes
        )
        spec = PhantomSpec(
            dims=scenario.dims,
            shapes=shapes,
            spacing=scenario.spacing,
            seed=int(rng.integers(0, 2**31 - 1)),
            image_noise=scenario.image_noise,
        )
        out[f"vol-{i:03d}"] = generate_phantom(spec)
    return out


# --- the loop -------------------------------------------------------------------


@dataclass(frozen=True)
class LoopTrace:
    scenario_name: str
    rows: tuple[dict, ...]
    summary: dict


class _CounterClock:
    """Deterministic stand-in for wall time inside simulations."""

    def __init__(self) -> None:
        self.now = 0.0

    def __call__(self) -> float:
        self.now += 1.0
        return self.now


def _mean_dsc(
    phantoms: Mapping[str, tuple[VoxelGrid, LabelGrid]],
    predictions: Mapping[str, EnsemblePrediction],
    class_ids: Sequence[int],
) -> tuple[float, dict[tuple[str, int], float]]:
    per_pair: dict[tuple[str, int], float] = {}
    for vid, (_, truth) in phantoms.items():
        for cid in class_ids:
            ai = consensus_mask(predictions[vid], cid)
            per_pair[(vid, cid)] = dsc(ai, to_binary_mask(truth, cid))
    return float(np.mean(list(per_pair.values()))), per_pair


def run_loop(scenario: Scenario, out_dir: str | Path, *, halt_after_open: bool = False) -> LoopTrace:
    """Drive one campaign to its stop condition (or just past the first open).

    Writes under ``out_dir``: ``events.jsonl`` (campaign log), ``masks/``
    (oracle revisions), ``trace.jsonl``, ``summary.json``, ``dsc_curve.csv``,
    ``volumes/`` + ``attention/`` + ``manifest.json`` (a browsable bundle for
    the HTTP service), and ``scenario.json`` (the input, echoed).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    phantoms = scenario_phantoms(scenario)
    class_ids = scenario.class_ids
    clock = _CounterClock()

    campaign = Campaign.create(
        f"sim-{scenario.name}",
        scenario.campaign,
        {vid: pair[1].dims for vid, pair in phantoms.items()},
        class_ids,
        "model-0",
        log_path=out / "events.jsonl",
        clock=clock,
        mask_loader=lambda ref: _load_relative(out, ref),
    )

    rows: list[dict] = []
    spearman: float | None = None
    last_predictions: Mapping[str, EnsemblePrediction] = {}
    stop_info: dict | None = None
    while True:
        t = campaign.state.iteration
        predictions = {
            vid: simulate_ensemble(vid, truth, scenario.models, t, class_ids)
            for vid, (_, truth) in phantoms.items()
        }
        last_predictions = predictions
        mean_dsc, per_pair_dsc = _mean_dsc(phantoms, predictions, class_ids)
        selections = campaign.open_iteration(predictions)

        sizes = {
            (entry["volume"], cid): entry["size"]
            for cid, entries in campaign.state.priority.items()
            for entry in entries
        }
        if t == 0 and len(sizes) >= 2:
            pairs = sorted(sizes)
            att = [sizes[p] for p in pairs]
            err = [1.0 - per_pair_dsc[p] for p in pairs]
            # undefined on constant input (e.g. perfect models, all sizes 0)
            if len(set(att)) > 1 and len(set(err)) > 1:
                spearman = float(stats.spearmanr(att, err).statistic)

        if halt_after_open:
            rows.append(_trace_row(t, mean_dsc, sizes, selections, 0, 0, campaign))
            break

        n_revised = 0
        n_no_change = 0
        for cid, vids in sorted(selections.items()):
            for vid in vids:
                record = oracle_annotator(
                    vid,
                    cid,
                    t,
                    consensus_mask(predictions[vid], cid),
                    to_binary_mask(phantoms[vid][1], cid),
                    acceptance_dsc=scenario.acceptance_dsc,
                    mask_dir=out,
                    timestamp=clock(),
                )
                campaign.record_revision(record)
                if record.verdict == "revised":
                    n_revised += 1
                else:
                    n_no_change += 1
        campaign.export_finetune_manifest()
        campaign.advance_iteration(f"model-{t + 1}")
        rows.append(_trace_row(t, mean_dsc, sizes, selections, n_revised, n_no_change, campaign))
        decision = campaign.check_stop()
        if decision == "stop":
            stop_info = campaign.state.last_stop
            campaign.final_signoff(SignOff("senior-1", "campaign", "approve", note="loop complete"))
            break

    total_pairs = len(phantoms) * len(class_ids)
    total_selected = sum(r["n_selected"] for r in rows)
    total_revised = sum(r["n_revised"] for r in rows)
    summary = {
        "scenario": scenario.name,
        "seed": scenario.seed,
        "iterations": [r["iteration"] for r in rows],
        "final_mean_dsc": rows[-1]["mean_dsc"] if rows else None,
        "mean_dsc_curve": [r["mean_dsc"] for r in rows],
        "attention_error_spearman_iter0": spearman,
        "total_pairs": total_pairs,
        "total_selected": total_selected,
        "total_revised": total_revised,
        "effort_ratio": total_revised / total_pairs if total_pairs else None,
        "halted_after_open": halt_after_open,
        "stop": stop_info,
        "campaign_snapshot_sha256": hashlib.sha256(campaign.snapshot_bytes()).hexdigest(),
    }

    _write_trace_files(out, scenario, rows, summary)
    _export_bundle(out, scenario, phantoms, last_predictions)
    return LoopTrace(scenario_name=scenario.name, rows=tuple(rows), summary=summary)


def _load_relative(root: Path, ref: str):
    from .volgrid import read_file

    path = Path(ref)
    return read_file(path if path.is_absolute() else root / ref)


def _trace_row(
    t: int,
    mean_dsc: float,
    sizes: Mapping[tuple[str, int], float],
    selections: Mapping[int, tuple[str, ...]],
    n_revised: int,
    n_no_change: int,
    campaign: Campaign,
) -> dict:
    values = sorted(sizes.values())
    n_selected = sum(len(v) for v in selections.values())
    return {
        "iteration": t,
        "mean_dsc": mean_dsc,
        "attention_sizes": {
            "count": len(values),
            "sum": float(np.sum(values)) if values else 0.0,
            "mean": float(np.mean(values)) if values else 0.0,
            "min": values[0] if values else 0.0,
            "max": values[-1] if values else 0.0,
        },
        "n_selected": n_selected,
        "n_revised": n_revised,
        "n_no_change": n_no_change,
        "pool_after": campaign.state.pool_size(),
        "model_tag": campaign.state.model_tag,
    }


def _write_trace_files(out: Path, scenario: Scenario, rows: list[dict], summary: dict) -> None:
    with (out / "trace.jsonl").open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    (out / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (out / "scenario.json").write_text(
        json.dumps(scenario.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["iteration", "mean_dsc"])
    for row in rows:
        writer.writerow([row["iteration"], repr(row["mean_dsc"])])
    (out / "dsc_curve.csv").write_text(buf.getvalue(), encoding="utf-8")


def _export_bundle(
    out: Path,
    scenario: Scenario,
    phantoms: Mapping[str, tuple[VoxelGrid, LabelGrid]],
    predictions: Mapping[str, EnsemblePrediction],
) -> None:
    """Images, truth labels and latest attention maps, plus the manifest."""
    (out / "volumes").mkdir(exist_ok=True)
    (out / "attention").mkdir(exist_ok=True)
    manifest = VolumeManifest(root=out)
    cfg = scenario.campaign
    for vid in sorted(phantoms):
        image, truth = phantoms[vid]
        image_rel = f"volumes/{vid}_image.nii"
        label_rel = f"volumes/{vid}_label.nii"
        write_file(out / image_rel, image)
        write_file(out / label_rel, truth.grid)
        manifest.set_image(vid, image_rel)
        manifest.set_label(vid, label_rel)
        if vid in predictions:
            for amap in attention_maps(
                predictions[vid],
                threshold=cfg.threshold,
                overlap_scope=cfg.overlap_scope,
                spacing_weighted=cfg.spacing_weighted,
            ):
                rel = f"attention/{vid}_c{amap.class_id}.nii"
                write_file(out / rel, amap.attention)
                manifest.set_attention(vid, amap.class_id, rel)
    manifest.save(out / "manifest.json")
