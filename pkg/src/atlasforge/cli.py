"""Batch entry points for every pipeline stage.

One binary, subcommand style::

    atlasforge registry [--json]
    atlasforge attention compute --preds manifest.json --out DIR [--classes 7,9]
    atlasforge rank --sizes sizes.jsonl --fraction 0.05 [--out ranked.jsonl]
    atlasforge simulate --scenario scenario.json --out DIR [--halt-after-open]
    atlasforge evaluate --pred DIR --truth DIR [--classes 7,9] [--out report.json]
    atlasforge serve --log events.jsonl --addr 127.0.0.1:8765 [--tokens t.json]

Exit codes are a stable scripting contract: 0 success, 2 usage/config
problems (bad flags, unreadable inputs, values outside documented ranges),
3 data errors (malformed volumes, dimension mismatches, state conflicts).

Every subcommand is deterministic given (inputs, config) and stamps a
provenance block into its outputs: tool version, the effective config and
its hash, and a sha256 per input file. Reruns over unchanged inputs are
byte-identical.

Paths are resolved against ``--data-root``, the ``ATLASFORGE_DATA_ROOT``
environment variable, or the working directory, in that order. A JSON config
file (``--config``) may preset parameters; explicit flags win over the file.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .attention import EnsemblePrediction, attention_maps
from .errors import (
    AtlasforgeError,
    BadConfig,
    BadFraction,
    BadRequest,
    EmptyClassSet,
    EmptyInput,
    EmptyLeaderboard,
    EmptyManifest,
    MissingPredictions,
    MissingVolume,
    TooFewArchitectures,
    UnknownClass,
)
from .labelspace import REGISTRY, LabelGrid, class_by_id, registry_sha256
from .metrics import evaluate
from .ranking import build_priority_list, select_top, to_jsonl, validate_fraction
from .simloop import load_scenario, run_loop
from .volgrid import VolumeManifest, read_file, write_file

# these signal a problem with the invocation, not the data
_USAGE_ERRORS = (
    BadConfig,
    BadFraction,
    BadRequest,
    EmptyClassSet,
    EmptyInput,
    EmptyLeaderboard,
    EmptyManifest,
    MissingPredictions,
    MissingVolume,
    TooFewArchitectures,
    UnknownClass,
)

_CONFIG_KEYS = frozenset(
    {
        "data_root",
        "threshold",
        "overlap_scope",
        "spacing_weighted",
        "fraction",
        "stop_ratio",
        "seed",
    }
)

VOLUME_SUFFIX = ".nii"


# --- plumbing --------------------------------------------------------------------


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _canonical(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def _provenance(command: str, config: dict, inputs: dict[str, Path | list[Path]]) -> dict:
    hashes: dict[str, object] = {}
    for name, target in sorted(inputs.items()):
        if isinstance(target, (list, tuple)):
            hashes[name] = {p.name: _sha256_file(p) for p in sorted(target)}
        else:
            hashes[name] = _sha256_file(target)
    return {
        "tool": "atlasforge",
        "version": __version__,
        "command": command,
        "config": config,
        "config_sha256": hashlib.sha256(_canonical(config).encode()).hexdigest(),
        "inputs": hashes,
    }


def _load_config(args) -> dict:
    if args.config is None:
        return {}
    doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
    if not isinstance(doc, dict):
        raise BadConfig("config file must hold a JSON object")
    unknown = sorted(set(doc) - _CONFIG_KEYS)
    if unknown:
        raise BadConfig(f"unknown config keys {unknown}; allowed: {sorted(_CONFIG_KEYS)}")
    return doc


def _data_root(args, cfg: dict) -> Path | None:
    for value in (args.data_root, cfg.get("data_root"), os.environ.get("ATLASFORGE_DATA_ROOT")):
        if value:
            return Path(value)
    return None


def _resolve(path_str: str, root: Path | None) -> Path:
    p = Path(path_str)
    if p.is_absolute() or root is None:
        return p
    return root / p


def _pick(args, cfg: dict, key: str, default):
    """Effective parameter: explicit flag > config file > default."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    return cfg.get(key, default)


def _parse_class_ids(text: str | None) -> tuple[int, ...] | None:
    if text is None:
        return None
    try:
        ids = tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise BadRequest(f"--classes must be comma-separated integers, got {text!r}") from None
    if not ids:
        raise BadRequest("--classes named no class ids")
    for cid in ids:
        class_by_id(cid)
    return ids


def _emit(path: Path | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")


# --- subcommands -------------------------------------------------------------------


def _cmd_registry(args) -> int:
    if args.json:
        doc = {
            "count": len(REGISTRY),
            "sha256": registry_sha256(),
            "classes": [{"id": c.id, "name": c.name, "group": c.group} for c in REGISTRY],
        }
        print(json.dumps(doc, indent=2, sort_keys=True))
        return 0
    width = max(len(c.name) for c in REGISTRY)
    print(f"{'id':>3}  {'name':<{width}}  group")
    for c in REGISTRY:
        print(f"{c.id:>3}  {c.name:<{width}}  {c.group}")
    print(f"{len(REGISTRY)} structures; registry sha256 {registry_sha256()}")
    return 0


def _ensemble_from_manifest(manifest: VolumeManifest, volume_id: str) -> EnsemblePrediction:
    paths = manifest.prediction_paths(volume_id)
    if not paths:
        raise MissingPredictions(f"volume {volume_id!r} has no predictions in the manifest")
    sources = {
        arch: {cid: (lambda p=path: read_file(p)) for cid, path in by_class.items()}
        for arch, by_class in paths.items()
    }
    return EnsemblePrediction(volume_id=volume_id, sources=sources)


def _cmd_attention_compute(args) -> int:
    cfg = _load_config(args)
    root = _data_root(args, cfg)
    preds_path = _resolve(args.preds, root)
    out_dir = _resolve(args.out, root)
    threshold = float(_pick(args, cfg, "threshold", 0.5))
    scope = _pick(args, cfg, "overlap_scope", "same-arch")
    weighted = bool(_pick(args, cfg, "spacing_weighted", False))
    requested = _parse_class_ids(args.classes)

    manifest = VolumeManifest.load(preds_path)
    if args.volume:
        volume_ids = list(args.volume)
        for vid in volume_ids:
            if vid not in manifest.volumes:
                raise MissingVolume(f"volume {vid!r} not in manifest {preds_path}")
    else:
        volume_ids = [v for v in manifest.volume_ids() if manifest.prediction_paths(v)]
    if not volume_ids:
        raise EmptyManifest(f"manifest {preds_path} lists no volumes with predictions")

    def compute(vid: str) -> list:
        ens = _ensemble_from_manifest(manifest, vid)
        if requested is not None:
            absent = sorted(set(requested) - set(ens.class_ids))
            if absent:
                raise UnknownClass(f"volume {vid}: classes {absent} not predicted")
        maps = attention_maps(
            ens, threshold=threshold, overlap_scope=scope, spacing_weighted=weighted
        )
        return [m for m in maps if requested is None or m.class_id in requested]

    workers = args.workers or min(4, len(volume_ids))
    if workers > 1 and len(volume_ids) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_volume = list(pool.map(compute, volume_ids))
    else:
        per_volume = [compute(vid) for vid in volume_ids]

    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for maps in per_volume:
        for amap in maps:
            rel = f"{amap.volume_id}_c{amap.class_id}{VOLUME_SUFFIX}"
            write_file(out_dir / rel, amap.attention)
            records.append((amap.volume_id, amap.class_id, rel, amap.to_record()))
            if args.update_manifest:
                rel_to_manifest = os.path.relpath(out_dir / rel, manifest.root)
                manifest.set_attention(amap.volume_id, amap.class_id, rel_to_manifest)
    records.sort(key=lambda r: (r[0], r[1]))

    config_echo = {
        "threshold": threshold,
        "overlap_scope": scope,
        "spacing_weighted": weighted,
        "log_base": "e",
        "classes": list(requested) if requested is not None else "all",
    }
    lines = [
        _canonical(
            {"kind": "provenance", **_provenance("attention compute", config_echo, {"preds": preds_path})}
        )
    ]
    lines += [_canonical(rec) for _, _, _, rec in records]
    (out_dir / "sizes.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
    if args.update_manifest:
        manifest.save(preds_path)
    print(f"wrote {len(records)} attention maps for {len(volume_ids)} volumes to {out_dir}")
    return 0


def _cmd_rank(args) -> int:
    cfg = _load_config(args)
    root = _data_root(args, cfg)
    sizes_path = _resolve(args.sizes, root)
    fraction = float(_pick(args, cfg, "fraction", 0.05))
    validate_fraction(fraction)

    by_class: dict[int, dict[str, float]] = {}
    for line in sizes_path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        rec = json.loads(line)
        if "kind" in rec:  # provenance or other non-entry records
            continue
        by_class.setdefault(int(rec["class"]), {})[rec["volume"]] = float(rec["size"])
    if not by_class:
        raise EmptyInput(f"{sizes_path} holds no size records")

    config_echo = {"fraction": fraction, "iteration": args.iteration}
    chunks = [
        _canonical({"kind": "provenance", **_provenance("rank", config_echo, {"sizes": sizes_path})})
        + "\n"
    ]
    for cid in sorted(by_class):
        entries = build_priority_list(by_class[cid], cid)
        selection = select_top(entries, fraction, iteration=args.iteration)
        chunks.append(to_jsonl(entries, selected=frozenset(selection.selected)))
    _emit(_resolve(args.out, root) if args.out else None, "".join(chunks))
    return 0


def _cmd_simulate(args) -> int:
    cfg = _load_config(args)
    root = _data_root(args, cfg)
    scenario_path = _resolve(args.scenario, root)
    out_dir = _resolve(args.out, root)
    scenario = load_scenario(scenario_path)
    trace = run_loop(scenario, out_dir, halt_after_open=args.halt_after_open)
    provenance = _provenance(
        "simulate",
        {"halt_after_open": bool(args.halt_after_open), "seed": scenario.seed},
        {"scenario": scenario_path},
    )
    (out_dir / "provenance.json").write_text(
        json.dumps(provenance, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    summary = trace.summary
    if args.halt_after_open:
        print(f"opened iteration {trace.rows[0]['iteration']} and halted; bundle at {out_dir}")
    else:
        print(
            f"{len(trace.rows)} iterations, final mean DSC"
            f" {summary['final_mean_dsc']:.4f}, revised {summary['total_revised']}"
            f" of {summary['total_pairs']} pairs; artifacts at {out_dir}"
        )
    return 0


def _label_dir(path: Path) -> dict[str, LabelGrid]:
    if not path.is_dir():
        raise MissingVolume(f"{path} is not a directory")
    grids = {}
    for file in sorted(path.glob(f"*{VOLUME_SUFFIX}")):
        grids[file.stem] = LabelGrid(read_file(file))
    if not grids:
        raise MissingVolume(f"{path} holds no *{VOLUME_SUFFIX} label volumes")
    return grids


def _cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    root = _data_root(args, cfg)
    pred_dir = _resolve(args.pred, root)
    truth_dir = _resolve(args.truth, root)
    preds = _label_dir(pred_dir)
    truths = _label_dir(truth_dir)
    requested = _parse_class_ids(args.classes)
    if requested is None:
        present: set[int] = set()
        for grid in truths.values():
            present.update(grid.present_ids())
        requested = tuple(sorted(present))
    report = evaluate(preds, truths, requested, wall_time_s=args.wall_time)
    doc = {
        "report": report.to_record(),
        "provenance": _provenance(
            "evaluate",
            {"classes": list(requested)},
            {
                "pred": sorted(pred_dir.glob(f"*{VOLUME_SUFFIX}")),
                "truth": sorted(truth_dir.glob(f"*{VOLUME_SUFFIX}")),
            },
        ),
    }
    print(f"mean DSC {report.mean_dsc:.4f} over {report.n_volumes} volumes,"
          f" {len(requested)} classes")
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    _emit(_resolve(args.out, root) if args.out else None, text)
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app, load_tokens

    cfg = _load_config(args)
    root = _data_root(args, cfg)
    log_path = _resolve(args.log, root)
    bundle_root = _resolve(args.root, root) if args.root else log_path.parent
    tokens = load_tokens(_resolve(args.tokens, root)) if args.tokens else None
    host, _, port_text = args.addr.rpartition(":")
    if not host or not port_text.isdigit():
        raise BadRequest(f"--addr must look like host:port, got {args.addr!r}")
    app = create_app(bundle_root, tokens=tokens)
    uvicorn.run(app, host=host, port=int(port_text))
    return 0


# --- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="atlasforge",
        description="attention-guided annotation campaign tooling",
    )
    parser.add_argument("--version", action="version", version=f"atlasforge {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; explicit flags win")
    common.add_argument("--data-root", help="base for relative paths (or ATLASFORGE_DATA_ROOT)")

    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("registry", parents=[common], help="dump the 25-structure label registry")
    p.add_argument("--json", action="store_true", help="emit JSON instead of a table")
    p.set_defaults(handler=_cmd_registry)

    attention = sub.add_parser("attention", help="attention map operations")
    asub = attention.add_subparsers(dest="attention_command", metavar="OP")
    p = asub.add_parser(
        "compute", parents=[common], help="compute attention maps from an ensemble manifest"
    )
    p.add_argument("--preds", required=True, help="volume manifest with per-arch predictions")
    p.add_argument("--out", required=True, help="output directory for maps + sizes.jsonl")
    p.add_argument("--classes", help="comma-separated class ids (default: all predicted)")
    p.add_argument("--volume", action="append", help="restrict to this volume id (repeatable)")
    p.add_argument("--threshold", type=float, help="overlap exceedance threshold (default 0.5)")
    p.add_argument(
        "--overlap-scope",
        dest="overlap_scope",
        choices=("same-arch", "any-arch"),
        help="cross-class overlap scope (default same-arch)",
    )
    p.add_argument(
        "--spacing-weighted",
        dest="spacing_weighted",
        action=argparse.BooleanOptionalAction,
        help="weight attention size by voxel volume in mm^3",
    )
    p.add_argument("--workers", type=int, help="thread count across volumes")
    p.add_argument(
        "--update-manifest",
        action="store_true",
        help="record attention paths back into the manifest",
    )
    p.set_defaults(handler=_cmd_attention_compute)

    p = sub.add_parser("rank", parents=[common], help="rank size records and select the top fraction")
    p.add_argument("--sizes", required=True, help="JSONL of {volume, class, size} records")
    p.add_argument("--fraction", type=float, help="selection fraction in (0, 1] (default 0.05)")
    p.add_argument("--iteration", type=int, default=0, help="iteration stamp for the output")
    p.add_argument("--out", help="output JSONL path (default: stdout)")
    p.set_defaults(handler=_cmd_rank)

    p = sub.add_parser("simulate", parents=[common], help="run a synthetic campaign end to end")
    p.add_argument("--scenario", required=True, help="scenario JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument(
        "--halt-after-open",
        action="store_true",
        help="stop after opening iteration 0; leaves a live queue for `serve`",
    )
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser("evaluate", parents=[common], help="mean DSC of predicted vs truth labels")
    p.add_argument("--pred", required=True, help="directory of predicted label volumes")
    p.add_argument("--truth", required=True, help="directory of ground-truth label volumes")
    p.add_argument("--classes", help="comma-separated class ids (default: all present in truth)")
    p.add_argument("--wall-time", type=float, dest="wall_time", help="wall time to record (s)")
    p.add_argument("--out", help="report JSON path (default: stdout)")
    p.set_defaults(handler=_cmd_evaluate)

    p = sub.add_parser("serve", parents=[common], help="serve the /v1 review API over a bundle")
    p.add_argument("--log", required=True, help="campaign event log (events.jsonl)")
    p.add_argument("--addr", default="127.0.0.1:8765", help="host:port to bind")
    p.add_argument("--root", help="bundle root (default: the log's directory)")
    p.add_argument("--tokens", help="JSON file mapping bearer token -> annotator id")
    p.set_defaults(handler=_cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits on --help and usage errors
        return int(exc.code or 0)
    handler = getattr(args, "handler", None)
    if handler is None:
        parser.print_help()
        return 2
    try:
        return handler(args)
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, NotADirectoryError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except AtlasforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
