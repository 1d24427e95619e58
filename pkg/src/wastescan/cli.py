"""Command-line entry points: scan, eval, grid, dataset, serve."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import datasetkit, evalkit
from .backend import BackendConfig
from .georaster import read_raster
from .scanner import ScanConfig, scan
from .tiler import TileSpec


def _backend_config(args) -> BackendConfig:
    spec = args.backend
    if spec == "heuristic":
        return BackendConfig(kind="heuristic", variance_threshold=args.tau,
                             block=args.block, batch_size=args.batch_size)
    if spec.startswith("external:"):
        return BackendConfig(kind="external", exchange_dir=Path(spec.split(":", 1)[1]),
                             batch_size=args.batch_size, timeout_s=args.timeout)
    raise SystemExit(f"--backend must be 'heuristic' or 'external:<dir>', got {spec!r}")


def _add_backend_args(p):
    p.add_argument("--backend", default="heuristic",
                   help="heuristic | external:<exchange dir>")
    p.add_argument("--tau", type=float, default=100.0,
                   help="heuristic variance threshold")
    p.add_argument("--block", type=int, default=8, help="heuristic block size in px")
    p.add_argument("--batch-size", type=int, default=120)
    p.add_argument("--timeout", type=float, default=30.0,
                   help="external backend response timeout in seconds")


def cmd_scan(args) -> int:
    raster = read_raster(args.raster, world_path=args.world, crs_id=args.crs)
    cfg = ScanConfig(
        spec=TileSpec(gsd_cm=args.gsd_cm, context_m=args.context_m),
        stride_m=args.stride_m,
        candidate_threshold=args.t_candidate,
        high_risk_threshold=args.t_high,
        saliency_threshold=args.t_saliency,
        workers=args.workers,
        output_dir=Path(args.out),
    )
    result = scan(raster, cfg, _backend_config(args))
    candidates = sum(1 for d in result.detections if d.score >= cfg.candidate_threshold)
    print(f"scanned {len(result.detections)} tiles: {candidates} candidate(s), "
          f"{result.candidate_area_km2:.4f} of {result.total_area_km2:.4f} km2 to examine")
    print(f"outputs in {args.out}")
    return 0


def cmd_eval(args) -> int:
    manifest = datasetkit.read_manifest(args.manifest)
    spec = TileSpec(gsd_cm=args.gsd_cm, context_m=args.context_m)
    report = evalkit.evaluate_manifest(manifest, _backend_config(args), spec,
                                       base_dir=Path(args.manifest).parent)
    pct = report.as_percent()
    names = ("f1", "precision", "recall", "accuracy")
    print("  ".join(n.capitalize().rjust(9) for n in names))
    print("  ".join(pct[n].rjust(9) for n in names))
    if args.out:
        payload = {n: getattr(report, n) for n in ("accuracy", "precision", "recall", "f1")}
        payload["percent"] = pct
        payload["degenerate"] = report.degenerate
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n")
        print(f"report written to {args.out}")
    return 0


def cmd_grid(args) -> int:
    evalkit.write_grid_manifest(args.out)
    print(f"wrote {len(evalkit.enumerate_grid())} configurations to {args.out}")
    return 0


def cmd_dataset_sample(args) -> int:
    positives = [r for r in datasetkit.read_locations(args.positives)
                 if r.label == datasetkit.POSITIVE]
    cfg = datasetkit.SamplingConfig(ratio=args.ratio, r_min=args.r_min, r_max=args.r_max,
                                    min_separation=args.min_separation, seed=args.seed,
                                    max_attempts=args.max_attempts)
    negatives = datasetkit.sample_negatives(positives, cfg)
    datasetkit.write_locations(positives + negatives, args.out)
    print(f"{len(positives)} positives + {len(negatives)} sampled negatives -> {args.out}")
    return 0


def cmd_dataset_build(args) -> int:
    locations = datasetkit.read_locations(args.locations)
    rasters = {}
    for spec in args.raster:
        name, _, path = spec.partition("=")
        if not path:
            raise SystemExit(f"--raster wants name=path, got {spec!r}")
        rasters[name] = read_raster(path)
    tile_spec = TileSpec(gsd_cm=args.gsd_cm, context_m=args.context_m)
    manifest = datasetkit.build_manifest(locations, rasters, tile_spec, args.out)
    datasetkit.write_manifest(manifest, Path(args.out) / "manifest.jsonl")
    print(f"{len(manifest.entries)} tiles ({manifest.counts}) -> {args.out}")
    return 0


def cmd_dataset_split(args) -> int:
    manifest = datasetkit.read_manifest(args.manifest)
    train, test = datasetkit.split_manifest(manifest, args.test_fraction, args.seed)
    datasetkit.write_split(train, test, args.out, args.test_fraction, args.seed)
    print(f"train {train.counts} / test {test.counts} -> {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .reviewsvc import create_app
    app = create_app(args.scan_dir, args.log, ui_origin=args.ui_origin)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wastescan")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scan", help="scan a raster for waste candidates")
    p.add_argument("--raster", required=True)
    p.add_argument("--world", default=None, help="world file (default: sidecar lookup)")
    p.add_argument("--gsd-cm", type=float, required=True)
    p.add_argument("--context-m", type=float, required=True)
    p.add_argument("--stride-m", type=float, default=None)
    p.add_argument("--t-candidate", type=float, default=0.2)
    p.add_argument("--t-high", type=float, default=0.7)
    p.add_argument("--t-saliency", type=float, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--crs", default="")
    p.add_argument("--out", required=True)
    _add_backend_args(p)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("eval", help="score a tile manifest and report metrics")
    p.add_argument("--manifest", required=True)
    p.add_argument("--gsd-cm", type=float, required=True)
    p.add_argument("--context-m", type=float, required=True)
    p.add_argument("--out", default=None, help="also write metrics JSON here")
    _add_backend_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("grid", help="write the 48-configuration experiment manifest")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_grid)

    dataset = sub.add_parser("dataset", help="dataset construction utilities")
    dsub = dataset.add_subparsers(dest="dataset_command", required=True)

    p = dsub.add_parser("sample", help="sample negatives around positive locations")
    p.add_argument("--positives", required=True, help="CSV of positive locations")
    p.add_argument("--ratio", type=int, default=2)
    p.add_argument("--r-min", type=float, default=300.0)
    p.add_argument("--r-max", type=float, default=2000.0)
    p.add_argument("--min-separation", type=float, default=300.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-attempts", type=int, default=1000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dataset_sample)

    p = dsub.add_parser("build", help="extract location-centered tiles into a manifest")
    p.add_argument("--locations", required=True)
    p.add_argument("--raster", action="append", required=True, metavar="NAME=PATH")
    p.add_argument("--gsd-cm", type=float, required=True)
    p.add_argument("--context-m", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dataset_build)

    p = dsub.add_parser("split", help="stratified location-level train/test split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--test-fraction", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dataset_split)

    p = sub.add_parser("serve", help="run the triage review service")
    p.add_argument("--scan-dir", action="append", required=True)
    p.add_argument("--log", required=True, help="event log path (JSON Lines)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8077)
    p.add_argument("--ui-origin", default="*")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
