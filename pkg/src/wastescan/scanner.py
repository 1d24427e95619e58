"""Full territory scan: grid, extract, classify, saliency, geo outputs.

The worker pool only parallelizes pure per-tile work (extraction, scoring,
saliency); results are merged in tile order before anything is written, so
the outputs are byte-identical for any worker count. A failed backend batch
aborts the scan: a silent hole in a waste scan is worse than a retry.

Output directory layout:
  detections.geojson   every tile polygon with score/color/rank properties
  scan_report.json     config snapshot + area accounting
  tile_<id>.png/.wld   tile image, for tiles at or above the saliency threshold
  tile_<id>_saliency.png/.wld, tile_<id>_overlay.png
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .backend import BackendConfig, classify_batch
from .georaster import GeoRaster, write_raster
from .saliency import SaliencyMap, grad_cam, save_overlays, upsample_map
from .tiler import TileSpec, build_grid, extract_tile


class NotACandidate(Exception):
    """Score below the candidate threshold has no color on the scale."""


@dataclass
class ScanConfig:
    spec: TileSpec
    stride_m: float | None = None
    candidate_threshold: float = 0.2
    high_risk_threshold: float = 0.7
    saliency_threshold: float | None = None
    workers: int = 1
    output_dir: Path | None = None

    def __post_init__(self):
        if not (0.0 <= self.candidate_threshold <= self.high_risk_threshold <= 1.0):
            raise ValueError("need 0 <= candidate_threshold <= high_risk_threshold <= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.saliency_threshold is None:
            self.saliency_threshold = self.candidate_threshold


@dataclass
class Detection:
    tile_id: str
    polygon: tuple[tuple[float, float], ...]
    score: float
    saliency_paths: tuple[str, str] | None = None
    color: tuple[int, int, int] | None = None


@dataclass
class ScanResult:
    detections: list[Detection]
    spec: TileSpec
    stride_m: float
    candidate_threshold: float
    high_risk_threshold: float
    saliency_threshold: float
    source: dict
    total_area_km2: float
    candidate_area_km2: float
    high_risk_area_km2: float


def score_to_color(score: float, t0: float) -> tuple[int, int, int]:
    """Yellow-to-red ramp anchored at the candidate threshold."""
    if not t0 < 1:
        raise ValueError("candidate threshold must be < 1 for the color ramp")
    if score < t0:
        raise NotACandidate(f"score {score} below threshold {t0}")
    if score > 1:
        raise ValueError(f"score {score} above 1")
    u = (score - t0) / (1.0 - t0)
    return (255, int(math.floor(255.0 * (1.0 - u) + 0.5)), 0)


def filter_detections(res: ScanResult, threshold: float) -> list[Detection]:
    """Detections with score >= threshold, tile order preserved."""
    if not (0.0 <= threshold <= 1.0):
        raise ValueError(f"threshold {threshold} outside [0, 1]")
    return [d for d in res.detections if d.score >= threshold]


def _union_pixel_area(windows) -> int:
    """Exact pixel count of the union of integer windows (they may overlap
    where edge tiles were snapped or the stride is below the context)."""
    if not windows:
        return 0
    xs = sorted({w.col0 for w in windows} | {w.col0 + w.w for w in windows})
    ys = sorted({w.row0 for w in windows} | {w.row0 + w.h for w in windows})
    xi = {v: i for i, v in enumerate(xs)}
    yi = {v: i for i, v in enumerate(ys)}
    cover = np.zeros((len(ys) - 1, len(xs) - 1), dtype=bool)
    for w in windows:
        cover[yi[w.row0]:yi[w.row0 + w.h], xi[w.col0]:xi[w.col0 + w.w]] = True
    cell = np.outer(np.diff(ys), np.diff(xs))
    return int(cell[cover].sum())


def scan(r: GeoRaster, cfg: ScanConfig, backend: BackendConfig) -> ScanResult:
    """Score every grid tile; write geo-referenced outputs when an output
    directory is configured."""
    grid = build_grid(r, cfg.spec.context_m, cfg.stride_m)

    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        images = list(pool.map(lambda t: extract_tile(r, t, cfg.spec), grid.tiles))
        outputs = classify_batch(images, backend, pool=pool)

        def tile_map(out) -> SaliencyMap | None:
            if out.score < cfg.saliency_threshold or out.activations is None:
                return None
            return upsample_map(grad_cam(out.activations, out.channel_weights),
                                cfg.spec.image_px)

        maps = list(pool.map(tile_map, outputs))

    t = r.transform
    detections = []
    artifacts = []  # (tile, image, map) for tiles that get files, in tile order
    for tile, image, out, smap in zip(grid.tiles, images, outputs, maps):
        color = None
        if out.score >= cfg.candidate_threshold:
            color = score_to_color(out.score, cfg.candidate_threshold)
        paths = None
        if smap is not None and cfg.output_dir is not None:
            paths = (f"tile_{tile.tile_id}_saliency.png", f"tile_{tile.tile_id}_overlay.png")
            artifacts.append((tile, image, smap))
        detections.append(Detection(tile.tile_id, tile.polygon, out.score,
                                    saliency_paths=paths, color=color))

    win_by_id = {tile.tile_id: tile.window for tile in grid.tiles}
    px_area_m2 = t.gsd_x * t.gsd_y

    def area_km2(threshold):
        wins = [win_by_id[d.tile_id] for d in detections if d.score >= threshold]
        return _union_pixel_area(wins) * px_area_m2 / 1e6

    result = ScanResult(
        detections=detections,
        spec=cfg.spec,
        stride_m=grid.stride_m,
        candidate_threshold=cfg.candidate_threshold,
        high_risk_threshold=cfg.high_risk_threshold,
        saliency_threshold=cfg.saliency_threshold,
        source={"width": r.width, "height": r.height, "gsd_x": t.gsd_x, "gsd_y": t.gsd_y,
                "origin_x": t.origin_x, "origin_y": t.origin_y, "crs_id": r.crs_id},
        total_area_km2=r.width * t.gsd_x * r.height * t.gsd_y / 1e6,
        candidate_area_km2=area_km2(cfg.candidate_threshold),
        high_risk_area_km2=area_km2(cfg.high_risk_threshold),
    )

    if cfg.output_dir is not None:
        out_dir = Path(cfg.output_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for tile, image, smap in artifacts:
            write_raster(image, out_dir / f"tile_{tile.tile_id}.png")
            save_overlays(image, smap, out_dir, tile.tile_id)
        write_geojson(result, out_dir / "detections.geojson")
        write_scan_report(result, out_dir / "scan_report.json")
    return result


def _rank_by_score(detections) -> dict[str, int]:
    ranked = sorted(detections, key=lambda d: (-d.score, d.tile_id))
    return {d.tile_id: i + 1 for i, d in enumerate(ranked)}


def write_geojson(res: ScanResult, path) -> None:
    """Deterministic FeatureCollection: features in tile order, closed
    counterclockwise rings, fixed 6-decimal formatting for scores and
    coordinates, rank 1 = highest score (ties by tile_id)."""
    rank = _rank_by_score(res.detections)
    features = []
    for d in res.detections:
        ring = ",".join(f"[{x:.6f},{y:.6f}]" for x, y in d.polygon)
        color = json.dumps(f"#{d.color[0]:02X}{d.color[1]:02X}{d.color[2]:02X}"
                           if d.color else None)
        props = (f'"tile_id":{json.dumps(d.tile_id)},"score":{d.score:.6f},'
                 f'"color":{color},"rank":{rank[d.tile_id]},'
                 f'"context_m":{json.dumps(res.spec.context_m)},'
                 f'"gsd_cm":{json.dumps(res.spec.gsd_cm)}')
        features.append('{"type":"Feature","geometry":{"type":"Polygon","coordinates":[['
                        + ring + ']]},"properties":{' + props + '}}')
    crs = json.dumps(res.source.get("crs_id", ""))
    text = ('{"type":"FeatureCollection","crs":{"type":"name","properties":{"name":'
            + crs + '}},"features":[\n' + ",\n".join(features) + '\n]}\n')
    Path(path).write_text(text)


def write_scan_report(res: ScanResult, path) -> None:
    candidates = filter_detections(res, res.candidate_threshold)
    high = filter_detections(res, res.high_risk_threshold)
    report = {
        "source": res.source,
        "tile_spec": {"gsd_cm": res.spec.gsd_cm, "context_m": res.spec.context_m,
                      "image_px": res.spec.image_px},
        "stride_m": res.stride_m,
        "thresholds": {"candidate": res.candidate_threshold,
                       "high_risk": res.high_risk_threshold,
                       "saliency": res.saliency_threshold},
        "tile_count": len(res.detections),
        "candidate_count": len(candidates),
        "high_risk_count": len(high),
        "total_area_km2": res.total_area_km2,
        "candidate_area_km2": res.candidate_area_km2,
        "high_risk_area_km2": res.high_risk_area_km2,
        # both reduction ratios, labeled: "area to examine" shrinks relative
        # to the full extent, and raising the threshold shrinks it further
        "area_ratios": {
            "candidate_vs_total": _ratio(res.candidate_area_km2, res.total_area_km2),
            "high_risk_vs_total": _ratio(res.high_risk_area_km2, res.total_area_km2),
            "high_risk_vs_candidate": _ratio(res.high_risk_area_km2, res.candidate_area_km2),
        },
    }
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")


def _ratio(num: float, den: float) -> float | None:
    return num / den if den else None
