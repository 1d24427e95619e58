"""Location-based dataset construction.

Positives come from investigation campaigns as a CSV of projected
coordinates; negatives are rejection-sampled in an annulus around the
positives (area-uniform, so nearby context stays similar without tile
overlap), keeping the class imbalance at a configured negatives-per-positive
ratio. Splits are stratified by label and grouped by LOCATION: a site
photographed by several sources must never leak across train/test.
"""

from __future__ import annotations

import csv
import json
import math
import random
import re
from dataclasses import dataclass, field
from pathlib import Path

from .georaster import GeoRaster, PixelWindow, crop, resample, write_raster
from .tiler import TileSpec

POSITIVE = "positive"
NEGATIVE = "negative"


class SamplingExhausted(Exception):
    """Could not place a negative within max_attempts for some positive."""

    def __init__(self, message, positive_id=None):
        super().__init__(message)
        self.positive_id = positive_id


class LocationOutsideCoverage(Exception):
    """One or more locations have no raster covering their full context."""

    def __init__(self, message, offenders=None):
        super().__init__(message)
        self.offenders = offenders or []


class SplitInfeasible(Exception):
    """A label has fewer than two locations; cannot split without leakage."""


@dataclass
class LocationRecord:
    id: str
    x: float
    y: float
    label: str
    source: str = ""
    notes: str = ""

    def __post_init__(self):
        if self.label not in (POSITIVE, NEGATIVE):
            raise ValueError(f"label must be '{POSITIVE}' or '{NEGATIVE}', got {self.label!r}")
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite coordinates for {self.id}")


@dataclass
class SamplingConfig:
    ratio: int = 2
    r_min: float = 300.0
    r_max: float = 2000.0
    min_separation: float = 300.0
    seed: int = 0
    max_attempts: int = 1000

    def __post_init__(self):
        if not (0 < self.r_min < self.r_max):
            raise ValueError("need 0 < r_min < r_max")
        if self.ratio < 1:
            raise ValueError("ratio must be >= 1")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


@dataclass
class ManifestEntry:
    location_id: str
    label: str
    tile_file: str
    context_m: float
    gsd_cm: float
    source: str


@dataclass
class Manifest:
    entries: list[ManifestEntry] = field(default_factory=list)

    @property
    def counts(self) -> dict[str, int]:
        out = {POSITIVE: 0, NEGATIVE: 0}
        for e in self.entries:
            out[e.label] += 1
        return out


def sample_negatives(positives: list[LocationRecord],
                     cfg: SamplingConfig) -> list[LocationRecord]:
    """Rejection-sample ratio x |positives| negatives, each in the
    [r_min, r_max] annulus of its seed positive and at least min_separation
    from every positive and every other accepted negative. Deterministic for
    a fixed seed (fixed iteration order)."""
    if not positives:
        raise ValueError("no positives to sample around")
    rng = random.Random(cfg.seed)
    sep2 = cfg.min_separation * cfg.min_separation
    anchors = [(p.x, p.y) for p in positives]
    negatives: list[LocationRecord] = []

    for p in positives:
        for k in range(cfg.ratio):
            placed = False
            for _ in range(cfg.max_attempts):
                # area-uniform draw over the annulus
                r = math.sqrt(cfg.r_min ** 2 + rng.random() * (cfg.r_max ** 2 - cfg.r_min ** 2))
                theta = 2.0 * math.pi * rng.random()
                x = p.x + r * math.cos(theta)
                y = p.y + r * math.sin(theta)
                if all((x - ax) ** 2 + (y - ay) ** 2 >= sep2 for ax, ay in anchors):
                    negatives.append(LocationRecord(
                        id=f"neg_{p.id}_{k}", x=x, y=y, label=NEGATIVE,
                        source=p.source, notes=f"sampled near {p.id}"))
                    anchors.append((x, y))
                    placed = True
                    break
            if not placed:
                raise SamplingExhausted(
                    f"no room for negative {k} of positive {p.id} "
                    f"after {cfg.max_attempts} attempts", positive_id=p.id)
    return negatives


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_-]+", "-", name) or "src"


def _window_around(r: GeoRaster, x: float, y: float, context_m: float) -> PixelWindow | None:
    t = r.transform
    n = int(math.floor(context_m / t.gsd_x + 0.5))
    col = (x - t.origin_x) / t.gsd_x
    row = (t.origin_y - y) / t.gsd_y
    c0 = int(math.floor(col - n / 2.0 + 0.5))
    r0 = int(math.floor(row - n / 2.0 + 0.5))
    if c0 < 0 or r0 < 0 or c0 + n > r.width or r0 + n > r.height:
        return None
    return PixelWindow(c0, r0, n, n)


def build_manifest(locations: list[LocationRecord], rasters: dict[str, GeoRaster],
                   spec: TileSpec, out_dir) -> Manifest:
    """Extract one tile per (location, covering raster source) pair, centered
    on the location, and write PNG + world file into out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    offenders = []
    manifest = Manifest()
    for loc in locations:
        covered = False
        for source, raster in rasters.items():
            win = _window_around(raster, loc.x, loc.y, spec.context_m)
            if win is None:
                continue
            covered = True
            tile = resample(crop(raster, win), spec.gsd_m, spec.image_px, spec.image_px)
            name = f"{_slug(loc.id)}_{_slug(source)}.png"
            write_raster(tile, out_dir / name)
            manifest.entries.append(ManifestEntry(
                location_id=loc.id, label=loc.label, tile_file=name,
                context_m=spec.context_m, gsd_cm=spec.gsd_cm, source=source))
        if not covered:
            offenders.append(loc.id)
    if offenders:
        raise LocationOutsideCoverage(
            f"{len(offenders)} location(s) outside raster coverage: "
            f"{', '.join(offenders[:10])}", offenders=offenders)
    return manifest


def split_manifest(m: Manifest, test_fraction: float,
                   seed: int = 0) -> tuple[Manifest, Manifest]:
    """Stratified location-level split.

    Per label, the test tile target is round(test_fraction * label count);
    whole locations are assigned to test (in seeded shuffle order) until the
    target is reached, so no location id straddles the two splits.
    """
    if not (0.0 < test_fraction < 1.0):
        raise ValueError("test_fraction must be in (0, 1)")
    by_label: dict[str, dict[str, list[ManifestEntry]]] = {}
    for e in m.entries:
        by_label.setdefault(e.label, {}).setdefault(e.location_id, []).append(e)

    test_locs: set[str] = set()
    for label, locs in sorted(by_label.items()):
        if len(locs) < 2:
            raise SplitInfeasible(f"label {label!r} has {len(locs)} location(s), need >= 2")
        total = sum(len(v) for v in locs.values())
        target = int(round(test_fraction * total))
        order = sorted(locs)
        random.Random(f"{seed}:{label}").shuffle(order)
        count = 0
        for taken, loc in enumerate(order):
            if count >= target or taken == len(order) - 1:
                break  # target reached, or only one location left for train
            test_locs.add(loc)
            count += len(locs[loc])

    train = Manifest([e for e in m.entries if e.location_id not in test_locs])
    test = Manifest([e for e in m.entries if e.location_id in test_locs])
    return train, test


def write_manifest(m: Manifest, path) -> None:
    with Path(path).open("w") as fh:
        for e in m.entries:
            fh.write(json.dumps({
                "location_id": e.location_id, "label": e.label, "tile_file": e.tile_file,
                "context_m": e.context_m, "gsd_cm": e.gsd_cm, "source": e.source,
            }) + "\n")


def read_manifest(path) -> Manifest:
    entries = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        entries.append(ManifestEntry(
            location_id=row["location_id"], label=row["label"],
            tile_file=row["tile_file"], context_m=row["context_m"],
            gsd_cm=row["gsd_cm"], source=row.get("source", "")))
    return Manifest(entries)


def write_split(train: Manifest, test: Manifest, out_dir,
                test_fraction: float, seed: int) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(train, out_dir / "train.jsonl")
    write_manifest(test, out_dir / "test.jsonl")
    report = {
        "test_fraction": test_fraction,
        "seed": seed,
        "train": train.counts,
        "test": test.counts,
    }
    (out_dir / "split_report.json").write_text(json.dumps(report, indent=2) + "\n")


def read_locations(path) -> list[LocationRecord]:
    """CSV with header id,x,y,label,source (notes column optional)."""
    records = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            records.append(LocationRecord(
                id=row["id"], x=float(row["x"]), y=float(row["y"]),
                label=row["label"], source=row.get("source", "") or "",
                notes=row.get("notes", "") or ""))
    return records


def write_locations(records: list[LocationRecord], path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "x", "y", "label", "source", "notes"])
        for rec in records:
            writer.writerow([rec.id, rec.x, rec.y, rec.label, rec.source, rec.notes])
