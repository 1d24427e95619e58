"""Evaluation tooling: fixed-threshold metrics, the experiment grid, and
field-campaign time-savings arithmetic.

Internal arithmetic is full precision; rounding happens only at the
presentation layer. The field report therefore shows both the exact
average-time variation and the one recomputed from 1-decimal table values,
because the two can legitimately differ.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .backend import BackendConfig, classify_batch
from .datasetkit import POSITIVE, Manifest
from .georaster import read_raster
from .tiler import TileSpec, compute_image_size

ARCHITECTURES = ("resnet50", "swin_t")
GSD_VALUES_CM = (20, 30, 40, 50)
CONTEXT_VALUES_M = (100, 150, 210)
PRETRAININGS = ("INP", "RSP")
HYPERPARAMETERS = {"batch_size": 120, "lr_tl": 0.001, "lr_ft": 0.0001}


class EmptyManifest(Exception):
    """No tiles to evaluate."""


@dataclass
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    degenerate: list[str] = field(default_factory=list)

    def as_percent(self) -> dict[str, str]:
        return {k: f"{getattr(self, k) * 100.0:.2f}%"
                for k in ("f1", "precision", "recall", "accuracy")}


@dataclass(frozen=True)
class ExperimentConfig:
    architecture: str
    gsd_cm: int
    context_m: int
    pretraining: str
    image_px: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "image_px",
                           compute_image_size(self.gsd_cm, self.context_m))


@dataclass
class CampaignStats:
    inspected_area_km2: float
    detected_sites: int
    total_time_min: float


@dataclass
class FieldReport:
    manual: CampaignStats
    aided: CampaignStats
    manual_avg_time_min: float
    aided_avg_time_min: float
    # variations as fractions: (aided - manual) / manual
    area_variation: float
    sites_variation: float
    time_variation: float
    avg_time_variation: float
    # same column recomputed from 1-decimal truncated avg times: comparison
    # tables are typically typeset that way, and the two can differ
    avg_time_variation_1dp: float


def confusion(scores, labels, threshold: float = 0.5) -> ConfusionMatrix:
    """Tally predictions (positive iff score >= threshold) against binary labels."""
    if len(scores) != len(labels):
        raise ValueError(f"{len(scores)} scores for {len(labels)} labels")
    cm = ConfusionMatrix()
    for s, y in zip(scores, labels):
        if y not in (0, 1):
            raise ValueError(f"labels must be binary, got {y!r}")
        pred = s >= threshold
        if pred and y:
            cm.tp += 1
        elif pred:
            cm.fp += 1
        elif y:
            cm.fn += 1
        else:
            cm.tn += 1
    return cm


def metrics(cm: ConfusionMatrix) -> MetricsReport:
    """Accuracy, precision, recall, F1. Degenerate denominators yield 0 and
    a flag rather than an exception."""
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    degenerate = []
    accuracy = (cm.tp + cm.tn) / cm.total
    if cm.tp + cm.fp > 0:
        precision = cm.tp / (cm.tp + cm.fp)
    else:
        precision = 0.0
        degenerate.append("precision")
    if cm.tp + cm.fn > 0:
        recall = cm.tp / (cm.tp + cm.fn)
    else:
        recall = 0.0
        degenerate.append("recall")
    if precision + recall > 0:
        f1 = 2.0 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        degenerate.append("f1")
    return MetricsReport(accuracy, precision, recall, f1, degenerate)


def enumerate_grid() -> list[ExperimentConfig]:
    """All 48 experiment configurations, lexicographic in
    (architecture, gsd, context, pretraining)."""
    return [
        ExperimentConfig(arch, gsd, ctx, pre)
        for arch in ARCHITECTURES
        for gsd in GSD_VALUES_CM
        for ctx in CONTEXT_VALUES_M
        for pre in PRETRAININGS
    ]


def write_grid_manifest(path) -> None:
    with Path(path).open("w") as fh:
        for cfg in enumerate_grid():
            fh.write(json.dumps({
                "architecture": cfg.architecture, "gsd_cm": cfg.gsd_cm,
                "context_m": cfg.context_m, "pretraining": cfg.pretraining,
                "image_px": cfg.image_px, "hyperparameters": HYPERPARAMETERS,
            }) + "\n")


def field_report(manual: CampaignStats, aided: CampaignStats) -> FieldReport:
    """Derived columns of a two-campaign comparison, at full precision."""
    if manual.detected_sites <= 0 or aided.detected_sites <= 0:
        raise ZeroDivisionError("both campaigns need at least one detected site")
    manual_avg = manual.total_time_min / manual.detected_sites
    aided_avg = aided.total_time_min / aided.detected_sites
    rel = lambda a, m: (a - m) / m
    trunc1 = lambda v: math.floor(v * 10.0) / 10.0
    return FieldReport(
        manual=manual,
        aided=aided,
        manual_avg_time_min=manual_avg,
        aided_avg_time_min=aided_avg,
        area_variation=rel(aided.inspected_area_km2, manual.inspected_area_km2),
        sites_variation=rel(aided.detected_sites, manual.detected_sites),
        time_variation=rel(aided.total_time_min, manual.total_time_min),
        avg_time_variation=rel(aided_avg, manual_avg),
        avg_time_variation_1dp=rel(trunc1(aided_avg), trunc1(manual_avg)),
    )


def field_report_text(rep: FieldReport) -> str:
    """Aligned-column rendering with 1-decimal presentation values."""
    rows = [
        ("", "Area [km2]", "Sites", "Total [min]", "Avg/site [min]"),
        ("manual", f"{rep.manual.inspected_area_km2:.2f}", f"{rep.manual.detected_sites}",
         f"{rep.manual.total_time_min:.0f}", f"{rep.manual_avg_time_min:.1f}"),
        ("aided", f"{rep.aided.inspected_area_km2:.2f}", f"{rep.aided.detected_sites}",
         f"{rep.aided.total_time_min:.0f}", f"{rep.aided_avg_time_min:.1f}"),
        ("variation", f"{rep.area_variation * 100:+.1f}%", f"{rep.sites_variation * 100:+.1f}%",
         f"{rep.time_variation * 100:+.1f}%", f"{rep.avg_time_variation * 100:+.1f}%"),
    ]
    widths = [max(len(r[i]) for r in rows) for i in range(5)]
    lines = ["  ".join(cell.rjust(w) for cell, w in zip(row, widths)) for row in rows]
    exact = rep.avg_time_variation * 100
    onedp = rep.avg_time_variation_1dp * 100
    if f"{exact:+.1f}" != f"{onedp:+.1f}":
        lines.append(f"note: avg/site variation from 1-decimal table values is "
                     f"{onedp:+.1f}%, exact is {exact:+.1f}%")
    return "\n".join(lines)


def evaluate_manifest(manifest: Manifest, backend: BackendConfig, spec: TileSpec,
                      base_dir=".") -> MetricsReport:
    """Score every manifest tile and compute metrics at the 0.5 threshold.

    Works unchanged for cross-region manifests: the tile files carry
    everything the backend needs.
    """
    if not manifest.entries:
        raise EmptyManifest("manifest has no entries")
    for e in manifest.entries:
        if (e.gsd_cm, e.context_m) != (spec.gsd_cm, spec.context_m):
            raise ValueError(f"manifest entry {e.tile_file} was extracted at "
                             f"({e.gsd_cm} cm, {e.context_m} m), spec wants "
                             f"({spec.gsd_cm} cm, {spec.context_m} m)")
    base = Path(base_dir)
    images = [read_raster(base / e.tile_file) for e in manifest.entries]
    outputs = classify_batch(images, backend)
    scores = [o.score for o in outputs]
    labels = [1 if e.label == POSITIVE else 0 for e in manifest.entries]
    return metrics(confusion(scores, labels, threshold=0.5))
