"""Class-activation saliency maps and overlay rendering.

The map is the ReLU of the channel-weight-weighted activation sum, min-max
normalized per tile to [0, 1] (the standard visualization convention; a
constant map degenerates to all zeros). For a GAP head with a single output
neuron the channel weights are just the head weights, so no autodiff is
needed on this side of the pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .backend import ActivationStack
from .georaster import GeoRaster, write_png, write_world_file

OVERLAY_BLEND = 0.5


class InvalidActivations(Exception):
    """Non-finite activations or weights."""


class SizeMismatch(Exception):
    """Saliency map does not match the tile's pixel size."""


@dataclass
class SaliencyMap:
    """(h, w) float map with values in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"expected (h, w) map, got shape {arr.shape}")
        self.values = arr

    @property
    def h(self) -> int:
        return self.values.shape[0]

    @property
    def w(self) -> int:
        return self.values.shape[1]


def grad_cam(acts: ActivationStack, weights) -> SaliencyMap:
    """ReLU-rectified weighted sum of activation channels, min-max normalized."""
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (acts.K,):
        raise ValueError(f"{w.size} weights for {acts.K} channels")
    if not np.isfinite(w).all() or not np.isfinite(acts.values).all():
        raise InvalidActivations("activations and weights must be finite")
    pre = np.tensordot(w, acts.values, axes=(0, 0))
    rect = np.maximum(pre, 0.0)
    lo = float(rect.min())
    hi = float(rect.max())
    if hi == lo:
        return SaliencyMap(np.zeros_like(rect))
    return SaliencyMap((rect - lo) / (hi - lo))


def upsample_map(m: SaliencyMap, out: int) -> SaliencyMap:
    """Corner-aligned bilinear upsample to out x out."""
    if out < m.h:
        raise ValueError(f"output size {out} below map height {m.h}")
    if out == m.h and out == m.w:
        return SaliencyMap(m.values.copy())
    values = kernels.bilinear_f64(m.values, out, out)
    return SaliencyMap(np.clip(values, 0.0, 1.0))


def render_overlay(tile: GeoRaster, m: SaliencyMap) -> tuple[np.ndarray, GeoRaster]:
    """Grayscale map image plus the tile with its red channel boosted by the map.

    Returns (grayscale (h, w) uint8, colorized GeoRaster). The map must
    already be upsampled to the tile size.
    """
    if (m.h, m.w) != (tile.height, tile.width):
        raise SizeMismatch(f"map {m.w}x{m.h} vs tile {tile.width}x{tile.height}")
    gray = np.floor(255.0 * m.values + 0.5).astype(np.uint8)
    colorized = tile.pixels.astype(np.float64).copy()
    colorized[:, :, 0] = np.minimum(
        255.0, np.floor(colorized[:, :, 0] + OVERLAY_BLEND * 255.0 * m.values + 0.5))
    return gray, GeoRaster(colorized.astype(np.uint8), tile.transform, tile.crs_id)


def save_overlays(tile: GeoRaster, m: SaliencyMap, out_dir, tile_id: str) -> tuple[str, str]:
    """Write tile_<id>_saliency.png (+ .wld) and tile_<id>_overlay.png;
    returns the two file names."""
    out_dir = Path(out_dir)
    gray, colorized = render_overlay(tile, m)
    gray_name = f"tile_{tile_id}_saliency.png"
    overlay_name = f"tile_{tile_id}_overlay.png"
    write_png(gray, out_dir / gray_name)
    write_world_file(tile.transform, (out_dir / gray_name).with_suffix(".wld"))
    write_png(colorized.pixels, out_dir / overlay_name)
    return gray_name, overlay_name
