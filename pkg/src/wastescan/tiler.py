"""Tile geometry: image-size arithmetic, grid generation, tile extraction.

A tile is described by the triple (ground sampling distance in cm/px,
context size in meters, derived image size in px). The grid covers the
raster from its top-left corner; windows that would overrun the raster are
snapped inward so every square meter is scanned without fabricating pixels,
at the cost of some overlap with the neighboring tile.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from .georaster import GeoRaster, PixelWindow, crop, resample


class ContextTooSmall(Exception):
    """Requested context/gsd combination yields an image smaller than 4 px."""


class AOISmallerThanTile(Exception):
    """Raster extent cannot fit a single tile window."""


class CropLargerThanTile(Exception):
    """Center crop requested with a context larger than the tile's."""


class LabelPreservationWarning(UserWarning):
    """Crop below the 100 m central-positivity area; label no longer guaranteed."""


def compute_image_size(gsd_cm: float, context_m: float) -> int:
    """Tile side in pixels: 100*context_m/gsd_cm rounded to the closest
    multiple of 4, rounding down when exactly halfway."""
    if gsd_cm <= 0 or context_m <= 0:
        raise ValueError("gsd_cm and context_m must be positive")
    q = 100.0 * context_m / gsd_cm
    lower = int(math.floor(q / 4.0)) * 4
    upper = lower + 4
    size = lower if (q - lower) <= (upper - q) else upper
    if size < 4:
        raise ContextTooSmall(f"context {context_m} m at {gsd_cm} cm/px gives {size} px")
    return size


@dataclass(frozen=True)
class TileSpec:
    """(gsd, context) pair with its derived image size."""

    gsd_cm: float
    context_m: float
    image_px: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "image_px", compute_image_size(self.gsd_cm, self.context_m))

    @property
    def gsd_m(self) -> float:
        return self.gsd_cm / 100.0


@dataclass(frozen=True)
class Tile:
    """One grid cell: source-pixel window plus its world polygon (closed
    counterclockwise ring, pixel-edge corners)."""

    id: tuple[int, int]
    window: PixelWindow
    polygon: tuple[tuple[float, float], ...]

    @property
    def tile_id(self) -> str:
        return f"{self.id[0]:04d}_{self.id[1]:04d}"


@dataclass
class TileGrid:
    tiles: list[Tile]
    aoi: GeoRaster
    context_m: float
    stride_m: float
    n_rows: int
    n_cols: int


def _round_px(meters: float, gsd: float) -> int:
    return int(math.floor(meters / gsd + 0.5))


def _starts(total_px: int, side_px: int, step_px: int) -> list[int]:
    starts = list(range(0, total_px - side_px + 1, step_px))
    if starts[-1] + side_px < total_px:
        starts.append(total_px - side_px)
    return starts


def _tile_polygon(r: GeoRaster, win: PixelWindow) -> tuple[tuple[float, float], ...]:
    t = r.transform
    x_left = t.origin_x + (win.col0 - 0.5) * t.gsd_x
    x_right = t.origin_x + (win.col0 + win.w - 0.5) * t.gsd_x
    y_top = t.origin_y - (win.row0 - 0.5) * t.gsd_y
    y_bot = t.origin_y - (win.row0 + win.h - 0.5) * t.gsd_y
    return ((x_left, y_top), (x_left, y_bot), (x_right, y_bot),
            (x_right, y_top), (x_left, y_top))


def build_grid(r: GeoRaster, context_m: float, stride_m: float | None = None) -> TileGrid:
    """Row-major tile grid over the raster extent.

    Tiles start at the top-left corner and advance by stride_m (default:
    context_m, i.e. a partition). A trailing window that would exceed the
    raster is snapped inward to end exactly at the edge.
    """
    if stride_m is None:
        stride_m = context_m
    if not (0 < stride_m <= context_m):
        raise ValueError(f"stride {stride_m} must be in (0, context {context_m}]")
    t = r.transform
    nx = _round_px(context_m, t.gsd_x)
    ny = _round_px(context_m, t.gsd_y)
    if nx > r.width or ny > r.height:
        raise AOISmallerThanTile(
            f"context {context_m} m needs {nx}x{ny} px, raster is {r.width}x{r.height}")
    step_x = max(1, _round_px(stride_m, t.gsd_x))
    step_y = max(1, _round_px(stride_m, t.gsd_y))
    col_starts = _starts(r.width, nx, step_x)
    row_starts = _starts(r.height, ny, step_y)
    tiles = []
    for i, row0 in enumerate(row_starts):
        for j, col0 in enumerate(col_starts):
            win = PixelWindow(col0, row0, nx, ny)
            tiles.append(Tile((i, j), win, _tile_polygon(r, win)))
    return TileGrid(tiles, r, context_m, stride_m, len(row_starts), len(col_starts))


def extract_tile(r: GeoRaster, t: Tile, spec: TileSpec) -> GeoRaster:
    """Crop the tile window, then resample to the spec's image size. The
    result keeps its world transform, so tiles stay geo-referenced."""
    sub = crop(r, t.window)
    return resample(sub, spec.gsd_m, spec.image_px, spec.image_px)


def center_crop_context(img: GeoRaster, to_context_m: float) -> GeoRaster:
    """Centered square crop to a smaller ground context.

    The world center moves by at most one pixel. Crops below 100 m emit a
    LabelPreservationWarning (the central positivity area is no longer
    fully covered) but are still performed.
    """
    g = img.transform.gsd_x
    m = _round_px(to_context_m, g)
    if m > img.width or m > img.height:
        raise CropLargerThanTile(
            f"{to_context_m} m is {m} px, tile is {img.width}x{img.height}")
    if to_context_m < 100:
        warnings.warn(
            f"center crop to {to_context_m} m < 100 m no longer guarantees the label",
            LabelPreservationWarning, stacklevel=2)
    c0 = (img.width - m) // 2
    r0 = (img.height - m) // 2
    return crop(img, PixelWindow(c0, r0, m, m))


def manifest_row(tile: Tile, spec: TileSpec) -> dict:
    return {
        "tile_id": tile.tile_id,
        "row": tile.id[0],
        "col": tile.id[1],
        "window": [tile.window.col0, tile.window.row0, tile.window.w, tile.window.h],
        "polygon": [[x, y] for x, y in tile.polygon],
        "context_m": spec.context_m,
        "gsd_cm": spec.gsd_cm,
        "image_px": spec.image_px,
    }


def write_tile_manifest(grid: TileGrid, spec: TileSpec, path) -> None:
    with Path(path).open("w") as fh:
        for tile in grid.tiles:
            fh.write(json.dumps(manifest_row(tile, spec)) + "\n")
