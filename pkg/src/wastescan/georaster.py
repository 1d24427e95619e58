"""Geo-referenced RGB rasters: file I/O, affine transforms, crop and resample.

A raster is an 8-bit RGB pixel grid plus a north-up affine transform read
from a world-file sidecar. The transform follows the sidecar convention:
origin_x/origin_y locate the CENTER of the top-left pixel, world y decreases
as pixel row increases. CRS is carried as an opaque tag (e.g. "EPSG:32632");
all inputs to one scan must share a CRS in projected meters.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import kernels

WORLD_SUFFIXES = (".wld", ".pgw")


class MalformedWorldFile(Exception):
    """World file missing, unreadable, or not a valid north-up 6-line sidecar."""


class UnsupportedRotation(Exception):
    """World file declares nonzero rotation terms; only north-up is supported."""


class UnsupportedImage(Exception):
    """Image file is not an 8-bit RGB-coercible raster."""


class WindowOutOfBounds(Exception):
    """Pixel window extends outside the raster."""


@dataclass(frozen=True)
class AffineTransform:
    """North-up pixel-center georeferencing: gsd in meters/pixel, origin at
    the center of the top-left pixel."""

    gsd_x: float
    gsd_y: float
    origin_x: float
    origin_y: float

    def __post_init__(self):
        if not (self.gsd_x > 0 and self.gsd_y > 0):
            raise ValueError(f"gsd must be positive, got ({self.gsd_x}, {self.gsd_y})")


@dataclass(frozen=True)
class PixelWindow:
    col0: int
    row0: int
    w: int
    h: int

    def __post_init__(self):
        if self.col0 < 0 or self.row0 < 0 or self.w < 1 or self.h < 1:
            raise ValueError(f"invalid window {self}")


class GeoRaster:
    """Immutable 8-bit RGB raster with an affine transform and a CRS tag."""

    def __init__(self, pixels: np.ndarray, transform: AffineTransform, crs_id: str = ""):
        arr = np.ascontiguousarray(pixels, dtype=np.uint8)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"expected (h, w, 3) uint8 pixels, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("empty raster")
        arr.setflags(write=False)
        self.pixels = arr
        self.transform = transform
        self.crs_id = crs_id

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def __repr__(self):
        t = self.transform
        return (f"GeoRaster({self.width}x{self.height}, gsd=({t.gsd_x}, {t.gsd_y}), "
                f"origin=({t.origin_x}, {t.origin_y}), crs={self.crs_id!r})")


def pixel_to_world(r: GeoRaster, col: float, row: float) -> tuple[float, float]:
    """World coordinates of a (fractional) pixel position. (0, 0) is the
    center of the top-left pixel."""
    t = r.transform
    return t.origin_x + col * t.gsd_x, t.origin_y - row * t.gsd_y


def world_to_pixel(r: GeoRaster, x: float, y: float) -> tuple[float, float]:
    """Exact algebraic inverse of pixel_to_world; out-of-bounds positions
    are returned as-is for the caller to validate."""
    t = r.transform
    return (x - t.origin_x) / t.gsd_x, (t.origin_y - y) / t.gsd_y


def crop(r: GeoRaster, win: PixelWindow) -> GeoRaster:
    """Copy a pixel window verbatim; the origin shifts to the new top-left
    pixel center. No resampling happens on crop."""
    if win.col0 + win.w > r.width or win.row0 + win.h > r.height:
        raise WindowOutOfBounds(f"{win} exceeds raster {r.width}x{r.height}")
    t = r.transform
    sub = r.pixels[win.row0:win.row0 + win.h, win.col0:win.col0 + win.w].copy()
    moved = AffineTransform(
        t.gsd_x, t.gsd_y,
        t.origin_x + win.col0 * t.gsd_x,
        t.origin_y - win.row0 * t.gsd_y,
    )
    return GeoRaster(sub, moved, r.crs_id)


def resample(r: GeoRaster, target_gsd: float, out_w: int, out_h: int) -> GeoRaster:
    """Resample to exactly (out_w, out_h) pixels at target_gsd m/px.

    Downsampling box-averages source footprints; upsampling interpolates
    bilinearly. The output keeps the top-left pixel-center world position
    and gets a square target_gsd transform. Values round half-up to 8 bits.
    """
    if target_gsd <= 0:
        raise ValueError("target_gsd must be positive")
    if out_w < 1 or out_h < 1:
        raise ValueError("output dimensions must be >= 1")
    t = r.transform
    sx = target_gsd / t.gsd_x
    sy = target_gsd / t.gsd_y
    if sx == 1.0 and sy == 1.0 and out_w == r.width and out_h == r.height:
        pixels = r.pixels.copy()
    else:
        pixels = kernels.resample_u8(r.pixels, out_h, out_w, sy, sx)
    out_t = AffineTransform(target_gsd, target_gsd, t.origin_x, t.origin_y)
    return GeoRaster(pixels, out_t, r.crs_id)


def read_world_file(path) -> AffineTransform:
    path = Path(path)
    if not path.exists():
        raise MalformedWorldFile(f"world file not found: {path}")
    lines = [ln.strip() for ln in path.read_text().splitlines() if ln.strip()]
    if len(lines) != 6:
        raise MalformedWorldFile(f"{path}: expected 6 lines, got {len(lines)}")
    try:
        a, d, b, e, c, f = (float(v) for v in lines)
    except ValueError as exc:
        raise MalformedWorldFile(f"{path}: non-numeric line ({exc})") from None
    if d != 0.0 or b != 0.0:
        raise UnsupportedRotation(f"{path}: rotation terms ({d}, {b}) unsupported")
    if a <= 0.0 or e >= 0.0:
        raise MalformedWorldFile(f"{path}: north-up raster requires A > 0 and E < 0")
    return AffineTransform(gsd_x=a, gsd_y=-e, origin_x=c, origin_y=f)


def write_world_file(t: AffineTransform, path) -> None:
    lines = [t.gsd_x, 0.0, 0.0, -t.gsd_y, t.origin_x, t.origin_y]
    Path(path).write_text("".join(f"{v:.10f}\n" for v in lines))


def _world_path_for(path: Path) -> Path:
    for suffix in WORLD_SUFFIXES:
        cand = path.with_suffix(suffix)
        if cand.exists():
            return cand
    raise MalformedWorldFile(f"no world file ({' or '.join(WORLD_SUFFIXES)}) next to {path}")


def _read_ppm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    # P6 header: magic, width, height, maxval as whitespace-separated tokens,
    # '#' comments allowed, then a single whitespace byte before pixel data.
    pos = 0
    tokens = []
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise UnsupportedImage(f"{path}: truncated PPM header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    if tokens[0] != b"P6":
        raise UnsupportedImage(f"{path}: not a binary PPM (P6)")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise UnsupportedImage(f"{path}: PPM maxval {maxval}, only 8-bit (255) supported")
    body = data[pos:pos + w * h * 3]
    if len(body) != w * h * 3:
        raise UnsupportedImage(f"{path}: PPM pixel data truncated")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3)


def _read_png(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        if img.mode in ("I", "I;16", "I;16B", "I;16L", "F"):
            raise UnsupportedImage(f"{path}: only 8-bit images are supported (mode {img.mode})")
        if img.mode in ("P", "LA"):
            img = img.convert("RGBA" if "transparency" in img.info or img.mode == "LA" else "RGB")
        if img.mode == "RGBA":
            img = img.convert("RGB")  # alpha ignored
        elif img.mode == "L":
            img = img.convert("RGB")
        elif img.mode != "RGB":
            raise UnsupportedImage(f"{path}: unsupported mode {img.mode}")
        return np.asarray(img, dtype=np.uint8)


def read_raster(path, world_path=None, crs_id: str = "") -> GeoRaster:
    """Read a PNG or binary PPM plus its world-file sidecar as a GeoRaster."""
    path = Path(path)
    head = path.open("rb").read(2)
    if head == b"P6":
        pixels = _read_ppm(path)
    else:
        pixels = _read_png(path)
    wpath = Path(world_path) if world_path is not None else _world_path_for(path)
    return GeoRaster(pixels, read_world_file(wpath), crs_id)


def write_png(array: np.ndarray, path) -> None:
    """Write a (h, w) grayscale or (h, w, 3) RGB uint8 array as PNG."""
    img = Image.fromarray(np.asarray(array, dtype=np.uint8), "L" if array.ndim == 2 else "RGB")
    img.save(Path(path), format="PNG")


def write_raster(r: GeoRaster, path, world: bool = True) -> None:
    """Write a GeoRaster as PNG (or P6 PPM if the suffix says so) + world file."""
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        buf = io.BytesIO()
        buf.write(f"P6\n{r.width} {r.height}\n255\n".encode())
        buf.write(r.pixels.tobytes())
        path.write_bytes(buf.getvalue())
    else:
        write_png(r.pixels, path)
    if world:
        write_world_file(r.transform, path.with_suffix(".wld"))
