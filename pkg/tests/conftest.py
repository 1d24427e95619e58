import numpy as np
import pytest

from wastescan.georaster import AffineTransform, GeoRaster


def make_raster(w=100, h=100, value=128, gsd=0.3, origin=(500000.0, 5000000.0),
                crs="EPSG:32632", pixels=None):
    if pixels is None:
        pixels = np.full((h, w, 3), value, dtype=np.uint8)
    return GeoRaster(pixels, AffineTransform(gsd, gsd, origin[0], origin[1]), crs)


def checkerboard(h, w, lo=0, hi=255):
    """Single-pixel checkerboard: alternating lo/hi values, 3 channels."""
    grid = (np.arange(h)[:, None] + np.arange(w)[None, :]) % 2
    plane = np.where(grid == 1, hi, lo).astype(np.uint8)
    return np.repeat(plane[:, :, None], 3, axis=2)


@pytest.fixture
def raster():
    return make_raster()
