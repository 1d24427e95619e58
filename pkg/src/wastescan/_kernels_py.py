"""Pure-numpy raster kernels.

Fallback for the compiled extension in ``_kernels.pyx``. Both backends must
produce bit-identical output: every floating-point expression here is written
with the same operation order as the C loops (and the extension is compiled
with -ffp-contract=off), so a scan gives the same bytes no matter which
backend happens to be importable.
"""

import numpy as np

IMPLEMENTATION = "python"


def _bilinear_pass(arr, out_n, positions, axis):
    """Sample ``arr`` along ``axis`` at fractional ``positions`` (1-D linear)."""
    n = arr.shape[axis]
    u = np.minimum(np.maximum(positions, 0.0), float(n - 1))
    i0 = np.floor(u).astype(np.intp)
    f = u - i0
    i1 = np.minimum(i0 + 1, n - 1)
    v0 = np.take(arr, i0, axis=axis)
    v1 = np.take(arr, i1, axis=axis)
    shape = [1, 1, 1]
    shape[axis] = out_n
    f = f.reshape(shape)
    return v0 * (1.0 - f) + v1 * f


def _area_pass(arr, out_n, scale, axis):
    """Box-average ``arr`` along ``axis``; output cell j covers [j*scale, (j+1)*scale)."""
    n = arr.shape[axis]
    j = np.arange(out_n, dtype=np.float64)
    lo = j * scale
    hi = (j + 1.0) * scale
    np.minimum(hi, float(n), out=hi)
    c0 = np.floor(lo).astype(np.intp)

    shape = [1, 1, 1]
    shape[axis] = out_n
    out_shape = list(arr.shape)
    out_shape[axis] = out_n
    acc = np.zeros(out_shape, dtype=np.float64)
    wsum = np.zeros(out_n, dtype=np.float64)

    max_taps = int(np.ceil(scale)) + 1
    for t in range(max_taps):
        c = c0 + t
        cf = c.astype(np.float64)
        wt = np.minimum(hi, cf + 1.0) - np.maximum(lo, cf)
        wt = np.maximum(wt, 0.0)
        cc = np.minimum(c, n - 1)
        acc += np.take(arr, cc, axis=axis) * wt.reshape(shape)
        wsum += wt
    # A requested size whose footprint overshoots the source extent leaves an
    # empty footprint (wsum 0); extend the edge pixel instead of dividing by 0.
    empty = wsum == 0.0
    out = acc / np.where(empty, 1.0, wsum).reshape(shape)
    if empty.any():
        edge = np.take(arr, n - 1, axis=axis)
        if axis == 1:
            out[:, empty, :] = edge[:, None, :]
        else:
            out[empty, :, :] = edge[None, :, :]
    return out


def resample_u8(src, out_h, out_w, sy, sx):
    """Resample an 8-bit image to (out_h, out_w).

    ``sy``/``sx`` are source pixels per output pixel along each axis. A scale
    > 1 box-averages source footprints (edge-aligned); a scale <= 1 samples
    bilinearly at output pixel centers u = j*scale (top-left centers aligned).
    Values are rounded half-up back to 8 bits.
    """
    squeeze = src.ndim == 2
    if squeeze:
        src = src[:, :, None]
    h, w = src.shape[0], src.shape[1]
    arr = src.astype(np.float64)

    if sx > 1.0:
        arr = _area_pass(arr, out_w, sx, axis=1)
    else:
        pos = np.arange(out_w, dtype=np.float64) * sx
        arr = _bilinear_pass(arr, out_w, pos, axis=1)

    if sy > 1.0:
        arr = _area_pass(arr, out_h, sy, axis=0)
    else:
        pos = np.arange(out_h, dtype=np.float64) * sy
        arr = _bilinear_pass(arr, out_h, pos, axis=0)

    out = np.floor(arr + 0.5).astype(np.uint8)
    return out[:, :, 0] if squeeze else out


def bilinear_f64(src, out_h, out_w):
    """Corner-aligned bilinear upsample of a float map to (out_h, out_w)."""
    h, w = src.shape
    arr = src.astype(np.float64)[:, :, None]
    sy = (h - 1.0) / (out_h - 1.0) if out_h > 1 else 0.0
    sx = (w - 1.0) / (out_w - 1.0) if out_w > 1 else 0.0
    pos = np.arange(out_w, dtype=np.float64) * sx
    arr = _bilinear_pass(arr, out_w, pos, axis=1)
    pos = np.arange(out_h, dtype=np.float64) * sy
    arr = _bilinear_pass(arr, out_h, pos, axis=0)
    return arr[:, :, 0]


def gray_u8(img):
    """Luma conversion: round(0.299 R + 0.587 G + 0.114 B) as uint8."""
    r = img[:, :, 0].astype(np.float64)
    g = img[:, :, 1].astype(np.float64)
    b = img[:, :, 2].astype(np.float64)
    return np.floor((0.299 * r + 0.587 * g + 0.114 * b) + 0.5).astype(np.uint8)


def block_variance(gray, block):
    """Population variance of each non-overlapping block x block cell.

    Trailing rows/columns that do not fill a whole block are ignored.
    Integer sums keep the result exact up to the single final division.
    """
    nbh = gray.shape[0] // block
    nbw = gray.shape[1] // block
    g = gray[: nbh * block, : nbw * block].astype(np.int64)
    g = g.reshape(nbh, block, nbw, block)
    s = g.sum(axis=(1, 3))
    s2 = (g * g).sum(axis=(1, 3))
    n = block * block
    return (n * s2 - s * s) / float(n * n)
