# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled raster kernels.

Mirrors ``_kernels_py`` operation for operation: every per-element expression
uses the same order and association as the numpy fallback, and the module is
built with -ffp-contract=off, so both backends return bit-identical arrays.
"""

import numpy as np

from libc.math cimport ceil, floor, fmax, fmin

IMPLEMENTATION = "compiled"


cdef void _bilinear_x(const double[:, :, ::1] src, double[:, :, ::1] dst, double sx) noexcept nogil:
    cdef Py_ssize_t h = src.shape[0], w = src.shape[1], nch = src.shape[2]
    cdef Py_ssize_t out_w = dst.shape[1]
    cdef Py_ssize_t j, r, c, i0, i1
    cdef double u, f
    for j in range(out_w):
        u = <double>j * sx
        u = fmin(fmax(u, 0.0), <double>(w - 1))
        i0 = <Py_ssize_t>floor(u)
        f = u - <double>i0
        i1 = i0 + 1
        if i1 > w - 1:
            i1 = w - 1
        for r in range(h):
            for c in range(nch):
                dst[r, j, c] = src[r, i0, c] * (1.0 - f) + src[r, i1, c] * f


cdef void _bilinear_y(const double[:, :, ::1] src, double[:, :, ::1] dst, double sy) noexcept nogil:
    cdef Py_ssize_t h = src.shape[0], w = src.shape[1], nch = src.shape[2]
    cdef Py_ssize_t out_h = dst.shape[0]
    cdef Py_ssize_t i, r, c, i0, i1
    cdef double u, f
    for i in range(out_h):
        u = <double>i * sy
        u = fmin(fmax(u, 0.0), <double>(h - 1))
        i0 = <Py_ssize_t>floor(u)
        f = u - <double>i0
        i1 = i0 + 1
        if i1 > h - 1:
            i1 = h - 1
        for r in range(w):
            for c in range(nch):
                dst[i, r, c] = src[i0, r, c] * (1.0 - f) + src[i1, r, c] * f


cdef void _area_x(const double[:, :, ::1] src, double[:, :, ::1] dst, double sx,
                  double[::1] wbuf) noexcept nogil:
    cdef Py_ssize_t h = src.shape[0], w = src.shape[1], nch = src.shape[2]
    cdef Py_ssize_t out_w = dst.shape[1]
    cdef Py_ssize_t max_taps = wbuf.shape[0]
    cdef Py_ssize_t j, r, c, t, c0, cc
    cdef double lo, hi, cf, wt, wsum, acc
    for j in range(out_w):
        lo = <double>j * sx
        hi = (<double>j + 1.0) * sx
        if hi > <double>w:
            hi = <double>w
        c0 = <Py_ssize_t>floor(lo)
        wsum = 0.0
        for t in range(max_taps):
            cf = <double>(c0 + t)
            wt = fmin(hi, cf + 1.0) - fmax(lo, cf)
            if wt < 0.0:
                wt = 0.0
            wbuf[t] = wt
            wsum = wsum + wt
        if wsum == 0.0:
            # footprint entirely past the edge: extend the edge pixel
            for r in range(h):
                for c in range(nch):
                    dst[r, j, c] = src[r, w - 1, c]
            continue
        for r in range(h):
            for c in range(nch):
                acc = 0.0
                for t in range(max_taps):
                    cc = c0 + t
                    if cc > w - 1:
                        cc = w - 1
                    acc = acc + src[r, cc, c] * wbuf[t]
                dst[r, j, c] = acc / wsum


cdef void _area_y(const double[:, :, ::1] src, double[:, :, ::1] dst, double sy,
                  double[::1] wbuf) noexcept nogil:
    cdef Py_ssize_t h = src.shape[0], w = src.shape[1], nch = src.shape[2]
    cdef Py_ssize_t out_h = dst.shape[0]
    cdef Py_ssize_t max_taps = wbuf.shape[0]
    cdef Py_ssize_t i, r, c, t, c0, cc
    cdef double lo, hi, cf, wt, wsum, acc
    for i in range(out_h):
        lo = <double>i * sy
        hi = (<double>i + 1.0) * sy
        if hi > <double>h:
            hi = <double>h
        c0 = <Py_ssize_t>floor(lo)
        wsum = 0.0
        for t in range(max_taps):
            cf = <double>(c0 + t)
            wt = fmin(hi, cf + 1.0) - fmax(lo, cf)
            if wt < 0.0:
                wt = 0.0
            wbuf[t] = wt
            wsum = wsum + wt
        if wsum == 0.0:
            for r in range(w):
                for c in range(nch):
                    dst[i, r, c] = src[h - 1, r, c]
            continue
        for r in range(w):
            for c in range(nch):
                acc = 0.0
                for t in range(max_taps):
                    cc = c0 + t
                    if cc > h - 1:
                        cc = h - 1
                    acc = acc + src[cc, r, c] * wbuf[t]
                dst[i, r, c] = acc / wsum


def resample_u8(src, Py_ssize_t out_h, Py_ssize_t out_w, double sy, double sx):
    """Resample an 8-bit image to (out_h, out_w); see the numpy twin for rules."""
    squeeze = src.ndim == 2
    if squeeze:
        src = src[:, :, None]
    arr = np.ascontiguousarray(src, dtype=np.float64)
    cdef Py_ssize_t h = arr.shape[0], w = arr.shape[1], nch = arr.shape[2]

    mid = np.empty((h, out_w, nch), dtype=np.float64)
    cdef const double[:, :, ::1] a = arr
    cdef double[:, :, ::1] m = mid
    if sx > 1.0:
        wbuf = np.empty(int(ceil(sx)) + 1, dtype=np.float64)
        _area_x(a, m, sx, wbuf)
    else:
        _bilinear_x(a, m, sx)

    out = np.empty((out_h, out_w, nch), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    if sy > 1.0:
        wbuf = np.empty(int(ceil(sy)) + 1, dtype=np.float64)
        _area_y(m, o, sy, wbuf)
    else:
        _bilinear_y(m, o, sy)

    res = np.floor(out + 0.5).astype(np.uint8)
    return res[:, :, 0] if squeeze else res


def bilinear_f64(src, Py_ssize_t out_h, Py_ssize_t out_w):
    """Corner-aligned bilinear upsample of a float map to (out_h, out_w)."""
    arr = np.ascontiguousarray(src, dtype=np.float64)[:, :, None]
    cdef Py_ssize_t h = arr.shape[0], w = arr.shape[1]
    cdef double sy = (h - 1.0) / (out_h - 1.0) if out_h > 1 else 0.0
    cdef double sx = (w - 1.0) / (out_w - 1.0) if out_w > 1 else 0.0
    mid = np.empty((h, out_w, 1), dtype=np.float64)
    cdef const double[:, :, ::1] a = arr
    cdef double[:, :, ::1] m = mid
    _bilinear_x(a, m, sx)
    out = np.empty((out_h, out_w, 1), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    _bilinear_y(m, o, sy)
    return out[:, :, 0]


def gray_u8(img):
    """Luma conversion: round(0.299 R + 0.587 G + 0.114 B) as uint8."""
    arr = np.ascontiguousarray(img)
    cdef const unsigned char[:, :, ::1] a = arr
    cdef Py_ssize_t h = a.shape[0], w = a.shape[1]
    out = np.empty((h, w), dtype=np.uint8)
    cdef unsigned char[:, ::1] o = out
    cdef Py_ssize_t r, c
    cdef double t
    with nogil:
        for r in range(h):
            for c in range(w):
                t = 0.299 * <double>a[r, c, 0] + 0.587 * <double>a[r, c, 1]
                t = t + 0.114 * <double>a[r, c, 2]
                o[r, c] = <unsigned char>floor(t + 0.5)
    return out


def block_variance(gray, Py_ssize_t block):
    """Population variance per non-overlapping block x block cell (exact sums)."""
    arr = np.ascontiguousarray(gray)
    cdef const unsigned char[:, ::1] g = arr
    cdef Py_ssize_t nbh = g.shape[0] // block
    cdef Py_ssize_t nbw = g.shape[1] // block
    out = np.empty((nbh, nbw), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t bi, bj, r, c
    cdef long long s, s2, v, n = block * block
    with nogil:
        for bi in range(nbh):
            for bj in range(nbw):
                s = 0
                s2 = 0
                for r in range(bi * block, (bi + 1) * block):
                    for c in range(bj * block, (bj + 1) * block):
                        v = g[r, c]
                        s = s + v
                        s2 = s2 + v * v
                o[bi, bj] = <double>(n * s2 - s * s) / <double>(n * n)
    return out
