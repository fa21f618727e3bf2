# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled image resampling kernels.

Same sampling conventions as kernels.reference: half-pixel-center bilinear
interpolation with edge clamping, and centered 2x2 affine sampling maps.
Interpolation arithmetic is single precision in both backends so results
agree to float32 round-off.
"""

import numpy as np

cimport cython
from libc.math cimport floor


cdef inline Py_ssize_t _clamp(Py_ssize_t v, Py_ssize_t lo, Py_ssize_t hi) nogil:
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


cdef void _warp_rows(
    const float[:, :, ::1] src,
    float[:, :, ::1] out,
    const float[::1] sy_row,
    const float[::1] sx_col,
    bint separable,
    float cy, float cx, float m00, float m01, float m10, float m11,
) nogil:
    """Shared bilinear gather. separable=True uses sy_row/sx_col grids
    (resize); otherwise coordinates come from the affine map."""
    cdef Py_ssize_t h = src.shape[0]
    cdef Py_ssize_t w = src.shape[1]
    cdef Py_ssize_t c = src.shape[2]
    cdef Py_ssize_t oh = out.shape[0]
    cdef Py_ssize_t ow = out.shape[1]
    cdef Py_ssize_t i, j, k, y0, x0, y0c, y1c, x0c, x1c
    cdef float sy, sx, wy, wx, vy, vx, top, bot

    for i in range(oh):
        for j in range(ow):
            if separable:
                sy = sy_row[i]
                sx = sx_col[j]
            else:
                vy = <float>i - cy
                vx = <float>j - cx
                sy = cy + m00 * vy + m01 * vx
                sx = cx + m10 * vy + m11 * vx
            y0 = <Py_ssize_t>floor(sy)
            x0 = <Py_ssize_t>floor(sx)
            wy = sy - <float>y0
            wx = sx - <float>x0
            y0c = _clamp(y0, 0, h - 1)
            y1c = _clamp(y0 + 1, 0, h - 1)
            x0c = _clamp(x0, 0, w - 1)
            x1c = _clamp(x0 + 1, 0, w - 1)
            for k in range(c):
                top = src[y0c, x0c, k] * (1.0 - wx) + src[y0c, x1c, k] * wx
                bot = src[y1c, x0c, k] * (1.0 - wx) + src[y1c, x1c, k] * wx
                out[i, j, k] = top * (1.0 - wy) + bot * wy


def bilinear_resize(src, Py_ssize_t out_h, Py_ssize_t out_w):
    """Resize an (H, W, C) float32 image to (out_h, out_w, C)."""
    src = np.ascontiguousarray(src, dtype=np.float32)
    if src.ndim != 3:
        raise ValueError(f"expected (H, W, C) image, got shape {src.shape}")
    if out_h < 1 or out_w < 1:
        raise ValueError("output dimensions must be positive")
    cdef Py_ssize_t h = src.shape[0]
    cdef Py_ssize_t w = src.shape[1]
    if out_h == h and out_w == w:
        return src.copy()

    sy = ((np.arange(out_h, dtype=np.float64) + 0.5) * (<double>h / <double>out_h) - 0.5).astype(np.float32)
    sx = ((np.arange(out_w, dtype=np.float64) + 0.5) * (<double>w / <double>out_w) - 0.5).astype(np.float32)
    out = np.empty((out_h, out_w, src.shape[2]), dtype=np.float32)

    cdef const float[:, :, ::1] src_v = src
    cdef float[:, :, ::1] out_v = out
    cdef const float[::1] sy_v = sy
    cdef const float[::1] sx_v = sx
    with nogil:
        _warp_rows(src_v, out_v, sy_v, sx_v, True, 0, 0, 0, 0, 0, 0)
    return out


def affine_warp(src, double m00, double m01, double m10, double m11):
    """Warp an (H, W, C) float32 image through a centered 2x2 sampling matrix."""
    src = np.ascontiguousarray(src, dtype=np.float32)
    if src.ndim != 3:
        raise ValueError(f"expected (H, W, C) image, got shape {src.shape}")
    cdef Py_ssize_t h = src.shape[0]
    cdef Py_ssize_t w = src.shape[1]
    out = np.empty_like(src)
    dummy = np.zeros(1, dtype=np.float32)

    cdef const float[:, :, ::1] src_v = src
    cdef float[:, :, ::1] out_v = out
    cdef const float[::1] dummy_v = dummy
    cdef float cy = <float>((h - 1) / 2.0)
    cdef float cx = <float>((w - 1) / 2.0)
    with nogil:
        _warp_rows(src_v, out_v, dummy_v, dummy_v, False,
                   cy, cx, <float>m00, <float>m01, <float>m10, <float>m11)
    return out
