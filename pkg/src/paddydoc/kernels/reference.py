"""Pure-NumPy image resampling kernels.

These are the fallback implementations used when the compiled extension is
unavailable. Both backends implement the same sampling conventions and must
agree to float32 round-off:

* bilinear interpolation with half-pixel centers
  (source coordinate = (dst + 0.5) * src_size / dst_size - 0.5),
* sampling coordinates outside the image are clamped to the edge pixels
  (edge replication),
* affine warps map output pixels through a 2x2 matrix about the image
  center: [sy - cy, sx - cx] = M @ [y - cy, x - cx].
"""

import numpy as np

__all__ = ["bilinear_resize", "affine_warp"]


def _sample_bilinear(src: np.ndarray, sy: np.ndarray, sx: np.ndarray) -> np.ndarray:
    """Gather bilinear samples at fractional (sy, sx) grids, edge-clamped."""
    h, w = src.shape[0], src.shape[1]
    y0 = np.floor(sy).astype(np.int64)
    x0 = np.floor(sx).astype(np.int64)
    wy = (sy - y0).astype(np.float32)
    wx = (sx - x0).astype(np.float32)

    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)

    wy = wy[..., None]
    wx = wx[..., None]
    top = src[y0c[:, None], x0c[None, :]] * (1.0 - wx) + src[y0c[:, None], x1c[None, :]] * wx
    bot = src[y1c[:, None], x0c[None, :]] * (1.0 - wx) + src[y1c[:, None], x1c[None, :]] * wx
    return (top * (1.0 - wy[:, None]) + bot * wy[:, None]).astype(np.float32)


def bilinear_resize(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize an (H, W, C) float32 image to (out_h, out_w, C)."""
    src = np.ascontiguousarray(src, dtype=np.float32)
    if src.ndim != 3:
        raise ValueError(f"expected (H, W, C) image, got shape {src.shape}")
    h, w = src.shape[0], src.shape[1]
    if out_h < 1 or out_w < 1:
        raise ValueError("output dimensions must be positive")
    if out_h == h and out_w == w:
        return src.copy()
    sy = ((np.arange(out_h, dtype=np.float64) + 0.5) * (h / out_h) - 0.5).astype(np.float32)
    sx = ((np.arange(out_w, dtype=np.float64) + 0.5) * (w / out_w) - 0.5).astype(np.float32)
    return _sample_bilinear(src, sy, sx)


def affine_warp(src: np.ndarray, m00: float, m01: float, m10: float, m11: float) -> np.ndarray:
    """Warp an (H, W, C) float32 image through a centered 2x2 sampling matrix.

    Output pixel (y, x) takes its value from source location
    (cy + m00*(y-cy) + m01*(x-cx), cx + m10*(y-cy) + m11*(x-cx)).
    """
    src = np.ascontiguousarray(src, dtype=np.float32)
    if src.ndim != 3:
        raise ValueError(f"expected (H, W, C) image, got shape {src.shape}")
    h, w = src.shape[0], src.shape[1]
    cy = (h - 1) / 2.0
    cx = (w - 1) / 2.0
    vy = np.arange(h, dtype=np.float32) - np.float32(cy)
    vx = np.arange(w, dtype=np.float32) - np.float32(cx)
    sy = np.float32(cy) + np.float32(m00) * vy[:, None] + np.float32(m01) * vx[None, :]
    sx = np.float32(cx) + np.float32(m10) * vy[:, None] + np.float32(m11) * vx[None, :]

    # per-pixel grids: reuse the gather with flattened fancy indexing
    y0 = np.floor(sy).astype(np.int64)
    x0 = np.floor(sx).astype(np.int64)
    wy = (sy - y0).astype(np.float32)[..., None]
    wx = (sx - x0).astype(np.float32)[..., None]
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    top = src[y0c, x0c] * (1.0 - wx) + src[y0c, x1c] * wx
    bot = src[y1c, x0c] * (1.0 - wx) + src[y1c, x1c] * wx
    return (top * (1.0 - wy) + bot * wy).astype(np.float32)
