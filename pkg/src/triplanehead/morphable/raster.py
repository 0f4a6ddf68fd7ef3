"""Software triangle rasterizer with a Z-buffer.

Coverage is tested at pixel centers ``(x + 0.5, y + 0.5)``. Each triangle is
first oriented to positive signed area; a pixel center exactly on an edge
belongs to the triangle only if that oriented edge is a "top-left" edge
(``dy < 0``, or ``dy == 0`` and ``dx > 0``), so shared edges are owned by
exactly one side. Attributes and depth are interpolated with screen-space
(affine) barycentrics. Depth test is strict less-than in triangle index
order, so equal depths keep the lower triangle index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class RasterError(ValueError):
    pass


@dataclass
class Raster:
    attrs: np.ndarray  # (H, W, K), zero where uncovered
    mask: np.ndarray  # (H, W) bool
    depth: np.ndarray  # (H, W), inf where uncovered
    tri_id: np.ndarray  # (H, W), -1 where uncovered


def _edge(p0, p1, px, py):
    return (p1[0] - p0[0]) * (py - p0[1]) - (p1[1] - p0[1]) * (px - p0[0])


def rasterize(uv: np.ndarray, depth: np.ndarray, triangles: np.ndarray, attrs: np.ndarray, width: int, height: int) -> Raster:
    """Rasterize projected triangles; ``uv`` in pixels, ``depth`` per vertex (camera z)."""
    if np.any(~np.isfinite(uv)) or np.any(depth <= 0):
        raise RasterError("vertices must project in front of the camera")
    k = attrs.shape[1]
    zbuf = np.full((height, width), np.inf)
    out = np.zeros((height, width, k))
    tri_id = np.full((height, width), -1)
    for t, (ia, ib, ic) in enumerate(triangles):
        a, b, c = uv[ia], uv[ib], uv[ic]
        area = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
        if area == 0:
            continue
        sign = 1.0 if area > 0 else -1.0
        lo = np.minimum(np.minimum(a, b), c)
        hi = np.maximum(np.maximum(a, b), c)
        x0, x1 = max(int(np.ceil(lo[0] - 0.5)), 0), min(int(np.floor(hi[0] - 0.5)), width - 1)
        y0, y1 = max(int(np.ceil(lo[1] - 0.5)), 0), min(int(np.floor(hi[1] - 0.5)), height - 1)
        if x0 > x1 or y0 > y1:
            continue
        px, py = np.meshgrid(np.arange(x0, x1 + 1) + 0.5, np.arange(y0, y1 + 1) + 0.5)
        inside = np.ones(px.shape, dtype=bool)
        lam = []
        for p0, p1 in ((b, c), (c, a), (a, b)):
            # oriented as if the triangle had positive area
            e = _edge(p0, p1, px, py) * sign
            dx, dy = (p1[0] - p0[0]) * sign, (p1[1] - p0[1]) * sign
            owner = dy < 0 or (dy == 0 and dx > 0)
            inside &= ((e > 0) | (e == 0)) if owner else (e > 0)
            lam.append(e)
        if not inside.any():
            continue
        w0, w1, w2 = (l / abs(area) for l in lam)
        z = w0 * depth[ia] + w1 * depth[ib] + w2 * depth[ic]
        region = zbuf[y0 : y1 + 1, x0 : x1 + 1]
        win = inside & (z < region)
        if not win.any():
            continue
        region[win] = z[win]
        col = w0[..., None] * attrs[ia] + w1[..., None] * attrs[ib] + w2[..., None] * attrs[ic]
        out[y0 : y1 + 1, x0 : x1 + 1][win] = col[win]
        tri_id[y0 : y1 + 1, x0 : x1 + 1][win] = t
    mask = tri_id >= 0
    return Raster(out, mask, zbuf, tri_id)
