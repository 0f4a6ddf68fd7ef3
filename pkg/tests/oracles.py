"""Independent reference implementations used only by the tests."""

from __future__ import annotations

import numpy as np

AXES = {"xy": (0, 1), "xz": (0, 2), "yz": (1, 2)}


def dense_bilinear(grid: np.ndarray, u: float, v: float) -> np.ndarray:
    """Evaluate the piecewise-bilinear interpolant as an explicit sum of tent functions."""
    c, r0, r1 = grid.shape
    u = min(max(u, 0.0), r0 - 1)
    v = min(max(v, 0.0), r1 - 1)
    out = np.zeros(c)
    for i in range(r0):
        wu = max(0.0, 1.0 - abs(u - i))
        if wu == 0.0:
            continue
        for j in range(r1):
            wv = max(0.0, 1.0 - abs(v - j))
            if wv:
                out += wu * wv * grid[:, i, j]
    return out


def triplane_query(planes: dict[str, np.ndarray], extent: float, p) -> np.ndarray:
    res = planes["xy"].shape[1]
    g = [(p[a] + extent) / (2 * extent) * (res - 1) for a in range(3)]
    total = 0.0
    for name, (a, b) in AXES.items():
        total = total + dense_bilinear(planes[name], g[a], g[b])
    return total / 3.0


def painter_raster(uv: np.ndarray, depth: np.ndarray, triangles: np.ndarray, colors: np.ndarray, width: int, height: int):
    """Per-pixel back-to-front painter: gather every covering fragment, paint far to near.

    Fragments at equal depth are painted higher triangle index first so the
    lowest index ends on top. Coverage uses pixel centers with a top-left
    ownership rule on shared edges. Returns ``(rgb, mask, tri_id)``.
    """
    a, b, c = (uv[triangles[:, i]] for i in range(3))
    # signed doubled area; positive means counter-clockwise in (u, v)
    area = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1])
    rgb = np.zeros((height, width, 3))
    mask = np.zeros((height, width), dtype=bool)
    tri_id = np.full((height, width), -1)
    valid = area != 0
    for y in range(height):
        for x in range(width):
            px, py = x + 0.5, y + 0.5
            lam = []
            inside = valid.copy()
            for p0, p1, opp in ((b, c, 0), (c, a, 1), (a, b, 2)):
                # barycentric weight of the vertex opposite edge p0->p1
                e = ((p1[:, 0] - p0[:, 0]) * (py - p0[:, 1]) - (p1[:, 1] - p0[:, 1]) * (px - p0[:, 0]))
                e = np.where(area > 0, e, -e)
                dx = np.where(area > 0, p1[:, 0] - p0[:, 0], p0[:, 0] - p1[:, 0])
                dy = np.where(area > 0, p1[:, 1] - p0[:, 1], p0[:, 1] - p1[:, 1])
                owner = (dy < 0) | ((dy == 0) & (dx > 0))
                inside &= (e > 0) | ((e == 0) & owner)
                lam.append(e)
            idx = np.nonzero(inside)[0]
            if idx.size == 0:
                continue
            w = np.stack([lam[0][idx], lam[1][idx], lam[2][idx]], axis=1) / np.abs(area[idx])[:, None]
            tri = triangles[idx]
            z = np.sum(w * depth[tri], axis=1)
            order = np.lexsort((-idx, -z))  # far first, then higher index first
            for o in order:
                col = w[o] @ colors[tri[o]]
                rgb[y, x] = col
                tri_id[y, x] = idx[o]
            mask[y, x] = True
    return rgb, mask, tri_id


def l1_loop(values: np.ndarray) -> float:
    total = 0.0
    for v in values.reshape(-1):
        total += abs(float(v))
    return total


def mse_loop(a: np.ndarray, b: np.ndarray, mask: np.ndarray | None = None) -> float:
    h, w = a.shape[:2]
    total, count = 0.0, 0
    for y in range(h):
        for x in range(w):
            if mask is not None and not mask[y, x]:
                continue
            for ch in range(a.shape[2]):
                d = float(a[y, x, ch]) - float(b[y, x, ch])
                total += d * d
                count += 1
    return total / count


def ssim_loop(a: np.ndarray, b: np.ndarray, k1=0.01, k2=0.03, sigma=1.5, size=11) -> float:
    """Windowed SSIM evaluated window by window with explicit weighted sums."""
    half = size // 2
    ax = np.arange(size) - half
    g = np.exp(-(ax**2) / (2 * sigma**2))
    win = np.outer(g, g)
    win /= win.sum()
    c1, c2 = k1**2, k2**2
    vals = []
    for y in range(a.shape[0] - size + 1):
        for x in range(a.shape[1] - size + 1):
            pa = a[y : y + size, x : x + size]
            pb = b[y : y + size, x : x + size]
            mu_a = float(np.sum(win * pa))
            mu_b = float(np.sum(win * pb))
            va = float(np.sum(win * (pa - mu_a) ** 2))
            vb = float(np.sum(win * (pb - mu_b) ** 2))
            cov = float(np.sum(win * (pa - mu_a) * (pb - mu_b)))
            vals.append(((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a**2 + mu_b**2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))
