"""Fixed-point triangle setup and pixel-centre coverage shared by the oracle and the simulator.

Vertices snap to 1/256 pixel. Edge functions are evaluated in exact int64
arithmetic, so two triangles sharing an edge never both own a pixel centre
lying on it (top-left rule).
"""
from __future__ import annotations

import numpy as np

SUBPIXEL_BITS = 8
SUBPIXEL = 1 << SUBPIXEL_BITS
HALF = SUBPIXEL // 2
GUARD_BAND = 1 << 21  # pixels; vertices are clamped here before snapping


def snap(vertices) -> np.ndarray:
    v = np.clip(np.asarray(vertices, dtype=np.float64), -GUARD_BAND, GUARD_BAND)
    return np.round(v * SUBPIXEL).astype(np.int64)


def setup_triangles(triangles) -> np.ndarray:
    """Edge coefficients for (m, 3, 2) float triangles.

    Returns an int64 array (m, 3, 3): for each edge (A, B, C') such that a
    pixel centre at subpixel (X, Y) is inside iff A*X + B*Y + C' > 0 for all
    three edges; the top-left tie bias is folded into C'. Degenerate
    triangles get all-zero rows (never covering anything).
    """
    v = snap(triangles).reshape(-1, 3, 2)
    ax, ay = v[:, 0, 0], v[:, 0, 1]
    bx, by = v[:, 1, 0], v[:, 1, 1]
    cx, cy = v[:, 2, 0], v[:, 2, 1]
    area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    flip = area < 0
    bx, cx = np.where(flip, cx, bx), np.where(flip, bx, cx)
    by, cy = np.where(flip, cy, by), np.where(flip, by, cy)
    out = np.zeros((len(v), 3, 3), dtype=np.int64)
    for e, (px, py, qx, qy) in enumerate(((ax, ay, bx, by), (bx, by, cx, cy), (cx, cy, ax, ay))):
        dx, dy = qx - px, qy - py
        top_left = (dy < 0) | ((dy == 0) & (dx > 0))
        out[:, e, 0] = -dy
        out[:, e, 1] = dx
        out[:, e, 2] = dy * px - dx * py + top_left.astype(np.int64)
    out[area == 0] = 0
    return out


def pixel_bbox(triangle, width: int, height: int) -> tuple[int, int, int, int] | None:
    """Inclusive pixel range (x0, y0, x1, y1) whose centres can lie in the triangle, clipped."""
    v = snap(triangle).reshape(3, 2)
    lo = v.min(axis=0) - HALF
    hi = v.max(axis=0) - HALF
    x0, y0 = int(-(-lo[0] // SUBPIXEL)), int(-(-lo[1] // SUBPIXEL))
    x1, y1 = int(hi[0] // SUBPIXEL), int(hi[1] // SUBPIXEL)
    x0, y0 = max(x0, 0), max(y0, 0)
    x1, y1 = min(x1, width - 1), min(y1, height - 1)
    if x0 > x1 or y0 > y1:
        return None
    return x0, y0, x1, y1


def coverage(edges: np.ndarray, x0: int, y0: int, w: int, h: int) -> np.ndarray:
    """Bool mask (h, w) of pixel centres inside one set-up triangle ``edges`` (3, 3)."""
    xs = (np.arange(x0, x0 + w, dtype=np.int64) << SUBPIXEL_BITS) + HALF
    ys = (np.arange(y0, y0 + h, dtype=np.int64) << SUBPIXEL_BITS) + HALF
    mask = None
    for a, b, c in edges:
        if a == 0 and b == 0:
            return np.zeros((h, w), dtype=bool)
        e = (b * ys + c)[:, None] + (a * xs)[None, :]
        m = e > 0
        mask = m if mask is None else (mask & m)
    return mask


def covers_point(edges: np.ndarray, px: int, py: int) -> bool:
    """Scalar coverage of pixel (px, py); used by brute-force tests."""
    X = (px << SUBPIXEL_BITS) + HALF
    Y = (py << SUBPIXEL_BITS) + HALF
    if not edges.any():
        return False
    return all(int(a) * X + int(b) * Y + int(c) > 0 for a, b, c in edges)
