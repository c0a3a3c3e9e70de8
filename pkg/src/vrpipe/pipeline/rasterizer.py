"""Setup, coarse raster and fine raster of one triangle inside one screen tile."""
from __future__ import annotations

import numpy as np

from ..raster import coverage
from ..reference import alpha_at, premultiply
from .packets import QuadPacket


def coarse_tiles(box, tile_x0: int, tile_y0: int, screen_tile: int, raster_tile: int) -> int:
    """Raster tiles of the screen tile whose extent overlaps the triangle's pixel AABB."""
    x0, y0, x1, y1 = box
    bx0 = max(x0, tile_x0) - tile_x0
    by0 = max(y0, tile_y0) - tile_y0
    bx1 = min(x1, tile_x0 + screen_tile - 1) - tile_x0
    by1 = min(y1, tile_y0 + screen_tile - 1) - tile_y0
    if bx0 > bx1 or by0 > by1:
        return 0
    return (bx1 // raster_tile - bx0 // raster_tile + 1) * (by1 // raster_tile - by0 // raster_tile + 1)


def rasterize(prims, edges, tri: int, tile: int, targets, config, shade: bool = True) -> list[QuadPacket]:
    """Covered quads of triangle ``tri`` in ``tile``, row-major, with fragment colours attached.

    Fragment colours are evaluated here in bulk for speed; the shader stage
    still owns when they count as shaded and which fragments survive.
    """
    S = config.screen_tile
    tiles_x = targets.tiles_x
    ty, tx = divmod(tile, tiles_x)
    x0, y0 = tx * S, ty * S
    w = min(S, targets.width - x0)
    h = min(S, targets.height - y0)
    mask = coverage(edges[tri], x0, y0, w, h)
    if not mask.any():
        return []
    full = np.zeros((S, S), dtype=bool)
    full[:h, :w] = mask
    n = S // 2
    frag = full.reshape(n, 2, n, 2).transpose(0, 2, 1, 3).reshape(n, n, 4).astype(np.int64)
    covbits = frag[..., 0] | frag[..., 1] << 1 | frag[..., 2] << 2 | frag[..., 3] << 3
    qys, qxs = np.nonzero(covbits)

    rgba = prune_bits = None
    if shade:
        k = tri // 2
        ys, xs = np.nonzero(mask)
        alpha = alpha_at(prims.mean2d[k], prims.conic[k], prims.opacity[k],
                         xs + (x0 + 0.5), ys + (y0 + 0.5), config.alpha_max)
        src = premultiply(alpha, prims.rgb[k])
        rgba = np.zeros((n, n, 4, 4), dtype=np.float32)
        f = (ys & 1) * 2 + (xs & 1)
        rgba[ys >> 1, xs >> 1, f] = src
        pm = np.zeros((n, n, 4), dtype=np.int64)
        pm[ys >> 1, xs >> 1, f] = src[:, 3] < np.float32(config.prune_epsilon)
        prune_bits = pm[..., 0] | pm[..., 1] << 1 | pm[..., 2] << 2 | pm[..., 3] << 3

    quads_x = targets.quads_x
    base = (y0 >> 1) * quads_x + (x0 >> 1)
    prim = tri // 2
    out = []
    for qy, qx, cov in zip(qys.tolist(), qxs.tolist(), covbits[qys, qxs].tolist()):
        out.append(QuadPacket(
            tile=tile, qx=qx, qy=qy, pos=base + qy * quads_x + qx, cov=cov, ordinal=tri, prim=prim,
            rgba=rgba[qy, qx] if shade else None,
            prune=int(prune_bits[qy, qx]) if shade else 0,
        ))
    return out
